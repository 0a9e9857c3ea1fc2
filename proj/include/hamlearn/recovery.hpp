#pragma once

#include <deque>
#include <optional>

#include "hamlearn/hamilton.hpp"
#include "hamlearn/stream.hpp"

namespace hl {

enum class RecoveryKind { ff_output, ff_state, rnn_unfold, rnn_hl_bptt, rnn_truncated };

/// A runnable gradient-recovery configuration: which construction, what the
/// reset policy does between samples/sequences, and the truncation window.
struct RecoveryMode {
  RecoveryKind kind = RecoveryKind::ff_output;
  bool reset_omega_each_sample = false;  // strips momentum in feed-forward modes
  bool reset_omega_at_pivot = true;      // false keeps momentum across sequences
  std::size_t window = 0;                // rnn_truncated: r
};

struct RunRow {
  std::size_t step = 0;
  double time = 0.0;
  double loss = 0.0;      // NaN when the item carried no target
  double accuracy = 0.0;  // argmax match; NaN when no target
};

struct RunRecord {
  std::vector<RunRow> rows;
  ModelState final_state;
  Costate final_costate;
  std::vector<Tensor> theta_trail;  // per-step concat(theta_h, theta_y) when requested
};

/// Ring of state snapshots keyed by integer step index. Capacity 0 keeps
/// everything; otherwise only the most recent `capacity` entries survive
/// and older lookups raise a diagnostic error.
class StoredTrajectory {
 public:
  explicit StoredTrajectory(std::size_t capacity = 0) : capacity_(capacity) {}
  void store(std::size_t index, Tensor h);
  const Tensor& at(std::size_t index) const;
  std::size_t retained() const { return ring_.size(); }

 private:
  std::size_t capacity_;
  std::size_t base_ = 0;  // index of ring_.front()
  std::deque<Tensor> ring_;
};

/// One feed-forward-through-the-state-net update: the state and its costate
/// are cleared, the loss is evaluated on the freshly produced state, and
/// the weight costate integrates the loss gradient directly.
StepResult ff_state_step(ModelState& state, Costate& costate, const StreamItem& item,
                         const HLConfig& cfg, const LossSpec& loss, const NetSpec& spec,
                         double step_tau);

struct ReplayOptions {
  bool reset_omega_at_pivot = true;
  std::size_t window = 0;            // 0 = full sequence
  bool apply_theta_update = true;    // single update on the final item
  bool compute_oracle_diff = true;   // compare against bptt_gradients
  std::size_t ring_capacity = 0;     // 0 = store all states
};

struct ReplayResult {
  Tensor omega_h;               // gradient accumulator after the final item
  double grad_oracle_diff = 0;  // max relative gap vs the BPTT oracle
  double total_loss = 0.0;
  Costate costate;
  std::vector<RunRow> rows;
};

/// Streams the sequence forward then in reverse (pivot not repeated),
/// freezing weights until the final item. z restarts at the pivot; the
/// costate recursions then integrate against stored states, reproducing
/// backprop-through-time when tau*phi = 1 and eta = 0.
ReplayResult hl_bptt_replay(const Sequence& seq, const NetSpec& spec, const HLConfig& cfg,
                            const LossSpec& loss, ModelState& state, Costate& costate,
                            const ReplayOptions& opts = {});

/// Window-r variant: replays only the last r-1 tokens; r = 1 degenerates to
/// a feed-forward update on the final token, r = n is the full replay.
ReplayResult truncated_replay(const Sequence& seq, std::size_t r, const NetSpec& spec,
                              const HLConfig& cfg, const LossSpec& loss, ModelState& state,
                              Costate& costate, const ReplayOptions& opts = {});

struct RunOptions {
  bool record_theta_trail = false;
};

/// Executes a full run of `mode` over the stream: per-item updates for the
/// feed-forward kinds, per-sequence replay for the recurrent kinds
/// (sequence boundaries taken from the delta tags).
RunRecord run_mode(const RecoveryMode& mode, StreamSource source, const NetSpec& spec,
                   HLConfig cfg, const LossSpec& loss, ModelState state,
                   const RunOptions& opts = {});

}  // namespace hl
