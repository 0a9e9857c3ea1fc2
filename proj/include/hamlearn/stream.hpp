#pragma once

#include <optional>
#include <vector>

#include "hamlearn/stream_item.hpp"

namespace hl {

/// A token sequence with optional per-token targets (a target may be
/// attached only to some positions, e.g. the last one).
struct Sequence {
  std::vector<Tensor> tokens;
  std::vector<std::optional<Tensor>> targets;
};

/// Finite stream of timestamped items consumed by one reader. Timestamps
/// strictly increase; construction enforces it.
class StreamSource {
 public:
  /// Streams (u, y_hat) samples, delta = 1 on every item, evenly spaced,
  /// wrapping around the dataset `epochs` times. A shuffle seed reshuffles
  /// the order every epoch, deterministically.
  static StreamSource from_dataset(const std::vector<std::pair<Tensor, Tensor>>& samples,
                                   std::optional<std::uint64_t> shuffle_seed, double spacing,
                                   std::size_t epochs = 1);

  /// Streams sequences token by token, delta = 1 exactly on each sequence's
  /// last token.
  static StreamSource tokenize_sequences(const std::vector<Sequence>& seqs, double spacing);

  /// Forward tokens t_0..t_{n-1} then t_{n-2}..t_0 (2n-1 items, the pivot is
  /// not repeated). Targets ride along with their original token.
  static StreamSource reverse_replay(const Sequence& seq, double spacing);

  /// Arbitrary pre-built items (supports unevenly spaced timestamps).
  static StreamSource from_items(std::vector<StreamItem> items);

  std::optional<StreamItem> next();
  void reset() { cursor_ = 0; }
  std::size_t size() const { return items_.size(); }
  const StreamItem& at(std::size_t i) const { return items_.at(i); }

  /// Busy-agent decimation: drops every item that arrives while the agent
  /// is still processing the previous kept one (fixed processing duration).
  StreamSource drop_while_busy(double processing_duration) const;

 private:
  explicit StreamSource(std::vector<StreamItem> items);
  std::vector<StreamItem> items_;
  std::size_t cursor_ = 0;
};

/// Time reflection retrieving stored-state indices during the replay phase:
/// t -> 2 t_last - 2 tau - t, defined for t > t_last.
double psi_map(double t, double t_last, double tau);

}  // namespace hl
