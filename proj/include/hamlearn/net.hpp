#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "hamlearn/tape.hpp"
#include "hamlearn/tensor.hpp"

namespace hl {

enum class Activation { identity, tanh, relu, softmax };

/// y = act(W x + b), W is out x in.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  Activation act = Activation::identity;
  bool bias = true;
};

/// One-step cell h' = act(Wu x + Wh h + b). Inside a state net it reads the
/// model state; inside an output net it unrolls over the rows of a matrix
/// input, starting from zeros.
struct RecurrentLayer {
  std::size_t in = 0, hidden = 0;
  Activation act = Activation::tanh;
  bool bias = true;
};

struct IdentityLayer {};

/// Passes through a contiguous slice of its input.
struct SelectorLayer {
  std::size_t offset = 0, len = 0;
};

using Layer = std::variant<DenseLayer, RecurrentLayer, IdentityLayer, SelectorLayer>;

enum class ResidualMode { plain, instantaneous };
enum class StateComposition { chained, grouped };
enum class ChainSeed { input_only, state_only, input_and_state };

/// Model snapshot: neuron state plus the two parameter blocks. The
/// theta = [theta_h, theta_y] partition is fixed for the life of a model.
struct ModelState {
  Tensor h;
  Tensor theta_h;
  Tensor theta_y;

  Tensor theta() const { return concat({theta_h, theta_y}); }
};

/// Declarative description of the state network (how the neuron state
/// moves) and the recurrence-free output network.
class NetSpec {
 public:
  std::vector<Layer> state_layers;
  std::vector<Layer> output_layers;
  ResidualMode residual_mode = ResidualMode::plain;
  StateComposition state_composition = StateComposition::chained;
  ChainSeed state_seed = ChainSeed::input_only;
  ChainSeed output_seed = ChainSeed::state_only;
  std::size_t input_dim = 0;

  void validate() const;

  std::size_t state_dim() const;
  std::size_t output_dim() const;
  std::size_t theta_h_size() const;
  std::size_t theta_y_size() const;

  /// Contiguous state ranges owned by each grouped layer; grouped mode only.
  std::vector<std::pair<std::size_t, std::size_t>> group_partition() const;
  std::size_t group_count() const { return state_layers.size(); }

  bool output_is_identity() const;

  /// Raw network value f_hat(u, h, theta_h) before any residual shaping.
  NodeId eval_fhat(Tape& tape, NodeId u, NodeId h, NodeId theta_h) const;
  /// Output map y = f_y(u, h, theta_y).
  NodeId eval_output(Tape& tape, NodeId u, NodeId h, NodeId theta_y) const;

  /// State velocity per the residual mode: plain -> f_hat itself,
  /// instantaneous -> (-h + f_hat) / tau. Returns (hdot, fhat).
  std::pair<NodeId, NodeId> eval_state_velocity(Tape& tape, NodeId u, NodeId h,
                                                NodeId theta_h, double tau) const;

  /// Grouped velocity with only group mod(step, nu) active:
  /// mask .* (-h + f_hat) / tau.
  std::pair<NodeId, NodeId> eval_masked_velocity(Tape& tape, NodeId u, NodeId h,
                                                 NodeId theta_h, double tau,
                                                 std::size_t step_index) const;

  Tensor init_theta_h(std::mt19937_64& rng) const;
  Tensor init_theta_y(std::mt19937_64& rng) const;
  ModelState init_state(std::uint64_t seed, bool random_h = false) const;
};

// Convenience value-level wrappers (scratch tape per call).
Tensor eval_state_net(const Tensor& u, const ModelState& state, const NetSpec& spec,
                      double tau);
Tensor eval_output_net(const Tensor& u, const ModelState& state, const NetSpec& spec);
Tensor residual_state_fn(const Tensor& u, const ModelState& state, const NetSpec& spec,
                         double tau);
Tensor masked_group_update(const Tensor& u, const ModelState& state, const NetSpec& spec,
                           double tau, std::size_t step_index);

}  // namespace hl
