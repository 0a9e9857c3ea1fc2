#pragma once

#include <optional>

#include "hamlearn/net.hpp"
#include "hamlearn/stream_item.hpp"
#include "hamlearn/tape.hpp"

namespace hl {

/// Adjoint pair mirroring ModelState: z pairs with h, omega with theta.
struct Costate {
  Tensor z;
  Tensor omega_h;
  Tensor omega_y;

  static Costate zeros_like(const ModelState& state) {
    return {Tensor::zeros(state.h.shape()), Tensor::zeros(state.theta_h.shape()),
            Tensor::zeros(state.theta_y.shape())};
  }
  Tensor omega() const { return concat({omega_h, omega_y}); }
};

/// Loss scale over time: constant a, exponential a*e^(b t), or 1/tau.
struct PhiSchedule {
  enum class Kind { constant, exponential, reciprocal_tau };
  Kind kind = Kind::constant;
  double a = 1.0;
  double b = 0.0;

  static PhiSchedule constant(double v) { return {Kind::constant, v, 0.0}; }
  static PhiSchedule exponential(double a0, double b0) { return {Kind::exponential, a0, b0}; }
  static PhiSchedule reciprocal_tau() { return {Kind::reciprocal_tau, 1.0, 0.0}; }

  double value(double t, double step_tau) const;
};

enum class Ordering {
  simultaneous,  // theta update reads the pre-step omega
  sequential,    // theta update reads the just-integrated omega
};

struct HLConfig {
  double tau = 1.0;
  Tensor beta;       // per-parameter, length |theta_h| + |theta_y|
  double eta = 0.0;
  PhiSchedule phi;
  int s = -1;        // +1 exposed only to probe the time-direction sign
  Ordering ordering = Ordering::simultaneous;

  static Tensor uniform_beta(double value, std::size_t n) { return Tensor::full({n}, value); }
};

struct LossSpec {
  enum class Kind { mse, softmax_cross_entropy };
  Kind kind = Kind::mse;

  NodeId apply(Tape& tape, NodeId pred, NodeId target) const;
  double eval(const Tensor& pred, const Tensor& target) const;
};

/// H'(h, theta) = L(y, y_hat) * phi_t + z^T hdot, assembled on a fresh tape
/// so its partials drive the costate equations. The loss term is omitted
/// when the item carries no target.
struct HamiltonianEval {
  Tape tape;
  NodeId u = 0, h = 0, theta_h = 0, theta_y = 0;
  NodeId hdot = 0, fhat = 0, y = 0;
  NodeId hprime = 0;
  bool has_hprime = false;
  std::optional<double> loss_value;
};

HamiltonianEval hamiltonian_eval(const ModelState& state, const Costate& costate,
                                 const StreamItem& item, double t, const HLConfig& cfg,
                                 const LossSpec& loss, const NetSpec& spec, double step_tau,
                                 std::optional<std::size_t> group_step = std::nullopt);

/// Scalar value of the Robust Hamiltonian at the current state/costate.
double robust_hamiltonian(const ModelState& state, const Costate& costate,
                          const StreamItem& item, double t, const HLConfig& cfg,
                          const LossSpec& loss, const NetSpec& spec, double step_tau);

/// hdot = f_h(u, h, theta_h); identical to the state-network evaluation.
Tensor he_state_rhs(const Tensor& u, const ModelState& state, const NetSpec& spec, double tau);

struct ParamRhs {
  Tensor theta_h_dot;
  Tensor theta_y_dot;
};

/// theta_dot = -beta .* omega, elementwise over the concatenated parameters.
ParamRhs he_param_rhs(const Costate& costate, const HLConfig& cfg,
                      const Tensor* beta_override = nullptr);

struct CostateRhs {
  Tensor z_dot;
  Tensor omega_h_dot;
  Tensor omega_y_dot;
};

/// z_dot = -s (dH'/dh)^T - eta z and the split omega_dot = -s (dH'/dtheta)^T
/// - eta omega, all partials taken from one backward pass over H'.
CostateRhs he_costate_rhs(const ModelState& state, const Costate& costate,
                          const StreamItem& item, double t, const HLConfig& cfg,
                          const LossSpec& loss, const NetSpec& spec, double step_tau);

/// Forward Euler: value + tau * rate.
Tensor euler_step(const Tensor& value, const Tensor& rate, double tau);

enum class ResetTarget { z, omega, both };
Costate reset_costate(const Costate& costate, ResetTarget which);

struct StepOptions {
  std::optional<double> step_tau;        // defaults to cfg.tau
  const Tensor* beta_override = nullptr; // per-step beta (replay schedules)
  std::optional<std::size_t> group_step; // masked group update index
};

struct StepResult {
  Tensor y;
  std::optional<double> loss_value;
};

/// One full update: evaluate hdot, y, theta_dot, build H', integrate all
/// four equations with step tau. In instantaneous mode the state update is
/// the direct assignment h <- f_hat, which keeps one Euler step bit-equal
/// to a plain network evaluation.
StepResult hl_step(ModelState& state, Costate& costate, const StreamItem& item,
                   const HLConfig& cfg, const LossSpec& loss, const NetSpec& spec,
                   const StepOptions& opts = {});

}  // namespace hl
