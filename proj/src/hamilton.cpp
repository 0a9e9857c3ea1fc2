#include "hamlearn/hamilton.hpp"

#include <cmath>
#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace

double PhiSchedule::value(double t, double step_tau) const {
  double v = 0.0;
  switch (kind) {
    case Kind::constant: v = a; break;
    case Kind::exponential: v = a * std::exp(b * t); break;
    case Kind::reciprocal_tau:
      require(step_tau > 0.0, "phi: reciprocal schedule needs tau > 0");
      v = 1.0 / step_tau;
      break;
  }
  require(v > 0.0 && std::isfinite(v), "phi: schedule must stay positive and finite");
  return v;
}

NodeId LossSpec::apply(Tape& tape, NodeId pred, NodeId target) const {
  switch (kind) {
    case Kind::mse: return tape.mse(pred, target);
    case Kind::softmax_cross_entropy: return tape.softmax_cross_entropy(pred, target);
  }
  throw Error("unknown loss kind");
}

double LossSpec::eval(const Tensor& pred, const Tensor& target) const {
  Tape tape;
  NodeId p = tape.constant(pred);
  NodeId t = tape.constant(target);
  return tape.value(apply(tape, p, t))(0);
}

HamiltonianEval hamiltonian_eval(const ModelState& state, const Costate& costate,
                                 const StreamItem& item, double t, const HLConfig& cfg,
                                 const LossSpec& loss, const NetSpec& spec, double step_tau,
                                 std::optional<std::size_t> group_step) {
  HamiltonianEval ev;
  ev.u = ev.tape.constant(item.u);
  ev.h = ev.tape.input(state.h);
  ev.theta_h = ev.tape.input(state.theta_h);
  ev.theta_y = ev.tape.input(state.theta_y);

  if (group_step.has_value()) {
    auto [hdot, fhat] =
        spec.eval_masked_velocity(ev.tape, ev.u, ev.h, ev.theta_h, step_tau, *group_step);
    ev.hdot = hdot;
    ev.fhat = fhat;
  } else {
    auto [hdot, fhat] = spec.eval_state_velocity(ev.tape, ev.u, ev.h, ev.theta_h, step_tau);
    ev.hdot = hdot;
    ev.fhat = fhat;
  }
  ev.y = spec.eval_output(ev.tape, ev.u, ev.h, ev.theta_y);

  std::optional<NodeId> hprime;
  if (item.y_hat.has_value()) {
    NodeId l = loss.apply(ev.tape, ev.y, ev.tape.constant(*item.y_hat));
    ev.loss_value = ev.tape.value(l)(0);
    hprime = ev.tape.scale(l, cfg.phi.value(t, step_tau));
  }
  if (!state.h.empty()) {
    NodeId zh = ev.tape.dot(ev.tape.constant(costate.z), ev.hdot);
    hprime = hprime.has_value() ? ev.tape.add(*hprime, zh) : zh;
  }
  if (hprime.has_value()) {
    ev.hprime = *hprime;
    ev.has_hprime = true;
  }
  return ev;
}

double robust_hamiltonian(const ModelState& state, const Costate& costate,
                          const StreamItem& item, double t, const HLConfig& cfg,
                          const LossSpec& loss, const NetSpec& spec, double step_tau) {
  HamiltonianEval ev = hamiltonian_eval(state, costate, item, t, cfg, loss, spec, step_tau);
  return ev.has_hprime ? ev.tape.value(ev.hprime)(0) : 0.0;
}

Tensor he_state_rhs(const Tensor& u, const ModelState& state, const NetSpec& spec,
                    double tau) {
  return eval_state_net(u, state, spec, tau);
}

namespace {

void validate_beta(const Tensor& beta, const ModelState& state) {
  const std::size_t n = state.theta_h.size() + state.theta_y.size();
  require(beta.size() == n, "beta: length " + std::to_string(beta.size()) +
                                " does not match parameter count " + std::to_string(n));
  for (std::size_t i = 0; i < beta.size(); ++i)
    require(beta(i) >= 0.0, "beta: entries must be nonnegative");
}

}  // namespace

ParamRhs he_param_rhs(const Costate& costate, const HLConfig& cfg,
                      const Tensor* beta_override) {
  const Tensor& beta = beta_override != nullptr ? *beta_override : cfg.beta;
  const std::size_t nh = costate.omega_h.size();
  const std::size_t ny = costate.omega_y.size();
  require(beta.size() == nh + ny, "beta: length " + std::to_string(beta.size()) +
                                      " does not match parameter count " +
                                      std::to_string(nh + ny));
  ParamRhs rhs;
  rhs.theta_h_dot = Tensor::zeros({nh});
  rhs.theta_y_dot = Tensor::zeros({ny});
  for (std::size_t i = 0; i < nh; ++i) rhs.theta_h_dot(i) = -beta(i) * costate.omega_h(i);
  for (std::size_t i = 0; i < ny; ++i) rhs.theta_y_dot(i) = -beta(nh + i) * costate.omega_y(i);
  return rhs;
}

namespace {

CostateRhs costate_rhs_from_eval(const HamiltonianEval& ev, const Costate& costate,
                                 const HLConfig& cfg) {
  const double minus_s = -static_cast<double>(cfg.s);
  require(cfg.s == -1 || cfg.s == 1, "config: s must be -1 or +1");
  require(cfg.eta >= 0.0, "config: eta must be nonnegative");

  Tensor gh, gth, gty;
  if (ev.has_hprime) {
    Tape::Gradients grads = ev.tape.backward(ev.hprime, Tensor::scalar(1.0));
    gh = grads.at(ev.h);
    gth = grads.at(ev.theta_h);
    gty = grads.at(ev.theta_y);
  } else {
    gh = Tensor::zeros(costate.z.shape());
    gth = Tensor::zeros(costate.omega_h.shape());
    gty = Tensor::zeros(costate.omega_y.shape());
  }
  CostateRhs rhs;
  rhs.z_dot = add(scale(gh, minus_s), scale(costate.z, -cfg.eta));
  rhs.omega_h_dot = add(scale(gth, minus_s), scale(costate.omega_h, -cfg.eta));
  rhs.omega_y_dot = add(scale(gty, minus_s), scale(costate.omega_y, -cfg.eta));
  return rhs;
}

}  // namespace

CostateRhs he_costate_rhs(const ModelState& state, const Costate& costate,
                          const StreamItem& item, double t, const HLConfig& cfg,
                          const LossSpec& loss, const NetSpec& spec, double step_tau) {
  HamiltonianEval ev = hamiltonian_eval(state, costate, item, t, cfg, loss, spec, step_tau);
  return costate_rhs_from_eval(ev, costate, cfg);
}

Tensor euler_step(const Tensor& value, const Tensor& rate, double tau) {
  require(tau > 0.0, "euler_step: tau must be positive");
  if (!value.same_shape(rate))
    throw Error("euler_step: shape mismatch " + value.shape_str() + " vs " + rate.shape_str());
  return add(value, scale(rate, tau));
}

Costate reset_costate(const Costate& costate, ResetTarget which) {
  Costate out = costate;
  if (which == ResetTarget::z || which == ResetTarget::both)
    out.z = Tensor::zeros(costate.z.shape());
  if (which == ResetTarget::omega || which == ResetTarget::both) {
    out.omega_h = Tensor::zeros(costate.omega_h.shape());
    out.omega_y = Tensor::zeros(costate.omega_y.shape());
  }
  return out;
}

StepResult hl_step(ModelState& state, Costate& costate, const StreamItem& item,
                   const HLConfig& cfg, const LossSpec& loss, const NetSpec& spec,
                   const StepOptions& opts) {
  const double step_tau = opts.step_tau.value_or(cfg.tau);
  require(step_tau > 0.0, "hl_step: tau must be positive");
  const Tensor& beta = opts.beta_override != nullptr ? *opts.beta_override : cfg.beta;
  validate_beta(beta, state);

  HamiltonianEval ev = hamiltonian_eval(state, costate, item, item.timestamp, cfg, loss, spec,
                                        step_tau, opts.group_step);
  CostateRhs crhs = costate_rhs_from_eval(ev, costate, cfg);

  // next state
  Tensor h_next;
  if (state.h.empty()) {
    h_next = state.h;
  } else if (spec.residual_mode == ResidualMode::instantaneous) {
    if (opts.group_step.has_value()) {
      // only the active group advances; it takes the network value directly
      h_next = state.h;
      const auto ranges = spec.group_partition();
      const auto& [off, len] = ranges[*opts.group_step % ranges.size()];
      const Tensor& fhat = ev.tape.value(ev.fhat);
      for (std::size_t i = 0; i < len; ++i) h_next(off + i) = fhat(off + i);
    } else {
      h_next = ev.tape.value(ev.fhat);
    }
  } else {
    h_next = euler_step(state.h, ev.tape.value(ev.hdot), step_tau);
  }

  // next costate
  Costate next = costate;
  next.z = state.h.empty() ? costate.z : euler_step(costate.z, crhs.z_dot, step_tau);
  if (!costate.omega_h.empty()) next.omega_h = euler_step(costate.omega_h, crhs.omega_h_dot, step_tau);
  if (!costate.omega_y.empty()) next.omega_y = euler_step(costate.omega_y, crhs.omega_y_dot, step_tau);

  // next parameters; sequential ordering consumes the just-updated omega
  const Costate& theta_source = cfg.ordering == Ordering::sequential ? next : costate;
  ParamRhs prhs = he_param_rhs(theta_source, cfg, &beta);
  if (!state.theta_h.empty()) state.theta_h = euler_step(state.theta_h, prhs.theta_h_dot, step_tau);
  if (!state.theta_y.empty()) state.theta_y = euler_step(state.theta_y, prhs.theta_y_dot, step_tau);

  state.h = std::move(h_next);
  costate = std::move(next);

  StepResult result;
  result.y = ev.tape.value(ev.y);
  result.loss_value = ev.loss_value;
  return result;
}

}  // namespace hl
