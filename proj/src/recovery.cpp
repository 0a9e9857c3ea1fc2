#include "hamlearn/recovery.hpp"

#include <cmath>
#include <string>

#include "hamlearn/oracles.hpp"

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

double accuracy_of(const Tensor& y, const std::optional<Tensor>& target) {
  if (!target.has_value() || y.empty()) return std::nan("");
  return argmax(y) == argmax(*target) ? 1.0 : 0.0;
}

Tensor beta_head(const Tensor& beta, std::size_t nh) { return slice(beta, 0, nh); }

}  // namespace

void StoredTrajectory::store(std::size_t index, Tensor h) {
  require(ring_.empty() || index == base_ + ring_.size(),
          "stored trajectory: indices must be appended in order");
  if (ring_.empty()) base_ = index;
  ring_.push_back(std::move(h));
  if (capacity_ > 0 && ring_.size() > capacity_) {
    ring_.pop_front();
    ++base_;
  }
}

const Tensor& StoredTrajectory::at(std::size_t index) const {
  if (index < base_ || index >= base_ + ring_.size())
    throw Error("stored trajectory: state " + std::to_string(index) +
                " is not retained (window [" + std::to_string(base_) + ", " +
                std::to_string(base_ + ring_.size()) + "))");
  return ring_[index - base_];
}

StepResult ff_state_step(ModelState& state, Costate& costate, const StreamItem& item,
                         const HLConfig& cfg, const LossSpec& loss, const NetSpec& spec,
                         double step_tau) {
  require(spec.output_is_identity(), "ff_state_step: output net must be the identity");
  require(spec.residual_mode == ResidualMode::instantaneous,
          "ff_state_step: state net must use instantaneous propagation");
  require(step_tau > 0.0, "ff_state_step: tau must be positive");

  const std::size_t nh = state.theta_h.size();
  Tape tape;
  NodeId u = tape.constant(item.u);
  NodeId h0 = tape.input(Tensor::zeros(state.h.shape()));
  NodeId th = tape.input(state.theta_h);
  NodeId h_next = spec.eval_fhat(tape, u, h0, th);

  Tensor g_theta = Tensor::zeros(state.theta_h.shape());
  Tensor z_next = Tensor::zeros(state.h.shape());
  StepResult result;
  result.y = tape.value(h_next);
  if (item.y_hat.has_value()) {
    NodeId l = loss.apply(tape, h_next, tape.constant(*item.y_hat));
    result.loss_value = tape.value(l)(0);
    NodeId lphi = tape.scale(l, cfg.phi.value(item.timestamp, step_tau));
    Tape::Gradients grads = tape.backward(lphi, Tensor::scalar(1.0));
    g_theta = grads.at(th);
    z_next = scale(grads.at(h_next), step_tau);
  }

  Tensor omega_next =
      euler_step(costate.omega_h, add(g_theta, scale(costate.omega_h, -cfg.eta)), step_tau);
  const Costate theta_source{z_next,
                             cfg.ordering == Ordering::sequential ? omega_next : costate.omega_h,
                             costate.omega_y};
  if (nh > 0) {
    Tensor rate = Tensor::zeros({nh});
    const Tensor bh = beta_head(cfg.beta, nh);
    for (std::size_t i = 0; i < nh; ++i) rate(i) = -bh(i) * theta_source.omega_h(i);
    state.theta_h = euler_step(state.theta_h, rate, step_tau);
  }
  state.h = tape.value(h_next);
  costate.z = std::move(z_next);
  costate.omega_h = std::move(omega_next);
  return result;
}

namespace {

struct ReplayCore {
  const Sequence& seq;
  const NetSpec& spec;
  const HLConfig& cfg;
  const LossSpec& loss;
  ModelState& state;
  Costate& costate;
  const ReplayOptions& opts;
  StoredTrajectory stored{0};
  Tensor theta_before_update;

  ReplayResult run() {
    const std::size_t n = seq.tokens.size();
    require(n >= 1, "replay: empty sequence");
    require(spec.output_is_identity(), "replay: output net must be the identity");
    require(spec.residual_mode == ResidualMode::instantaneous,
            "replay: state net must use instantaneous propagation");
    const std::size_t w = opts.window == 0 ? n : opts.window;
    require(w >= 1 && w <= n, "replay: window must satisfy 1 <= r <= n");

    const double tau = cfg.tau;
    const std::size_t nh = state.theta_h.size();
    const Tensor beta_zero = Tensor::zeros(cfg.beta.shape());
    stored = StoredTrajectory(opts.ring_capacity);
    StreamSource items = StreamSource::reverse_replay(seq, tau);

    ReplayResult result;
    result.total_loss = 0.0;
    stored.store(0, state.h);

    HLConfig frozen = cfg;
    frozen.ordering = Ordering::sequential;

    std::size_t step = 0;
    // forward phase: items 0..n-2 under frozen weights
    for (std::size_t k = 0; k + 1 < n; ++k) {
      StreamItem item = *items.next();
      StepOptions so;
      so.beta_override = &beta_zero;
      StepResult r = hl_step(state, costate, item, frozen, loss, spec, so);
      stored.store(k + 1, state.h);
      // report the loss of the state the token just produced
      r.y = state.h;
      if (item.y_hat.has_value()) r.loss_value = loss.eval(state.h, *item.y_hat);
      push_row(result, step++, item, r);
    }

    // pivot: z restarts, the costate recursions take over
    StreamItem pivot = *items.next();
    costate = reset_costate(costate, opts.reset_omega_at_pivot ? ResetTarget::both
                                                               : ResetTarget::z);
    {
      Tape tape;
      NodeId u = tape.constant(pivot.u);
      NodeId h_in = tape.input(stored.at(n - 1));
      NodeId th = tape.input(state.theta_h);
      NodeId fhat = spec.eval_fhat(tape, u, h_in, th);
      state.h = tape.value(fhat);
      stored.store(n, state.h);

      Tensor z_new = Tensor::zeros(state.h.shape());
      StepResult r;
      r.y = state.h;
      if (pivot.y_hat.has_value()) {
        NodeId l = loss.apply(tape, fhat, tape.constant(*pivot.y_hat));
        r.loss_value = tape.value(l)(0);
        result.total_loss += *r.loss_value;
        NodeId lphi = tape.scale(l, cfg.phi.value(pivot.timestamp, tau));
        z_new = scale(tape.backward(lphi, Tensor::scalar(1.0)).at(fhat), tau);
      }
      Tensor g_theta = nh > 0 ? tape.backward(fhat, z_new).at(th) : Tensor::zeros({0});
      costate.omega_h = add(add(costate.omega_h, g_theta), scale(costate.omega_h, -tau * cfg.eta));
      costate.z = std::move(z_new);
      push_row(result, step++, pivot, r);
    }
    if (w == 1) finish(result);

    // replay phase: j-th reversed token pairs with stored states n-j, n-1-j
    for (std::size_t j = 1; j < w; ++j) {
      StreamItem item = *items.next();
      const Tensor& u_prev = seq.tokens[n - j];

      Tensor jac_term = Tensor::zeros(state.h.shape());
      {
        Tape tape;
        NodeId u = tape.constant(u_prev);
        NodeId h_a = tape.input(stored.at(n - j));
        NodeId f1 = spec.eval_fhat(tape, u, h_a, tape.constant(state.theta_h));
        jac_term = tape.backward(f1, costate.z).at(h_a);
      }
      Tensor loss_term = Tensor::zeros(state.h.shape());
      StepResult r;
      r.y = stored.at(n - j);
      if (item.y_hat.has_value()) {
        Tape tape;
        NodeId h_b = tape.input(stored.at(n - j));
        NodeId l = loss.apply(tape, h_b, tape.constant(*item.y_hat));
        r.loss_value = tape.value(l)(0);
        result.total_loss += *r.loss_value;
        NodeId lphi = tape.scale(l, cfg.phi.value(item.timestamp, tau));
        loss_term = scale(tape.backward(lphi, Tensor::scalar(1.0)).at(h_b), tau);
      }
      Tensor z_new = add(add(loss_term, jac_term), scale(costate.z, -tau * cfg.eta));

      Tensor g_theta = Tensor::zeros({nh});
      if (nh > 0) {
        Tape tape;
        NodeId u = tape.constant(item.u);
        NodeId h_c = tape.input(stored.at(n - 1 - j));
        NodeId th = tape.input(state.theta_h);
        NodeId f3 = spec.eval_fhat(tape, u, h_c, th);
        g_theta = tape.backward(f3, z_new).at(th);
      }
      costate.omega_h = add(add(costate.omega_h, g_theta), scale(costate.omega_h, -tau * cfg.eta));
      costate.z = std::move(z_new);
      push_row(result, step++, item, r);
      if (j + 1 == w) finish(result);
    }
    return finalize(result, n, w);
  }

  void push_row(ReplayResult& result, std::size_t step, const StreamItem& item,
                const StepResult& r) {
    RunRow row;
    row.step = step;
    row.time = item.timestamp;
    row.loss = r.loss_value.value_or(std::nan(""));
    row.accuracy = accuracy_of(r.y, item.y_hat);
    result.rows.push_back(row);
  }

  // the single weight update, enabled only on the final streamed item
  void finish(ReplayResult&) {
    theta_before_update = state.theta_h;
    if (!opts.apply_theta_update) return;
    const std::size_t nh = state.theta_h.size();
    if (nh == 0) return;
    const Tensor bh = beta_head(cfg.beta, nh);
    Tensor rate = Tensor::zeros({nh});
    for (std::size_t i = 0; i < nh; ++i) rate(i) = -bh(i) * costate.omega_h(i);
    state.theta_h = euler_step(state.theta_h, rate, cfg.tau);
  }

  ReplayResult finalize(ReplayResult result, std::size_t n, std::size_t w) {
    result.omega_h = costate.omega_h;
    result.costate = costate;
    result.grad_oracle_diff = std::nan("");
    if (opts.compute_oracle_diff) {
      std::vector<Tensor> tokens(seq.tokens.end() - static_cast<std::ptrdiff_t>(w),
                                 seq.tokens.end());
      std::vector<std::optional<Tensor>> targets(w);
      if (!seq.targets.empty())
        std::copy(seq.targets.end() - static_cast<std::ptrdiff_t>(w), seq.targets.end(),
                  targets.begin());
      BpttResult oracle = bptt_gradients(tokens, targets, stored.at(n - w),
                                         theta_before_update, spec, loss);
      const double denom = std::max(norm_inf(oracle.grad_theta_h), 1e-12);
      result.grad_oracle_diff = max_abs_diff(result.omega_h, oracle.grad_theta_h) / denom;
    }
    return result;
  }
};

}  // namespace

ReplayResult hl_bptt_replay(const Sequence& seq, const NetSpec& spec, const HLConfig& cfg,
                            const LossSpec& loss, ModelState& state, Costate& costate,
                            const ReplayOptions& opts) {
  ReplayCore core{seq, spec, cfg, loss, state, costate, opts};
  return core.run();
}

ReplayResult truncated_replay(const Sequence& seq, std::size_t r, const NetSpec& spec,
                              const HLConfig& cfg, const LossSpec& loss, ModelState& state,
                              Costate& costate, const ReplayOptions& opts) {
  require(r >= 1 && r <= seq.tokens.size(), "truncated_replay: window out of range");
  ReplayOptions o = opts;
  o.window = r;
  ReplayCore core{seq, spec, cfg, loss, state, costate, o};
  return core.run();
}

namespace {

std::vector<Sequence> split_sequences(StreamSource& source) {
  std::vector<Sequence> seqs;
  Sequence current;
  while (auto item = source.next()) {
    current.tokens.push_back(item->u);
    current.targets.push_back(item->y_hat);
    if (item->delta) {
      seqs.push_back(std::move(current));
      current = Sequence{};
    }
  }
  require(current.tokens.empty(), "run_mode: stream ended inside a sequence (no delta tag)");
  return seqs;
}

}  // namespace

RunRecord run_mode(const RecoveryMode& mode, StreamSource source, const NetSpec& spec,
                   HLConfig cfg, const LossSpec& loss, ModelState state,
                   const RunOptions& opts) {
  RunRecord record;
  Costate costate = Costate::zeros_like(state);
  // gradient-parity constructions require the gradient-then-update order
  cfg.ordering = Ordering::sequential;

  auto push = [&](std::size_t step, const StreamItem& item, const StepResult& r) {
    RunRow row;
    row.step = step;
    row.time = item.timestamp;
    row.loss = r.loss_value.value_or(std::nan(""));
    row.accuracy = accuracy_of(r.y, item.y_hat);
    record.rows.push_back(row);
    if (opts.record_theta_trail) record.theta_trail.push_back(state.theta());
  };

  switch (mode.kind) {
    case RecoveryKind::ff_output:
    case RecoveryKind::rnn_unfold: {
      require(spec.state_dim() == 0,
              "run_mode: the output-net construction keeps no neuron state");
      std::size_t step = 0;
      double prev_t = 0.0;
      bool first = true;
      while (auto item = source.next()) {
        if (mode.reset_omega_each_sample) costate = reset_costate(costate, ResetTarget::omega);
        StepOptions so;
        so.step_tau = first ? cfg.tau : item->timestamp - prev_t;
        prev_t = item->timestamp;
        first = false;
        StepResult r = hl_step(state, costate, *item, cfg, loss, spec, so);
        push(step++, *item, r);
      }
      break;
    }
    case RecoveryKind::ff_state: {
      std::size_t step = 0;
      double prev_t = 0.0;
      bool first = true;
      while (auto item = source.next()) {
        if (mode.reset_omega_each_sample) costate = reset_costate(costate, ResetTarget::omega);
        const double step_tau = first ? cfg.tau : item->timestamp - prev_t;
        prev_t = item->timestamp;
        first = false;
        StepResult r = ff_state_step(state, costate, *item, cfg, loss, spec, step_tau);
        push(step++, *item, r);
      }
      break;
    }
    case RecoveryKind::rnn_hl_bptt:
    case RecoveryKind::rnn_truncated: {
      std::vector<Sequence> seqs = split_sequences(source);
      std::size_t step = 0;
      for (const Sequence& seq : seqs) {
        ReplayOptions ro;
        ro.reset_omega_at_pivot = mode.reset_omega_at_pivot;
        ro.compute_oracle_diff = false;
        if (mode.kind == RecoveryKind::rnn_truncated) {
          require(mode.window >= 1, "run_mode: truncated mode needs a window");
          ro.window = std::min(mode.window, seq.tokens.size());
        }
        state.h = Tensor::zeros(state.h.shape());  // state reset at sequence start
        ReplayResult r =
            hl_bptt_replay(seq, spec, cfg, loss, state, costate, ro);
        for (RunRow row : r.rows) {
          row.step = step++;
          record.rows.push_back(row);
          if (opts.record_theta_trail) record.theta_trail.push_back(state.theta());
        }
      }
      break;
    }
  }
  record.final_state = std::move(state);
  record.final_costate = std::move(costate);
  return record;
}

}  // namespace hl
