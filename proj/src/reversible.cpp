#include "hamlearn/reversible.hpp"

#include <map>
#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

Tensor eval_transition(const Tensor& u, const Tensor& h, const Tensor& theta_h,
                       const NetSpec& spec) {
  Tape tape;
  NodeId f = spec.eval_fhat(tape, tape.constant(u), tape.constant(h), tape.constant(theta_h));
  return tape.value(f);
}

}  // namespace

MidpointChain midpoint_init(const Tensor& h0, const Tensor& u, const Tensor& theta_h,
                            const NetSpec& spec, double tau) {
  require(tau > 0.0, "midpoint: tau must be positive");
  MidpointChain chain;
  chain.tau = tau;
  chain.h_prev = h0;
  chain.h_curr = add(h0, scale(eval_transition(u, h0, theta_h, spec), tau));
  chain.initialized = true;
  return chain;
}

void midpoint_forward(MidpointChain& chain, const Tensor& u, const Tensor& theta_h,
                      const NetSpec& spec) {
  require(chain.initialized, "midpoint_forward: chain not initialized");
  Tensor h_next =
      add(chain.h_prev, scale(eval_transition(u, chain.h_curr, theta_h, spec), chain.tau));
  chain.h_prev = std::move(chain.h_curr);
  chain.h_curr = std::move(h_next);
  ++chain.steps;
}

Tensor midpoint_reverse_step(const Tensor& h_next, const Tensor& h_curr, const Tensor& u,
                             const Tensor& theta_h, const NetSpec& spec, double tau) {
  return sub(h_next, scale(eval_transition(u, h_curr, theta_h, spec), tau));
}

ReversibleResult reversible_backprop(std::size_t depth, const Tensor& u, const Tensor& h0,
                                     const Tensor& theta_h, const NetSpec& spec,
                                     const LossSpec& loss, const Tensor& target, double tau,
                                     std::size_t checkpoint_every, double drift_tolerance) {
  require(depth >= 1, "reversible_backprop: depth must be at least 1");
  require(tau > 0.0, "reversible_backprop: tau must be positive");

  // forward: only the two-state window survives; optional sparse checkpoints
  std::map<std::size_t, Tensor> checkpoints;
  std::size_t retained = 2, peak_retained = 2;
  auto note_checkpoint = [&](std::size_t k, const Tensor& h) {
    if (checkpoint_every > 0 && k % checkpoint_every == 0) {
      checkpoints.emplace(k, h);
      ++retained;
      peak_retained = std::max(peak_retained, retained);
    }
  };

  MidpointChain chain = midpoint_init(h0, u, theta_h, spec, tau);
  note_checkpoint(0, h0);
  note_checkpoint(1, chain.h_curr);
  for (std::size_t k = 1; k < depth; ++k) {
    midpoint_forward(chain, u, theta_h, spec);
    note_checkpoint(k + 1, chain.h_curr);
  }

  ReversibleResult result;
  result.final_state = chain.h_curr;

  // seed adjoints from the loss on the final state h_depth
  Tensor g_next;  // dL/dh_{k+1}
  {
    Tape tape;
    NodeId hN = tape.input(chain.h_curr);
    NodeId l = loss.apply(tape, hN, tape.constant(target));
    result.loss = tape.value(l)(0);
    g_next = tape.backward(l, Tensor::scalar(1.0)).at(hN);
  }
  Tensor g_curr = Tensor::zeros(g_next.shape());  // dL/dh_k, accumulated
  Tensor grad_theta = Tensor::zeros(theta_h.shape());

  Tensor h_hi = chain.h_curr;   // h_{k+1}
  Tensor h_mid = chain.h_prev;  // h_k

  // walk k = depth-1 .. 1 over midpoint steps h_{k+1} = h_{k-1} + tau f(h_k)
  for (std::size_t k = depth; k-- > 1;) {
    Tape tape;
    NodeId h_node = tape.input(h_mid);
    NodeId th = tape.input(theta_h);
    NodeId f = spec.eval_fhat(tape, tape.constant(u), h_node, th);
    Tape::Gradients grads = tape.backward(f, g_next);
    grad_theta = add(grad_theta, scale(grads.at(th), tau));
    g_curr = add(g_curr, scale(grads.at(h_node), tau));

    Tensor h_lo = sub(h_hi, scale(tape.value(f), tau));  // reconstruct h_{k-1}
    if (checkpoint_every > 0) {
      auto it = checkpoints.find(k - 1);
      if (it != checkpoints.end()) {
        const double drift = max_abs_diff(h_lo, it->second);
        if (drift > drift_tolerance)
          throw Error("reversible_backprop: reconstruction drifted " + std::to_string(drift) +
                      " at state " + std::to_string(k - 1));
      }
    }
    // slide the window and the adjoint pair; the skip connection passes
    // g_{k+1} straight to h_{k-1}
    h_hi = std::move(h_mid);
    h_mid = std::move(h_lo);
    Tensor g_prev = g_next;
    g_next = std::move(g_curr);
    g_curr = std::move(g_prev);
  }

  // bootstrap step h_1 = h_0 + tau f(h_0); g_next now carries dL/dh_1
  {
    Tape tape;
    NodeId h_node = tape.constant(h_mid);
    NodeId th = tape.input(theta_h);
    NodeId f = spec.eval_fhat(tape, tape.constant(u), h_node, th);
    grad_theta = add(grad_theta, scale(tape.backward(f, g_next).at(th), tau));
  }

  result.grad_theta_h = std::move(grad_theta);
  result.peak_retained_states = peak_retained;
  return result;
}

}  // namespace hl
