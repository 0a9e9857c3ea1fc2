#include "hamlearn/oracles.hpp"

#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace

std::pair<Tensor, Tensor> sgd_momentum_step(const Tensor& theta, const Tensor& grad,
                                            const std::optional<Tensor>& buffer,
                                            const SGDConfig& cfg) {
  require(theta.same_shape(grad), "sgd: theta shape " + theta.shape_str() +
                                      " does not match gradient " + grad.shape_str());
  Tensor buf_next(theta.shape());
  if (!buffer.has_value()) {
    if (cfg.first_step == SGDConfig::FirstStep::clone_gradient) {
      buf_next = grad;
    } else {
      for (std::size_t i = 0; i < grad.size(); ++i)
        buf_next(i) = (1.0 - cfg.rho) * grad(i);
    }
  } else {
    require(buffer->same_shape(theta), "sgd: buffer shape mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
      buf_next(i) = cfg.mu * (*buffer)(i) + (1.0 - cfg.rho) * grad(i);
  }
  Tensor theta_next(theta.shape());
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta_next(i) = theta(i) - cfg.gamma * buf_next(i);
  return {std::move(theta_next), std::move(buf_next)};
}

MappedParams map_params(const SGDConfig& sgd, double tau) {
  require(tau > 0.0, "map_params: tau must be positive");
  require(sgd.gamma > 0.0, "map_params: gamma must be positive");
  require(sgd.mu <= 1.0, "map_params: mu > 1 has no nonnegative dissipation");
  require(sgd.rho < 1.0, "map_params: rho >= 1 maps to a non-positive loss scale");
  MappedParams m;
  m.tau = tau;
  m.beta = sgd.gamma / tau;
  m.eta = (1.0 - sgd.mu) / tau;
  m.phi_const = (1.0 - sgd.rho) / tau;
  return m;
}

SGDConfig unmap_params(const MappedParams& m) {
  require(m.tau > 0.0, "unmap_params: tau must be positive");
  SGDConfig sgd;
  sgd.gamma = m.beta * m.tau;
  sgd.mu = 1.0 - m.tau * m.eta;
  sgd.rho = 1.0 - m.tau * m.phi_const;
  return sgd;
}

BpttResult bptt_gradients(std::span<const Tensor> tokens,
                          std::span<const std::optional<Tensor>> targets,
                          const Tensor& init_h, const Tensor& theta_h, const NetSpec& spec,
                          const LossSpec& loss) {
  const std::size_t n = tokens.size();
  require(n >= 1, "bptt: empty sequence");
  require(targets.size() == n, "bptt: target list length mismatch");

  BpttResult result;
  result.states.reserve(n + 1);
  result.states.push_back(init_h);

  // forward pass with constant weights; S_{k+1} = f_hat(u_k, S_k, theta)
  for (std::size_t k = 0; k < n; ++k) {
    Tape tape;
    NodeId u = tape.constant(tokens[k]);
    NodeId h = tape.constant(result.states.back());
    NodeId th = tape.constant(theta_h);
    result.states.push_back(tape.value(spec.eval_fhat(tape, u, h, th)));
  }
  for (std::size_t k = 0; k < n; ++k)
    if (targets[k].has_value())
      result.total_loss += loss.eval(result.states[k + 1], *targets[k]);

  // backward recursion; hbar seeds from zero past the last state
  Tensor hbar = Tensor::zeros(result.states.back().shape());
  Tensor tbar = Tensor::zeros(theta_h.shape());
  for (std::size_t q = n; q >= 1; --q) {
    Tensor hbar_prev = Tensor::zeros(hbar.shape());
    if (targets[q - 1].has_value()) {
      Tape tape;
      NodeId s = tape.input(result.states[q]);
      NodeId l = loss.apply(tape, s, tape.constant(*targets[q - 1]));
      hbar_prev = tape.backward(l, Tensor::scalar(1.0)).at(s);
    }
    if (q < n) {
      // hbar_q^T dS_{q+1}/dS_q evaluated at (u_q, S_q)
      Tape tape;
      NodeId u = tape.constant(tokens[q]);
      NodeId h = tape.input(result.states[q]);
      NodeId th = tape.constant(theta_h);
      NodeId s_next = spec.eval_fhat(tape, u, h, th);
      hbar_prev = add(hbar_prev, tape.backward(s_next, hbar).at(h));
    }
    {
      // tbar += hbar_{q-1}^T dS_q/dtheta evaluated at (u_{q-1}, S_{q-1})
      Tape tape;
      NodeId u = tape.constant(tokens[q - 1]);
      NodeId h = tape.constant(result.states[q - 1]);
      NodeId th = tape.input(theta_h);
      NodeId s_q = spec.eval_fhat(tape, u, h, th);
      tbar = add(tbar, tape.backward(s_q, hbar_prev).at(th));
    }
    hbar = std::move(hbar_prev);
  }
  result.grad_theta_h = std::move(tbar);
  return result;
}

}  // namespace hl
