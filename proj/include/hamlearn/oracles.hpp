#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hamlearn/hamilton.hpp"
#include "hamlearn/net.hpp"

namespace hl {

/// Momentum SGD with mainstream-optimizer semantics:
///   b' = mu b + (1 - rho) g    (b' = g on the first call)
///   theta' = theta - gamma b'
/// `first_step` picks the first-buffer convention: clone_gradient is the
/// mainstream default; dampened starts the recursion from a zero buffer,
/// which is what a zero-initialized weight costate reproduces.
struct SGDConfig {
  double gamma = 0.01;
  double mu = 0.0;
  double rho = 0.0;
  enum class FirstStep { clone_gradient, dampened };
  FirstStep first_step = FirstStep::clone_gradient;
};

std::pair<Tensor, Tensor> sgd_momentum_step(const Tensor& theta, const Tensor& grad,
                                            const std::optional<Tensor>& buffer,
                                            const SGDConfig& cfg);

/// SGD (gamma, mu, rho) <-> HL (beta, eta, phi) at step tau:
///   beta = gamma / tau, eta = (1 - mu) / tau, phi = (1 - rho) / tau.
struct MappedParams {
  double beta = 0.0;
  double eta = 0.0;
  double phi_const = 0.0;
  double tau = 1.0;
};

MappedParams map_params(const SGDConfig& sgd, double tau);
SGDConfig unmap_params(const MappedParams& m);

/// Classical back-propagation-through-time gradients, the reference the
/// replay construction is checked against. Forward stores every state;
/// the backward recursion accumulates
///   hbar_{q-1} = dL(S_q)/dS_q + hbar_q^T dS_{q+1}/dS_q
///   tbar_{q-1} = tbar_q + hbar_{q-1}^T dS_q/dtheta
/// over states S_k produced by the raw state network f_hat with constant
/// weights. Targets are paired with the state produced by their token.
struct BpttResult {
  Tensor grad_theta_h;
  std::vector<Tensor> states;  // S_0 .. S_n
  double total_loss = 0.0;
};

BpttResult bptt_gradients(std::span<const Tensor> tokens,
                          std::span<const std::optional<Tensor>> targets,
                          const Tensor& init_h, const Tensor& theta_h, const NetSpec& spec,
                          const LossSpec& loss);

}  // namespace hl
