#pragma once

#include <optional>

#include "hamlearn/hamilton.hpp"
#include "hamlearn/net.hpp"

namespace hl {

/// Two-state window of the midpoint rule h_{t+tau} = h_{t-tau} +
/// tau f_h(u, h_t, theta). Seeded by one Euler bootstrap step, which sits
/// outside the reversible window.
struct MidpointChain {
  Tensor h_prev;
  Tensor h_curr;
  double tau = 1.0;
  std::size_t steps = 0;
  bool initialized = false;
};

MidpointChain midpoint_init(const Tensor& h0, const Tensor& u, const Tensor& theta_h,
                            const NetSpec& spec, double tau);

/// Slides the window forward one step.
void midpoint_forward(MidpointChain& chain, const Tensor& u, const Tensor& theta_h,
                      const NetSpec& spec);

/// Recovers h_{t-tau} from (h_t, h_{t+tau}); the transition is evaluated at
/// the same point as the forward step, so the reconstruction error is pure
/// float round-off.
Tensor midpoint_reverse_step(const Tensor& h_next, const Tensor& h_curr, const Tensor& u,
                             const Tensor& theta_h, const NetSpec& spec, double tau);

struct ReversibleResult {
  Tensor grad_theta_h;
  double loss = 0.0;
  Tensor final_state;
  std::size_t peak_retained_states = 0;  // stays at 2 when checkpointing is off
};

/// Runs `depth` transition steps of the midpoint chain, evaluates the loss
/// on the final state, then walks backward reconstructing each earlier
/// state on the fly while accumulating dL/dtheta. Only the two-state window
/// is retained. `checkpoint_every` > 0 stores periodic snapshots during the
/// forward pass and raises a diagnostic error if the reconstruction drifts
/// past `drift_tolerance`.
ReversibleResult reversible_backprop(std::size_t depth, const Tensor& u, const Tensor& h0,
                                     const Tensor& theta_h, const NetSpec& spec,
                                     const LossSpec& loss, const Tensor& target, double tau,
                                     std::size_t checkpoint_every = 0,
                                     double drift_tolerance = 1e-8);

}  // namespace hl
