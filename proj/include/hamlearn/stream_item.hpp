#pragma once

#include <optional>

#include "hamlearn/tensor.hpp"

namespace hl {

/// One sample from the stream: input, optional target, sequence-boundary
/// tag (1 on the last token of a sequence), and its arrival time.
struct StreamItem {
  Tensor u;
  std::optional<Tensor> y_hat;
  bool delta = true;
  double timestamp = 0.0;
};

}  // namespace hl
