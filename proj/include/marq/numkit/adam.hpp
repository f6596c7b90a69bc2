#pragma once

#include <cstdint>

#include "marq/numkit/dense_net.hpp"

namespace marq::numkit {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  GradBundle first_moment;
  GradBundle second_moment;
  std::uint64_t step_count = 0;
  AdamConfig config;

  static AdamState for_net(const DenseNet& net, AdamConfig config = {});
};

/// Bias-corrected Adam update in place. A non-finite gradient raises
/// NumericError before anything is modified.
void adam_step(DenseNet& params, const GradBundle& grads, AdamState& state);

}  // namespace marq::numkit
