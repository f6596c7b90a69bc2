#pragma once

#include "marq/numkit/dense_net.hpp"

namespace marq::numkit {

struct SoftmaxResult {
  Vector probabilities;
  double logsumexp = 0.0;  // log sum exp(logits / temperature)
};

/// Max-shifted softmax of logits / temperature.
SoftmaxResult softmax_logsumexp(const Vector& logits, double temperature = 1.0);

/// Vector-Jacobian product of softmax: given p = softmax(z) and g = dL/dp,
/// returns dL/dz (for temperature 1).
Vector softmax_vjp(const Vector& probabilities, const Vector& grad_probabilities);

}  // namespace marq::numkit
