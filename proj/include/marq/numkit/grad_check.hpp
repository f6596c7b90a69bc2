#pragma once

#include <cstddef>
#include <functional>

#include "marq/numkit/dense_net.hpp"

namespace marq::numkit {

struct LossAndGrad {
  double value = 0.0;
  GradBundle grad;
};

/// Loss evaluated at a candidate parameter setting. The gradient is only read
/// at the unperturbed point.
using LossFn = std::function<LossAndGrad(const DenseNet&)>;

struct GradCheckReport {
  bool passed = false;
  double worst_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t parameters_checked = 0;
};

inline constexpr double kFiniteDiffStep = 1e-5;

/// Compares the analytic gradient with central differences parameter by
/// parameter; relative error is |a-n| / max(|a|, |n|, 1e-8). Never throws on a
/// mismatch, it reports it.
GradCheckReport finite_diff_check(const LossFn& loss_fn, const DenseNet& net,
                                  double tolerance, double step = kFiniteDiffStep);

}  // namespace marq::numkit
