#include "marq/numkit/grad_check.hpp"

#include <limits>
#include <algorithm>
#include <cmath>

namespace marq::numkit {

GradCheckReport finite_diff_check(const LossFn& loss_fn, const DenseNet& net, double tolerance,
                                  double step) {
  GradCheckReport report;
  const std::vector<double> analytic = flatten(loss_fn(net).grad);
  std::vector<double> theta = flatten(net);
  DenseNet probe = net;

  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    unflatten(probe, theta);
    const double up = loss_fn(probe).value;
    theta[i] = saved - step;
    unflatten(probe, theta);
    const double down = loss_fn(probe).value;
    theta[i] = saved;

    const double numeric = (up - down) / (2.0 * step);
    const double a = i < analytic.size() ? analytic[i] : 0.0;
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    double rel = std::abs(a - numeric) / denom;
    if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
    if (rel > report.worst_relative_error || i == 0) {
      report.worst_relative_error = rel;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.parameters_checked;
  }
  report.passed = analytic.size() == theta.size() && report.worst_relative_error < tolerance;
  return report;
}

}  // namespace marq::numkit
