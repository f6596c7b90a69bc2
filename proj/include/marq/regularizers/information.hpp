#pragma once

#include "marq/distq/quantile_net.hpp"

namespace marq::regularizers {

using numkit::Matrix;
using numkit::Vector;

/// H(p) = -sum p log p with 0 log 0 := 0.
double entropy(const Vector& p);
double entropy(const distq::PolicyDistribution& p);

/// D_KL(p || q). SupportError if q(a) == 0 where p(a) > 0.
double kl_divergence(const Vector& p, const Vector& q);
double kl_divergence(const distq::PolicyDistribution& p, const distq::PolicyDistribution& q);

/// H(p, q) = -sum p log q, computed directly (not via the KL identity).
double cross_entropy(const Vector& p, const Vector& q);

/// -alpha (log p + 1) / max(H(p), entropy_floor): the entropy gradient with
/// respect to the probabilities, rescaled by the inverse of the current entropy.
/// It is the exact gradient of alpha * log H(p) wherever H(p) >= entropy_floor.
Vector adaptive_entropy_grad(const Vector& p, double alpha, double entropy_floor);

inline constexpr double kRatioMin = 1e-2;
inline constexpr double kRatioMax = 1e2;

/// pi_learner(a|s) / pi_donor(a|s) without clipping.
double raw_importance_ratio(const Vector& learner, const Vector& donor, int action);
/// Ratio clipped to [ratio_min, ratio_max].
double importance_ratio(const distq::PolicyDistribution& learner,
                        const distq::PolicyDistribution& donor, int action,
                        double ratio_min = kRatioMin, double ratio_max = kRatioMax);

/// Per-sample clipped ratios pi_learner(a_b|s_b) / pi_donor(a_b|s_b) over the
/// columns of two |A| x B policy matrices. Used as fixed sample weights.
Vector importance_weights(const Matrix& learner_policy, const Matrix& donor_policy,
                          const std::vector<int>& actions, double ratio_min = kRatioMin,
                          double ratio_max = kRatioMax);

}  // namespace marq::regularizers
