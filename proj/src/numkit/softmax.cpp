#include "marq/numkit/softmax.hpp"

#include <cmath>

#include "marq/errors.hpp"

namespace marq::numkit {

SoftmaxResult softmax_logsumexp(const Vector& logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  if (!logits.allFinite()) throw NumericError("softmax logits must be finite");
  const Vector scaled = logits / temperature;
  const double shift = scaled.maxCoeff();
  Vector e = (scaled.array() - shift).exp().matrix();
  const double z = e.sum();
  return {e / z, shift + std::log(z)};
}

Vector softmax_vjp(const Vector& p, const Vector& g) {
  if (p.size() != g.size()) throw ShapeError("softmax_vjp size mismatch");
  return (p.array() * (g.array() - p.dot(g))).matrix();
}

}  // namespace marq::numkit
