#include "marq/numkit/adam.hpp"

#include <cmath>

#include "marq/errors.hpp"

namespace marq::numkit {

AdamState AdamState::for_net(const DenseNet& net, AdamConfig config) {
  AdamState s;
  s.first_moment = GradBundle::zeros_like(net);
  s.second_moment = GradBundle::zeros_like(net);
  s.config = config;
  return s;
}

namespace {

template <class P, class G>
void update_block(P& param, const G& grad, P& m, P& v, const AdamConfig& c, double bc1,
                  double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  param.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace

void adam_step(DenseNet& params, const GradBundle& grads, AdamState& state) {
  if (!(state.config.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
  if (grads.weights.size() != params.num_layers() ||
      state.first_moment.weights.size() != params.num_layers())
    throw ShapeError("Adam shapes do not match the network");
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size())
      throw ShapeError("gradient shape does not match the network");
  }
  if (!grads.all_finite()) throw NumericError("non-finite gradient rejected by adam_step");

  const auto t = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(state.config.beta1, t);
  const double bc2 = 1.0 - std::pow(state.config.beta2, t);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update_block(params.weights[l], grads.weights[l], state.first_moment.weights[l],
                 state.second_moment.weights[l], state.config, bc1, bc2);
    update_block(params.biases[l], grads.biases[l], state.first_moment.biases[l],
                 state.second_moment.biases[l], state.config, bc1, bc2);
  }
  ++state.step_count;
}

}  // namespace marq::numkit
