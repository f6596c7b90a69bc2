#include "marq/numkit/dense_net.hpp"

#include <cmath>
#include <string>

#include "marq/errors.hpp"

namespace marq::numkit {
namespace {

void check_layer_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw ShapeError("a network needs at least input and output sizes");
  for (int s : sizes) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

}  // namespace

std::size_t DenseNet::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

GradBundle GradBundle::zeros_like(const DenseNet& net) {
  GradBundle g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

GradBundle& GradBundle::operator+=(const GradBundle& other) {
  if (weights.size() != other.weights.size()) throw ShapeError("gradient bundle layer mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

GradBundle& GradBundle::operator*=(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
  return *this;
}

bool GradBundle::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

DenseNet make_zero_net(std::vector<int> layer_sizes) {
  check_layer_sizes(layer_sizes);
  DenseNet net;
  net.layer_sizes = std::move(layer_sizes);
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    net.weights.push_back(Matrix::Zero(net.layer_sizes[l + 1], net.layer_sizes[l]));
    net.biases.push_back(Vector::Zero(net.layer_sizes[l + 1]));
  }
  return net;
}

DenseNet make_dense_net(std::vector<int> layer_sizes, std::mt19937_64& rng) {
  DenseNet net = make_zero_net(std::move(layer_sizes));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = net.weights[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) net.biases[l](i) = dist(rng);
  }
  return net;
}

void validate_shapes(const DenseNet& net) {
  check_layer_sizes(net.layer_sizes);
  const auto layers = net.layer_sizes.size() - 1;
  if (net.weights.size() != layers || net.biases.size() != layers)
    throw ShapeError("parameter count does not match layer_sizes");
  for (std::size_t l = 0; l < layers; ++l) {
    if (net.weights[l].rows() != net.layer_sizes[l + 1] ||
        net.weights[l].cols() != net.layer_sizes[l] ||
        net.biases[l].size() != net.layer_sizes[l + 1])
      throw ShapeError("layer " + std::to_string(l) + " shape does not chain with layer_sizes");
  }
}

Vector forward(const DenseNet& net, const Vector& input) {
  return forward_batch(net, input);
}

Matrix forward_batch(const DenseNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.input_width())
    throw ShapeError("input width " + std::to_string(inputs.rows()) + " != " +
                     std::to_string(net.input_width()));
  Matrix x = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = net.weights[l] * x;
    z.colwise() += net.biases[l];
    x = (l + 1 < net.num_layers()) ? relu(z) : std::move(z);
  }
  return x;
}

ForwardCache forward_cached(const DenseNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.input_width())
    throw ShapeError("input width " + std::to_string(inputs.rows()) + " != " +
                     std::to_string(net.input_width()));
  ForwardCache cache;
  cache.input = inputs;
  const Matrix* x = &cache.input;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = net.weights[l] * (*x);
    z.colwise() += net.biases[l];
    cache.post.push_back((l + 1 < net.num_layers()) ? relu(z) : z);
    cache.pre.push_back(std::move(z));
    x = &cache.post.back();
  }
  return cache;
}

GradBundle backward(const DenseNet& net, const Vector& input, const Vector& output_grad) {
  return backward_batch(net, forward_cached(net, input), output_grad);
}

GradBundle backward_batch(const DenseNet& net, const ForwardCache& cache,
                          const Matrix& output_grad) {
  if (output_grad.rows() != net.output_width() || output_grad.cols() != cache.input.cols())
    throw ShapeError("output gradient shape does not match network output");
  GradBundle g = GradBundle::zeros_like(net);
  Matrix delta = output_grad;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    if (l + 1 < net.num_layers()) {
      // ReLU subgradient at exactly 0 is 0.
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    const Matrix& x = (l == 0) ? cache.input : cache.post[l - 1];
    g.weights[l].noalias() = delta * x.transpose();
    g.biases[l] = delta.rowwise().sum();
    delta = net.weights[l].transpose() * delta;
  }
  g.input_grad = std::move(delta);
  return g;
}

std::vector<double> flatten(const DenseNet& net) {
  std::vector<double> flat;
  flat.reserve(net.num_parameters());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    flat.insert(flat.end(), net.weights[l].data(), net.weights[l].data() + net.weights[l].size());
    flat.insert(flat.end(), net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
  }
  return flat;
}

std::vector<double> flatten(const GradBundle& grads) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    flat.insert(flat.end(), grads.weights[l].data(),
                grads.weights[l].data() + grads.weights[l].size());
    flat.insert(flat.end(), grads.biases[l].data(),
                grads.biases[l].data() + grads.biases[l].size());
  }
  return flat;
}

void unflatten(DenseNet& net, const std::vector<double>& flat) {
  if (flat.size() != net.num_parameters()) throw ShapeError("flat parameter length mismatch");
  std::size_t at = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::copy_n(flat.data() + at, net.weights[l].size(), net.weights[l].data());
    at += net.weights[l].size();
    std::copy_n(flat.data() + at, net.biases[l].size(), net.biases[l].data());
    at += net.biases[l].size();
  }
}

bool all_finite(const DenseNet& net) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!net.weights[l].allFinite() || !net.biases[l].allFinite()) return false;
  }
  return true;
}

}  // namespace marq::numkit
