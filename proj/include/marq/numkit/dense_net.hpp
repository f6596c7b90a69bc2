#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace marq::numkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// weights[l] has shape (layer_sizes[l+1], layer_sizes[l]) so that a layer maps
/// a column vector x to W x + b. Batched calls take one sample per column.
struct DenseNet {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  int input_width() const { return layer_sizes.front(); }
  int output_width() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const;
};

/// Gradients with the same shapes as a DenseNet's parameters. input_grad is
/// filled by the single-sample backward (and summed per column in batches).
struct GradBundle {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input_grad;

  static GradBundle zeros_like(const DenseNet& net);
  GradBundle& operator+=(const GradBundle& other);
  GradBundle& operator*=(double s);
  bool all_finite() const;
};

/// All-zero network with the given architecture.
DenseNet make_zero_net(std::vector<int> layer_sizes);

/// Weights and biases uniform in +-1/sqrt(fan_in) per layer.
DenseNet make_dense_net(std::vector<int> layer_sizes, std::mt19937_64& rng);

/// Throws ShapeError unless the parameter shapes chain with layer_sizes.
void validate_shapes(const DenseNet& net);

/// Activations retained by forward_batch for the backward pass.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer (last = output)

  const Matrix& output() const { return post.back(); }
};

Vector forward(const DenseNet& net, const Vector& input);
Matrix forward_batch(const DenseNet& net, const Matrix& inputs);
ForwardCache forward_cached(const DenseNet& net, const Matrix& inputs);

/// Reverse-mode gradient of sum(output . output_grad) for one sample.
GradBundle backward(const DenseNet& net, const Vector& input, const Vector& output_grad);

/// Batched reverse pass: parameter gradients are summed over columns and
/// input_grad holds one column per sample.
GradBundle backward_batch(const DenseNet& net, const ForwardCache& cache,
                          const Matrix& output_grad);

// Flat parameter views, layer by layer: weights (column-major) then biases.
std::vector<double> flatten(const DenseNet& net);
std::vector<double> flatten(const GradBundle& grads);
void unflatten(DenseNet& net, const std::vector<double>& flat);

bool all_finite(const DenseNet& net);

}  // namespace marq::numkit
