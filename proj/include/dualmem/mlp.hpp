#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dualmem {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Fully connected rectifier network, row-vector convention: h = x W + b.
/// sizes = {input, hidden..., output}; two entries give a single linear layer.
struct MlpNet {
  std::vector<std::size_t> sizes;
  std::vector<Matrix> weights;    ///< weights[l] is sizes[l] x sizes[l+1]
  std::vector<RowVector> biases;  ///< biases[l] has sizes[l+1] entries

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static MlpNet create(std::vector<std::size_t> sizes, std::uint64_t seed);
  static MlpNet zeros(std::vector<std::size_t> sizes);

  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument if shapes do not chain or a value is not
  /// finite.
  void validate() const;

  friend bool operator==(const MlpNet& a, const MlpNet& b);
};

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   ///< x W + b per layer
  std::vector<Matrix> post;  ///< rectified pre, except the last layer (logits)

  const Matrix& logits() const { return post.back(); }
};

/// Batch forward pass; one sample per row of x.
ForwardTrace forward(const MlpNet& net, const Matrix& x);
std::vector<double> predict_logits(const MlpNet& net, std::span<const float> x);

/// -log softmax(logits)[label], max-shifted.
double cross_entropy(std::span<const double> logits, int label);
/// Squared Euclidean distance (sum over components).
double mse_logits(std::span<const double> stored, std::span<const double> current);

double mean_cross_entropy(const Matrix& logits, std::span<const int> labels);
double mean_mse_logits(const Matrix& logits, const Matrix& targets);

/// d(scale * mean CE) / d logits.
Matrix cross_entropy_logit_grad(const Matrix& logits, std::span<const int> labels, double scale);
/// d(scale * mean sum-of-squares) / d logits.
Matrix mse_logit_grad(const Matrix& logits, const Matrix& targets, double scale);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  static Gradients zeros_like(const MlpNet& net);
  Gradients& operator+=(const Gradients& other);
};

/// Backpropagates a logit gradient through the trace of a matching forward
/// call.
Gradients backward(const MlpNet& net, const ForwardTrace& trace, const Matrix& logit_grad);

/// One term of a composite objective over its own forward pass.
struct LossTerm {
  enum class Kind { cross_entropy, logit_mse };
  Kind kind = Kind::cross_entropy;
  double coefficient = 1.0;
  const ForwardTrace* trace = nullptr;
  std::vector<int> labels;  ///< cross_entropy
  Matrix targets;           ///< logit_mse
};

/// Gradient of sum_t coefficient_t * mean-loss_t. Zero-coefficient terms are
/// skipped.
Gradients backward(const MlpNet& net, std::span<const LossTerm> terms);

/// theta <- theta - lr * grad.
void sgd_step(MlpNet& net, const Gradients& grads, double lr);

/// One JSON header line with the layer sizes, then every weight matrix and
/// bias vector as little-endian float64, layer by layer.
void save_model(const MlpNet& net, const std::string& path);
MlpNet load_model(const std::string& path);

}  // namespace dualmem
