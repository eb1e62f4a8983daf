#include "dualmem/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace dualmem {

namespace {

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("MlpNet: need at least input and output sizes");
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("MlpNet: layer size 0");
  }
}

Matrix rectify(const Matrix& m) { return m.cwiseMax(0.0); }

}  // namespace

MlpNet MlpNet::zeros(std::vector<std::size_t> sizes) {
  check_sizes(sizes);
  MlpNet net;
  net.sizes = std::move(sizes);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    net.weights.push_back(Matrix::Zero(net.sizes[l], net.sizes[l + 1]));
    net.biases.push_back(RowVector::Zero(net.sizes[l + 1]));
  }
  return net;
}

MlpNet MlpNet::create(std::vector<std::size_t> sizes, std::uint64_t seed) {
  MlpNet net = zeros(std::move(sizes));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto& w = net.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    }
    for (Eigen::Index j = 0; j < net.biases[l].size(); ++j) net.biases[l](j) = u(rng);
  }
  return net;
}

std::size_t MlpNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

void MlpNet::validate() const {
  check_sizes(sizes);
  if (weights.size() + 1 != sizes.size() || biases.size() != weights.size()) {
    throw std::invalid_argument("MlpNet: layer count does not match sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (static_cast<std::size_t>(weights[l].rows()) != sizes[l] ||
        static_cast<std::size_t>(weights[l].cols()) != sizes[l + 1] ||
        static_cast<std::size_t>(biases[l].size()) != sizes[l + 1]) {
      throw std::invalid_argument("MlpNet: shape mismatch in layer " + std::to_string(l));
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("MlpNet: non-finite parameter in layer " + std::to_string(l));
    }
  }
}

bool operator==(const MlpNet& a, const MlpNet& b) {
  if (a.sizes != b.sizes) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

ForwardTrace forward(const MlpNet& net, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " columns, network expects " + std::to_string(net.input_dim()));
  }
  ForwardTrace t;
  t.input = x;
  const Matrix* h = &t.input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Matrix z = (*h) * net.weights[l];
    z.rowwise() += net.biases[l];
    t.pre.push_back(z);
    t.post.push_back(l + 1 < net.layer_count() ? rectify(z) : z);
    h = &t.post.back();
  }
  return t;
}

std::vector<double> predict_logits(const MlpNet& net, std::span<const float> x) {
  Matrix in(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = x[i];
  const ForwardTrace t = forward(net, in);
  const Matrix& z = t.logits();
  return {z.data(), z.data() + z.size()};
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return std::log(s) - (logits[static_cast<std::size_t>(label)] - m);
}

double mse_logits(std::span<const double> stored, std::span<const double> current) {
  if (stored.size() != current.size()) throw std::invalid_argument("mse_logits: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const double d = stored[i] - current[i];
    s += d * d;
  }
  return s;
}

double mean_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw std::invalid_argument("mean_cross_entropy: batch size mismatch");
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    s += cross_entropy({logits.row(i).data(), static_cast<std::size_t>(logits.cols())},
                       labels[static_cast<std::size_t>(i)]);
  }
  return s / static_cast<double>(labels.size());
}

double mean_mse_logits(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols() || logits.rows() == 0) {
    throw std::invalid_argument("mean_mse_logits: shape mismatch");
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    s += mse_logits({targets.row(i).data(), static_cast<std::size_t>(targets.cols())},
                    {logits.row(i).data(), static_cast<std::size_t>(logits.cols())});
  }
  return s / static_cast<double>(logits.rows());
}

Matrix cross_entropy_logit_grad(const Matrix& logits, std::span<const int> labels, double scale) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("cross_entropy_logit_grad: batch size mismatch");
  }
  const double k = scale / static_cast<double>(logits.rows());
  Matrix g(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      g(i, j) = std::exp(logits(i, j) - m);
      s += g(i, j);
    }
    g.row(i) /= s;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw std::invalid_argument("cross_entropy_logit_grad: label out of range");
    g(i, y) -= 1.0;
    g.row(i) *= k;
  }
  return g;
}

Matrix mse_logit_grad(const Matrix& logits, const Matrix& targets, double scale) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw std::invalid_argument("mse_logit_grad: shape mismatch");
  }
  return (logits - targets) * (2.0 * scale / static_cast<double>(logits.rows()));
}

Gradients Gradients::zeros_like(const MlpNet& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(RowVector::Zero(net.biases[l].size()));
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weights.size() != weights.size()) throw std::invalid_argument("Gradients: layer mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

Gradients backward(const MlpNet& net, const ForwardTrace& trace, const Matrix& logit_grad) {
  const std::size_t layers = net.layer_count();
  if (trace.pre.size() != layers || logit_grad.rows() != trace.logits().rows() ||
      logit_grad.cols() != trace.logits().cols()) {
    throw std::invalid_argument("backward: trace does not match network or gradient");
  }
  Gradients g = Gradients::zeros_like(net);
  Matrix delta = logit_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& in = l == 0 ? trace.input : trace.post[l - 1];
    g.weights[l] = in.transpose() * delta;
    g.biases[l] = delta.colwise().sum();
    if (l > 0) {
      Matrix back = delta * net.weights[l].transpose();
      const Matrix& z = trace.pre[l - 1];
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        if (!(z.data()[i] > 0.0)) back.data()[i] = 0.0;
      }
      delta = std::move(back);
    }
  }
  return g;
}

Gradients backward(const MlpNet& net, std::span<const LossTerm> terms) {
  Gradients total = Gradients::zeros_like(net);
  for (const LossTerm& t : terms) {
    if (t.coefficient == 0.0) continue;
    if (t.trace == nullptr) throw std::invalid_argument("backward: loss term without trace");
    const Matrix grad = t.kind == LossTerm::Kind::cross_entropy
                            ? cross_entropy_logit_grad(t.trace->logits(), t.labels, t.coefficient)
                            : mse_logit_grad(t.trace->logits(), t.targets, t.coefficient);
    total += backward(net, *t.trace, grad);
  }
  return total;
}

void sgd_step(MlpNet& net, const Gradients& grads, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  if (grads.weights.size() != net.layer_count()) throw std::invalid_argument("sgd_step: layer mismatch");
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    net.weights[l] -= lr * grads.weights[l];
    net.biases[l] -= lr * grads.biases[l];
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw std::runtime_error("load_model: truncated parameter blob in " + path);
  }
}

}  // namespace

void save_model(const MlpNet& net, const std::string& path) {
  net.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  nlohmann::json header = {{"format", "dualmem-mlp"}, {"version", 1}, {"sizes", net.sizes},
                           {"dtype", "float64"}};
  out << header.dump() << '\n';
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    write_doubles(out, net.weights[l].data(), static_cast<std::size_t>(net.weights[l].size()));
    write_doubles(out, net.biases[l].data(), static_cast<std::size_t>(net.biases[l].size()));
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

MlpNet load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_model: missing header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_model: bad header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "dualmem-mlp") {
    throw std::runtime_error("load_model: " + path + " is not a model file");
  }
  MlpNet net = MlpNet::zeros(header.at("sizes").get<std::vector<std::size_t>>());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    read_doubles(in, net.weights[l].data(), static_cast<std::size_t>(net.weights[l].size()), path);
    read_doubles(in, net.biases[l].data(), static_cast<std::size_t>(net.biases[l].size()), path);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("load_model: trailing bytes in " + path);
  }
  net.validate();
  return net;
}

}  // namespace dualmem
