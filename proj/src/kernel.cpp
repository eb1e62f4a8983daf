#include "dualmem/kernel.hpp"

#include <algorithm>

namespace dualmem {
namespace {

// k_{sqrt(2) sigma}(x, y) = exp(-|x-y|^2 / (4 sigma^2))
double entropy_kernel(std::span<const float> x, std::span<const float> y, double sigma) {
  return std::exp(-squared_distance(x, y) / (4.0 * sigma * sigma));
}

void require_nonempty(const FeatureDataset& x, const char* what) {
  if (x.empty()) throw std::invalid_argument(std::string(what) + ": empty dataset");
}

void require_weights(const FeatureDataset& x, const WeightVector& w, const char* what) {
  require_nonempty(x, what);
  if (w.size() != x.size()) {
    throw std::invalid_argument(std::string(what) + ": weight count differs from dataset size");
  }
  if (!(w.sum() > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": all-zero weights");
  }
}

}  // namespace

double entropy_from_potential(double potential) {
  return -std::log(std::max(potential, kPotentialFloor));
}

namespace {

// Kernel sums accumulate in long double: divergences are small differences
// of entropies and inherit every rounding error of the potentials.
using Acc = long double;

Acc self_sum(const FeatureDataset& x, double sigma) {
  const std::size_t n = x.size();
  Acc off = 0.0L;
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t j = m + 1; j < n; ++j) off += entropy_kernel(x.row(m), x.row(j), sigma);
  }
  // diagonal terms are exactly 1
  return static_cast<Acc>(n) + 2.0L * off;
}

Acc potential(const FeatureDataset& x, double sigma) {
  const Acc n = static_cast<Acc>(x.size());
  return self_sum(x, sigma) / (n * n);
}

Acc cross_potential(const FeatureDataset& x, const FeatureDataset& xs, double sigma) {
  Acc total = 0.0L;
  for (std::size_t m = 0; m < x.size(); ++m) {
    for (std::size_t j = 0; j < xs.size(); ++j) total += entropy_kernel(x.row(m), xs.row(j), sigma);
  }
  return total / (static_cast<Acc>(x.size()) * static_cast<Acc>(xs.size()));
}

Acc weighted_potential(const FeatureDataset& x, const WeightVector& w, double sigma) {
  const std::size_t n = x.size();
  Acc diag = 0.0L;
  Acc off = 0.0L;
  Acc s = 0.0L;
  for (std::size_t m = 0; m < n; ++m) {
    s += w[m];
    if (w[m] == 0.0) continue;
    diag += static_cast<Acc>(w[m]) * w[m];
    Acc row = 0.0L;
    for (std::size_t j = m + 1; j < n; ++j) {
      if (w[j] == 0.0) continue;
      row += static_cast<Acc>(w[j]) * entropy_kernel(x.row(m), x.row(j), sigma);
    }
    off += w[m] * row;
  }
  return (diag + 2.0L * off) / (s * s);
}

Acc weighted_cross_potential(const FeatureDataset& x, const WeightVector& w, double sigma) {
  const std::size_t n = x.size();
  Acc total = 0.0L;
  Acc s = 0.0L;
  for (std::size_t j = 0; j < n; ++j) {
    s += w[j];
    if (w[j] == 0.0) continue;
    Acc col = 0.0L;
    for (std::size_t m = 0; m < n; ++m) col += entropy_kernel(x.row(m), x.row(j), sigma);
    total += w[j] * col;
  }
  return total / (static_cast<Acc>(n) * s);
}

// 2 H(cross) - H(a) - H(b) = log(Va Vb / Vc^2), floors applied per potential
double divergence_from(Acc cross, Acc va, Acc vb) {
  const Acc floor = kPotentialFloor;
  cross = std::max(cross, floor);
  va = std::max(va, floor);
  vb = std::max(vb, floor);
  const Acc d = std::log(va) + std::log(vb) - 2.0L * std::log(cross);
  return std::max(static_cast<double>(d), 0.0);
}

}  // namespace

double information_potential(const FeatureDataset& x, const KernelConfig& cfg) {
  cfg.validate();
  require_nonempty(x, "information_potential");
  return static_cast<double>(potential(x, cfg.sigma));
}

double renyi_entropy(const FeatureDataset& x, const KernelConfig& cfg) {
  return entropy_from_potential(information_potential(x, cfg));
}

double cross_information_potential(const FeatureDataset& x, const FeatureDataset& xs,
                                   const KernelConfig& cfg) {
  cfg.validate();
  require_nonempty(x, "cross_information_potential");
  require_nonempty(xs, "cross_information_potential");
  if (x.dim() != xs.dim()) {
    throw std::invalid_argument("cross_information_potential: dimension mismatch");
  }
  return static_cast<double>(cross_potential(x, xs, cfg.sigma));
}

double cs_divergence(const FeatureDataset& x, const FeatureDataset& xs, const KernelConfig& cfg) {
  cfg.validate();
  require_nonempty(x, "cs_divergence");
  require_nonempty(xs, "cs_divergence");
  if (x.dim() != xs.dim()) throw std::invalid_argument("cs_divergence: dimension mismatch");
  // identical samples: exactly zero, not a rounding residue
  if (x.values() == xs.values()) return 0.0;
  return divergence_from(cross_potential(x, xs, cfg.sigma), potential(x, cfg.sigma),
                         potential(xs, cfg.sigma));
}

double weighted_information_potential(const FeatureDataset& x, const WeightVector& w,
                                      const KernelConfig& cfg) {
  cfg.validate();
  require_weights(x, w, "weighted_information_potential");
  return static_cast<double>(weighted_potential(x, w, cfg.sigma));
}

double weighted_cross_ip(const FeatureDataset& x, const WeightVector& w, const KernelConfig& cfg) {
  cfg.validate();
  require_weights(x, w, "weighted_cross_ip");
  return static_cast<double>(weighted_cross_potential(x, w, cfg.sigma));
}

double weighted_renyi_entropy(const FeatureDataset& x, const WeightVector& w,
                              const KernelConfig& cfg) {
  return entropy_from_potential(weighted_information_potential(x, w, cfg));
}

double weighted_cs_divergence(const FeatureDataset& x, const WeightVector& w,
                              const KernelConfig& cfg) {
  cfg.validate();
  require_weights(x, w, "weighted_cs_divergence");
  return divergence_from(weighted_cross_potential(x, w, cfg.sigma), potential(x, cfg.sigma),
                         weighted_potential(x, w, cfg.sigma));
}

KernelMatrix::KernelMatrix(const FeatureDataset& x, const KernelConfig& cfg) : n_(x.size()) {
  cfg.validate();
  require_nonempty(x, "KernelMatrix");
  values_.assign(n_ * n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    values_[i * n_ + i] = 1.0;
    for (std::size_t j = i + 1; j < n_; ++j) {
      const double k = entropy_kernel(x.row(i), x.row(j), cfg.sigma);
      values_[i * n_ + j] = k;
      values_[j * n_ + i] = k;
    }
  }
  row_sums_.assign(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (double k : row(i)) s += k;
    row_sums_[i] = s;
    total_ += s;
  }
}

void KernelMatrix::multiply(std::span<const double> w, std::span<double> out) const {
  if (w.size() != n_ || out.size() != n_) {
    throw std::invalid_argument("KernelMatrix::multiply: size mismatch");
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const double* r = values_.data() + i * n_;
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) s += r[j] * w[j];
    out[i] = s;
  }
}

}  // namespace dualmem
