#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualmem/dataset.hpp"

namespace dualmem {

/// Gaussian bandwidth sigma. Density estimates use sigma directly, the
/// entropy and divergence estimators use sqrt(2) * sigma.
struct KernelConfig {
  double sigma = 0.01;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("KernelConfig: sigma must be positive");
    }
  }
};

/// Smallest potential passed to log; keeps widely separated data finite.
inline constexpr double kPotentialFloor = 1e-300;

template <class T>
double squared_distance(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("squared_distance: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return s;
}

/// exp(-|x-y|^2 / (2 bandwidth^2)).
template <class T>
double gaussian_kernel(std::span<const T> x, std::span<const T> y, double bandwidth) {
  if (!(bandwidth > 0.0)) {
    throw std::invalid_argument("gaussian_kernel: bandwidth must be positive");
  }
  return std::exp(-squared_distance(x, y) / (2.0 * bandwidth * bandwidth));
}

/// -log(max(v, floor)).
double entropy_from_potential(double potential);

double information_potential(const FeatureDataset& x, const KernelConfig& cfg);
double renyi_entropy(const FeatureDataset& x, const KernelConfig& cfg);
double cross_information_potential(const FeatureDataset& x, const FeatureDataset& xs,
                                   const KernelConfig& cfg);
/// Cauchy-Schwarz divergence, tiny negative round-off clamped to 0.
double cs_divergence(const FeatureDataset& x, const FeatureDataset& xs,
                     const KernelConfig& cfg);

/// sum_mn w_m w_n k(x_m, x_n) / (sum w)^2. Equals information_potential of
/// the selected rows when w is binary.
double weighted_information_potential(const FeatureDataset& x, const WeightVector& w,
                                      const KernelConfig& cfg);
/// sum_mn w_n k(x_m, x_n) / (n sum w). Equals the cross potential between the
/// full set and the selected rows when w is binary.
double weighted_cross_ip(const FeatureDataset& x, const WeightVector& w,
                         const KernelConfig& cfg);
double weighted_renyi_entropy(const FeatureDataset& x, const WeightVector& w,
                              const KernelConfig& cfg);
double weighted_cs_divergence(const FeatureDataset& x, const WeightVector& w,
                              const KernelConfig& cfg);

/// Dense symmetric Gram matrix of k_{sqrt(2) sigma} over one dataset.
/// Row sums and the grand total are accumulated in a fixed order so every
/// derived quantity is reproducible bit for bit.
class KernelMatrix {
 public:
  KernelMatrix(const FeatureDataset& x, const KernelConfig& cfg);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_, n_}; }
  const std::vector<double>& row_sums() const { return row_sums_; }
  double total() const { return total_; }

  /// out = K w
  void multiply(std::span<const double> w, std::span<double> out) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
  std::vector<double> row_sums_;
  double total_ = 0.0;
};

}  // namespace dualmem
