#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dualmem {

/// Row-major matrix of feature vectors with one integer class label per row.
///
/// Features are stored as 32-bit floats (the native file format is float32),
/// all arithmetic on them is carried out in double precision.
class FeatureDataset {
 public:
  FeatureDataset() = default;

  /// Throws std::invalid_argument when the buffer sizes disagree with
  /// (rows, dim), when dim is 0, or when a label is negative.
  FeatureDataset(std::size_t rows, std::size_t dim, std::vector<float> values,
                 std::vector<int> labels);

  static FeatureDataset from_rows(const std::vector<std::vector<double>>& rows,
                                  std::vector<int> labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return labels_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<float> mutable_row(std::size_t i) {
    return {values_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }

  const std::vector<float>& values() const { return values_; }
  const std::vector<int>& labels() const { return labels_; }

  /// One past the largest label, 0 for an empty set.
  int label_bound() const;
  /// Sorted distinct labels present.
  std::vector<int> distinct_labels() const;

  FeatureDataset subset(std::span<const std::size_t> indices) const;
  /// Row-wise concatenation; dimensions must agree.
  void append(const FeatureDataset& other);

  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<int> labels_;
};

/// Selection weights, every entry in [0, 1].
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double sum() const;

 private:
  std::vector<double> values_;
};

}  // namespace dualmem
