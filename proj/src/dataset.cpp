#include "dualmem/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dualmem {

FeatureDataset::FeatureDataset(std::size_t rows, std::size_t dim,
                               std::vector<float> values,
                               std::vector<int> labels)
    : dim_(dim), values_(std::move(values)), labels_(std::move(labels)) {
  if (dim_ == 0) {
    throw std::invalid_argument("FeatureDataset: feature dimension must be >= 1");
  }
  if (labels_.size() != rows || values_.size() != rows * dim_) {
    throw std::invalid_argument("FeatureDataset: buffer sizes do not match " +
                                std::to_string(rows) + "x" +
                                std::to_string(dim));
  }
  for (int y : labels_) {
    if (y < 0) throw std::invalid_argument("FeatureDataset: negative label");
  }
}

FeatureDataset FeatureDataset::from_rows(
    const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  if (rows.empty()) {
    throw std::invalid_argument("FeatureDataset::from_rows: no rows");
  }
  const std::size_t d = rows.front().size();
  std::vector<float> values;
  values.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) {
      throw std::invalid_argument("FeatureDataset::from_rows: ragged rows");
    }
    for (double v : r) values.push_back(static_cast<float>(v));
  }
  return FeatureDataset(rows.size(), d, std::move(values), std::move(labels));
}

int FeatureDataset::label_bound() const {
  if (labels_.empty()) return 0;
  return *std::max_element(labels_.begin(), labels_.end()) + 1;
}

std::vector<int> FeatureDataset::distinct_labels() const {
  std::vector<int> out(labels_);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<float> values;
  std::vector<int> labels;
  values.reserve(indices.size() * dim_);
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("FeatureDataset::subset: index out of range");
    auto r = row(i);
    values.insert(values.end(), r.begin(), r.end());
    labels.push_back(labels_[i]);
  }
  FeatureDataset out;
  out.dim_ = dim_;
  out.values_ = std::move(values);
  out.labels_ = std::move(labels);
  return out;
}

void FeatureDataset::append(const FeatureDataset& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  if (other.dim_ != dim_) {
    throw std::invalid_argument("FeatureDataset::append: dimension mismatch");
  }
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

WeightVector::WeightVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("WeightVector: entry outside [0,1]: " +
                                  std::to_string(v));
    }
  }
}

double WeightVector::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

}  // namespace dualmem
