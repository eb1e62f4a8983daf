#include "doctest.h"

#include <stdexcept>

#include "dualmem/dataset.hpp"

using dualmem::FeatureDataset;
using dualmem::WeightVector;

TEST_CASE("dataset construction validates shapes and labels") {
  CHECK_THROWS_AS(FeatureDataset(2, 0, {}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(FeatureDataset(2, 2, {1, 2, 3}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(FeatureDataset(1, 1, {1}, {-1}), std::invalid_argument);
  CHECK_THROWS_AS(FeatureDataset::from_rows({{1, 2}, {3}}, {0, 1}), std::invalid_argument);
}

TEST_CASE("rows, subset and append") {
  auto ds = FeatureDataset::from_rows({{1, 2}, {3, 4}, {5, 6}}, {2, 0, 2});
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.row(1)[1] == 4.0f);
  CHECK(ds.label_bound() == 3);
  CHECK(ds.distinct_labels() == std::vector<int>{0, 2});

  const std::vector<std::size_t> pick{2, 0};
  auto sub = ds.subset(pick);
  CHECK(sub.size() == 2);
  CHECK(sub.row(0)[0] == 5.0f);
  CHECK(sub.label(1) == 2);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(ds.subset(bad), std::out_of_range);

  sub.append(ds);
  CHECK(sub.size() == 5);
  CHECK(sub.row(4)[1] == 6.0f);
  auto other = FeatureDataset::from_rows({{1}}, {0});
  CHECK_THROWS_AS(sub.append(other), std::invalid_argument);
}

TEST_CASE("weight vector bounds") {
  CHECK_THROWS_AS(WeightVector({0.5, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector({-0.1}), std::invalid_argument);
  WeightVector w({0.25, 0.75, 1.0});
  CHECK(w.sum() == doctest::Approx(2.0));
  CHECK(w.size() == 3);
}
