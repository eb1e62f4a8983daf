#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dualmem/itmo.hpp"
#include "oracles.hpp"

using namespace dualmem;

namespace {

FeatureDataset fixed_five() {
  return FeatureDataset::from_rows({{0.10, 0.20}, {0.12, 0.21}, {0.30, 0.25}, {0.11, 0.19}, {0.50, 0.50}},
                                   {0, 0, 1, 0, 1});
}

ItmoConfig small_cfg(std::size_t sn) {
  ItmoConfig c;
  c.sample_count = sn;
  return c;
}

oracle::Lambdas lambdas_of(const ItmoConfig& c) {
  return {c.lambda_h2, c.lambda_cs, c.lambda_ksp, c.lambda_l1, c.lambda_h, double(c.sample_count)};
}

}  // namespace

TEST_CASE("concrete sample closed forms") {
  CHECK(concrete_sample(0.5, 0.7, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(concrete_sample(0.1, 1.0, 0.5) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(concrete_sample(0.1, 0.5, 0.5) == doctest::Approx(1.0 / (1.0 + 81.0)).epsilon(1e-13));
  CHECK(concrete_sample(0.1, 0.5, 0.5) == doctest::Approx(0.01220).epsilon(1e-3));
  CHECK_THROWS_AS(concrete_sample(0.0, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(concrete_sample(0.5, 0.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(concrete_sample(0.5, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("regularizer examples") {
  ItmoConfig c = small_cfg(5);
  CHECK(regularizer(WeightVector({1, 1, 0, 1, 1, 0, 0, 1, 0, 0}), c) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(regularizer(WeightVector(std::vector<double>(10, 0.5)), c) ==
        doctest::Approx(5.0 + 10.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(regularizer(WeightVector(std::vector<double>(10, 0.5)), c) == doctest::Approx(11.9315).epsilon(1e-5));
  CHECK(regularizer(WeightVector(std::vector<double>(10, 0.0)), c) == doctest::Approx(25.0).epsilon(1e-15));
}

TEST_CASE("info loss examples") {
  const KernelConfig kcfg{0.05};
  const auto x = fixed_five();

  ItmoConfig c = small_cfg(5);
  c.lambda_ksp = c.lambda_l1 = c.lambda_h = 0.0;
  const WeightVector full(std::vector<double>(5, 1.0));
  CHECK(info_loss(x, full, c, kcfg) == doctest::Approx(-renyi_entropy(x, kcfg)).epsilon(1e-13));

  c.lambda_cs = 0.0;
  const std::vector<double> wv{0.9, 0.2, 0.5, 0.7, 0.1};
  CHECK(info_loss(x, WeightVector(wv), c, kcfg) ==
        doctest::Approx(-oracle::entropy(oracle::weighted_ip(x, wv, 0.05))).epsilon(1e-12));

  // frozen numpy value, default lambdas with sn = 2
  ItmoConfig d = small_cfg(2);
  CHECK(info_loss(x, WeightVector(wv), d, kcfg) == doctest::Approx(6.422015406282634).epsilon(1e-12));
  CHECK_THROWS_AS(info_loss(x, WeightVector(std::vector<double>(5, 0.0)), d, kcfg), std::invalid_argument);
}

TEST_CASE("info loss agrees with the naive composition on random sets") {
  std::mt19937_64 rng(17);
  const KernelConfig kcfg{0.2};
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = oracle::random_dataset(rng, 20, 2);
    std::vector<double> w(20);
    for (auto& v : w) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const ItmoConfig c = small_cfg(6);
    CHECK(oracle::rel_err(info_loss(x, WeightVector(w), c, kcfg), oracle::info_loss(x, w, lambdas_of(c), 0.2)) < 1e-10);
  }
}

TEST_CASE("gradient: frozen values and the evaluation object") {
  const KernelConfig kcfg{0.05};
  const auto x = fixed_five();
  const ItmoConfig c = small_cfg(2);
  const std::vector<double> relaxed{0.2, 0.4, 0.6, 0.15, 0.9};
  const std::vector<double> u{0.3, 0.6, 0.45, 0.8, 0.2};
  const auto g = info_loss_gradient(x, relaxed, c, kcfg, u);
  const double expected[] = {1.3950111346083816, 11.545038159255228, 11.142081147497152,
                             21.565461454819967, 14.90830598438464};
  for (std::size_t j = 0; j < 5; ++j) CHECK(oracle::rel_err(g[j], expected[j]) < 1e-6);

  const KernelMatrix k(x, kcfg);
  const auto ev = InfoObjective(k, c).evaluate(relaxed, u);
  CHECK(ev.sampled[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(ev.sampled[4] == doctest::Approx(0.8350515463917526).epsilon(1e-13));
  std::vector<double> w = ev.sampled;
  CHECK(ev.loss == doctest::Approx(info_loss(x, WeightVector(w), c, kcfg)).epsilon(1e-11));
  CHECK(ev.terms.sum_w == doctest::Approx(std::accumulate(w.begin(), w.end(), 0.0)));
}

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(23);
  const KernelConfig kcfg{0.1};
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = oracle::random_dataset(rng, 20, 2, 1, 0.5);
    ItmoConfig c = small_cfg(5);
    c.temperature = 0.5 + 0.1 * trial;
    std::vector<double> relaxed(20), u(20);
    for (auto& v : relaxed) v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    for (auto& v : u) v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const auto g = info_loss_gradient(x, relaxed, c, kcfg, u);
    auto f = [&](const std::vector<double>& r) {
      std::vector<double> w(r.size());
      for (std::size_t j = 0; j < r.size(); ++j) w[j] = oracle::concrete(r[j], u[j], c.temperature);
      return oracle::info_loss(x, w, lambdas_of(c), 0.1);
    };
    const auto fd = oracle::finite_diff(f, relaxed, 1e-5);
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(oracle::rel_err(g[j], fd[j]) < 1e-4);
  }
}

TEST_CASE("gradient of the L1 term alone") {
  std::mt19937_64 rng(29);
  const auto x = oracle::random_dataset(rng, 8, 2);
  ItmoConfig c = small_cfg(3);
  c.lambda_h2 = c.lambda_cs = c.lambda_ksp = c.lambda_h = 0.0;
  c.lambda_l1 = 1.0;
  std::vector<double> relaxed{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> u{0.5, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8, 0.45};
  const auto g = info_loss_gradient(x, relaxed, c, KernelConfig{0.1}, u);
  auto f = [&](const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += oracle::concrete(r[j], u[j], c.temperature);
    return s;
  };
  const auto fd = oracle::finite_diff(f, relaxed, 1e-6);
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(oracle::rel_err(g[j], fd[j]) < 1e-6);
}

TEST_CASE("symmetric pair gives equal gradient components") {
  const auto x = FeatureDataset::from_rows({{0.4, 0.5}, {0.6, 0.5}}, {0, 1});
  const ItmoConfig c = small_cfg(1);
  const std::vector<double> relaxed{0.3, 0.3}, u{0.6, 0.6};
  const auto g = info_loss_gradient(x, relaxed, c, KernelConfig{0.1}, u);
  CHECK(g[0] == doctest::Approx(g[1]).epsilon(1e-14));
}

TEST_CASE("config validation") {
  ItmoConfig c;
  CHECK_NOTHROW(c.validate(100));
  CHECK_THROWS_AS(c.validate(99), std::invalid_argument);
  c.lambda_h2 = 0.5;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
  c = ItmoConfig{};
  c.lambda_cs = -1;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
  c = ItmoConfig{};
  c.weight_init = 1.0;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
  c = ItmoConfig{};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
}

TEST_CASE("optimizer is deterministic and keeps its invariants") {
  std::mt19937_64 rng(31);
  const auto x = oracle::random_dataset(rng, 60, 2);
  ItmoConfig c = small_cfg(10);
  c.epochs = 200;
  c.seed = 4;
  const KernelConfig kcfg{0.05};
  const auto a = optimize_weights(x, c, kcfg);
  const auto b = optimize_weights(x, c, kcfg);
  CHECK(a.relaxed_weights == b.relaxed_weights);
  CHECK(a.last_sampled_weights == b.last_sampled_weights);
  CHECK(a.step_count == 200);
  CHECK(a.trace.size() == a.step_count);
  for (double v : a.relaxed_weights) {
    CHECK(v >= kRelaxedWeightEps);
    CHECK(v <= 1.0 - kRelaxedWeightEps);
  }
  c.seed = 5;
  const auto d = optimize_weights(x, c, kcfg);
  CHECK(d.last_sampled_weights != a.last_sampled_weights);
  const auto ra = select_subset(a, 10, SelectionMode::global, x.labels());
  const auto rb = select_subset(b, 10, SelectionMode::global, x.labels());
  CHECK(ra.chosen_indices == rb.chosen_indices);
}

TEST_CASE("n equal to sn drives every weight to one") {
  std::mt19937_64 rng(37);
  const auto x = oracle::random_dataset(rng, 8, 2);
  ItmoConfig c = small_cfg(8);
  c.epochs = 1500;
  const auto s = optimize_weights(x, c, KernelConfig{0.01});
  for (double v : s.relaxed_weights) CHECK(v > 0.9);
  const auto r = select_subset(s, 8, SelectionMode::global, x.labels());
  CHECK(r.chosen_indices.size() == 8);
}

TEST_CASE("global selection: top-k with lowest-index ties") {
  SelectionState s;
  s.last_sampled_weights = {0.9, 0.1, 0.8, 0.2};
  const std::vector<int> labels{0, 0, 1, 1};
  CHECK(select_subset(s, 2, SelectionMode::global, labels).chosen_indices == std::vector<std::size_t>{0, 2});
  s.last_sampled_weights = {0.5, 0.5, 0.5, 0.5};
  CHECK(select_subset(s, 2, SelectionMode::global, labels).chosen_indices == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(select_subset(s, 5, SelectionMode::global, labels), std::invalid_argument);
}

TEST_CASE("balanced selection equals the per-class argmax found by brute force") {
  std::mt19937_64 rng(41);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1};
  for (int trial = 0; trial < 50; ++trial) {
    SelectionState s;
    for (int i = 0; i < 6; ++i) s.last_sampled_weights.push_back(std::uniform_real_distribution<double>()(rng));
    const auto got = select_subset(s, 2, SelectionMode::balanced, labels).chosen_indices;
    // brute force: best-scoring pair with one member per class
    double best = -1;
    std::vector<std::size_t> want;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 3; b < 6; ++b) {
        const double score = s.last_sampled_weights[a] + s.last_sampled_weights[b];
        if (score > best) {
          best = score;
          want = {a, b};
        }
      }
    CHECK(got == want);
  }
}

TEST_CASE("balanced selection: remainder and small classes") {
  SelectionState s;
  s.last_sampled_weights = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 2};
  // sn = 5 over 3 classes: quotas 2,2,1
  CHECK(select_subset(s, 5, SelectionMode::balanced, labels).chosen_indices ==
        std::vector<std::size_t>{0, 1, 3, 4, 6});
  // sn = 6: class 2 holds one member, its shortfall goes to class 0
  CHECK(select_subset(s, 6, SelectionMode::balanced, labels).chosen_indices ==
        std::vector<std::size_t>{0, 1, 2, 3, 4, 6});
}

TEST_CASE("subset diagnostics") {
  std::mt19937_64 rng(43);
  const auto x = oracle::random_dataset(rng, 30, 2);
  std::vector<std::size_t> all(30);
  std::iota(all.begin(), all.end(), 0);
  const auto d = describe_subset(x, all, KernelConfig{0.1});
  CHECK(d.divergence_to_full == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.subset_entropy == doctest::Approx(renyi_entropy(x, KernelConfig{0.1})));
}
