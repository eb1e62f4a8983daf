#include "dualmem/itmo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace dualmem {
namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double draw_open_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = 0.0;
  while (u == 0.0) u = dist(rng);
  return u;
}

}  // namespace

void ItmoConfig::validate(std::size_t n) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ItmoConfig: " + what); };
  if (!(lambda_h2 <= 0.0)) fail("lambda_h2 must be <= 0");
  if (!(lambda_cs >= 0.0)) fail("lambda_cs must be >= 0");
  if (!(lambda_ksp >= 0.0) || !(lambda_l1 >= 0.0) || !(lambda_h >= 0.0)) {
    fail("regularizer weights must be >= 0");
  }
  if (sample_count == 0) fail("sample_count must be positive");
  if (sample_count > n) {
    fail("sample_count " + std::to_string(sample_count) + " exceeds dataset size " +
         std::to_string(n));
  }
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (epochs == 0) fail("epochs must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(weight_init > 0.0 && weight_init < 1.0)) fail("weight_init must lie in (0,1)");
}

double concrete_sample(double relaxed, double temperature, double u) {
  if (!(relaxed > 0.0 && relaxed < 1.0) || !(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("concrete_sample: arguments must lie in (0,1)");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("concrete_sample: temperature must be positive");
  return sigmoid((logit(relaxed) + logit(u)) / temperature);
}

double regularizer(const WeightVector& w, const ItmoConfig& cfg) {
  double sum = 0.0;
  double abs_sum = 0.0;
  double ent = 0.0;
  for (double v : w.values()) {
    sum += v;
    abs_sum += std::abs(v);
    if (v > 0.0) ent += v * std::log(v);
    if (v < 1.0) ent += (1.0 - v) * std::log1p(-v);
  }
  const double sn = static_cast<double>(cfg.sample_count);
  return cfg.lambda_ksp * std::abs(sn - sum) + cfg.lambda_l1 * abs_sum - cfg.lambda_h * ent;
}

double info_loss(const FeatureDataset& x, const WeightVector& w, const ItmoConfig& cfg,
                 const KernelConfig& kcfg) {
  const double h2 = weighted_renyi_entropy(x, w, kcfg);
  const double cs = weighted_cs_divergence(x, w, kcfg);
  return cfg.lambda_h2 * h2 + cfg.lambda_cs * cs + regularizer(w, cfg);
}

std::vector<double> info_loss_gradient(const FeatureDataset& x, std::span<const double> relaxed,
                                       const ItmoConfig& cfg, const KernelConfig& kcfg,
                                       std::span<const double> u) {
  const KernelMatrix kernel(x, kcfg);
  return InfoObjective(kernel, cfg).evaluate(relaxed, u).gradient;
}

InfoObjective::InfoObjective(const KernelMatrix& kernel, const ItmoConfig& cfg)
    : kernel_(kernel), cfg_(cfg) {
  const double n = static_cast<double>(kernel.size());
  full_entropy_ = entropy_from_potential(kernel.total() / (n * n));
}

InfoObjective::Evaluation InfoObjective::evaluate(std::span<const double> relaxed,
                                                  std::span<const double> u) const {
  const std::size_t n = kernel_.size();
  if (relaxed.size() != n || u.size() != n) {
    throw std::invalid_argument("InfoObjective::evaluate: size mismatch");
  }
  const double temp = cfg_.temperature;

  Evaluation ev;
  ev.sampled.resize(n);
  std::vector<double> z(n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    z[j] = (logit(relaxed[j]) + logit(u[j])) / temp;
    ev.sampled[j] = sigmoid(z[j]);
    s += ev.sampled[j];
  }
  if (!(s > 0.0)) throw std::runtime_error("InfoObjective: sampled weights sum to zero");

  std::vector<double> a(n);
  kernel_.multiply(ev.sampled, a);
  double quad = 0.0;
  double cross = 0.0;
  const auto& r = kernel_.row_sums();
  for (std::size_t j = 0; j < n; ++j) {
    quad += ev.sampled[j] * a[j];
    cross += r[j] * ev.sampled[j];
  }
  const double nn = static_cast<double>(n);
  const double v_w = quad / (s * s);
  const double v_c = cross / (nn * s);
  const double h2_w = entropy_from_potential(v_w);
  const double h2_c = entropy_from_potential(v_c);
  const double d_cs = 2.0 * h2_c - full_entropy_ - h2_w;

  const double sn = static_cast<double>(cfg_.sample_count);
  double ent = 0.0;  // sum w log w + (1-w) log(1-w)
  for (std::size_t j = 0; j < n; ++j) {
    const double w = ev.sampled[j];
    ent -= w * softplus(-z[j]) + (1.0 - w) * softplus(z[j]);
  }
  const double reg = cfg_.lambda_ksp * std::abs(sn - s) + cfg_.lambda_l1 * s - cfg_.lambda_h * ent;

  ev.terms.sum_w = s;
  ev.terms.h2_term = cfg_.lambda_h2 * h2_w;
  ev.terms.cs_term = cfg_.lambda_cs * std::max(d_cs, 0.0);
  ev.terms.reg_term = reg;
  ev.loss = ev.terms.h2_term + ev.terms.cs_term + reg;

  // dH2w/dw_j and dHc/dw_j; zero where the potential sits on the floor.
  const bool w_live = v_w > kPotentialFloor;
  const bool c_live = v_c > kPotentialFloor;
  const double common = -cfg_.lambda_ksp * sign(sn - s) + cfg_.lambda_l1;
  ev.gradient.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double d_h2w = w_live ? -(2.0 * a[j] / (s * s) - 2.0 * v_w / s) / v_w : 0.0;
    const double d_hc = c_live ? -(r[j] / (nn * s) - v_c / s) / v_c : 0.0;
    const double d_cs_j = 2.0 * d_hc - d_h2w;
    // d/dw of -lambda_h (w log w + (1-w) log(1-w)) is -lambda_h logit(w) = -lambda_h z
    const double d_loss_dw =
        cfg_.lambda_h2 * d_h2w + cfg_.lambda_cs * d_cs_j + common - cfg_.lambda_h * z[j];
    const double wj = ev.sampled[j];
    const double one_minus = sigmoid(-z[j]);
    const double p = relaxed[j];
    const double dw_drelaxed = wj * one_minus / (temp * p * (1.0 - p));
    ev.gradient[j] = d_loss_dw * dw_drelaxed;
  }
  return ev;
}

SelectionState optimize_weights(const FeatureDataset& x, const ItmoConfig& cfg,
                                const KernelConfig& kcfg) {
  cfg.validate(x.size());
  const KernelMatrix kernel(x, kcfg);
  return optimize_weights(kernel, cfg);
}

SelectionState optimize_weights(const KernelMatrix& kernel, const ItmoConfig& cfg) {
  const std::size_t n = kernel.size();
  cfg.validate(n);
  const InfoObjective objective(kernel, cfg);
  std::mt19937_64 rng(cfg.seed);

  SelectionState state;
  state.relaxed_weights.assign(n, cfg.weight_init);
  state.trace.reserve(cfg.epochs);
  std::vector<double> u(n);
  for (std::size_t step = 0; step < cfg.epochs; ++step) {
    for (double& v : u) v = draw_open_unit(rng);
    auto ev = objective.evaluate(state.relaxed_weights, u);
    if (!std::isfinite(ev.loss)) {
      throw std::runtime_error("optimize_weights: non-finite loss at step " + std::to_string(step));
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double next = state.relaxed_weights[j] - cfg.learning_rate * ev.gradient[j];
      state.relaxed_weights[j] =
          std::clamp(next, kRelaxedWeightEps, 1.0 - kRelaxedWeightEps);
    }
    ev.terms.step = step;
    state.trace.push_back(ev.terms);
    state.last_sampled_weights = std::move(ev.sampled);
    ++state.step_count;
  }
  // final draw from the optimized relaxation
  state.last_sampled_weights.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    state.last_sampled_weights[j] =
        concrete_sample(state.relaxed_weights[j], cfg.temperature, draw_open_unit(rng));
  }
  return state;
}

namespace {

// indices of `pool` ordered by descending weight, ascending index on ties
std::vector<std::size_t> rank_by_weight(std::vector<std::size_t> pool,
                                        std::span<const double> weights) {
  std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
    return weights[a] > weights[b];
  });
  return pool;
}

}  // namespace

SelectionResult select_subset(const SelectionState& state, std::size_t sn, SelectionMode mode,
                              std::span<const int> labels) {
  const auto& w = state.last_sampled_weights;
  const std::size_t n = w.size();
  if (sn > n) throw std::invalid_argument("select_subset: sn exceeds number of weights");

  SelectionResult result;
  result.final_weights = w;
  if (mode == SelectionMode::global) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    auto ranked = rank_by_weight(std::move(all), w);
    result.chosen_indices.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(sn));
  } else {
    if (labels.size() != n) throw std::invalid_argument("select_subset: label count mismatch");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    const std::size_t k = members.size();
    std::vector<std::vector<std::size_t>> ranked;
    std::vector<std::size_t> quota;
    std::size_t slot = 0;
    for (auto& [label, idx] : members) {
      ranked.push_back(rank_by_weight(idx, w));
      quota.push_back(sn / k + (slot < sn % k ? 1 : 0));
      ++slot;
    }
    // cap by class size, then hand the shortfall to classes with spare members
    std::size_t shortfall = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (quota[c] > ranked[c].size()) {
        shortfall += quota[c] - ranked[c].size();
        quota[c] = ranked[c].size();
      }
    }
    while (shortfall > 0) {
      bool moved = false;
      for (std::size_t c = 0; c < k && shortfall > 0; ++c) {
        if (quota[c] < ranked[c].size()) {
          ++quota[c];
          --shortfall;
          moved = true;
        }
      }
      if (!moved) break;
    }
    for (std::size_t c = 0; c < k; ++c) {
      result.chosen_indices.insert(result.chosen_indices.end(), ranked[c].begin(),
                                   ranked[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
  }
  std::sort(result.chosen_indices.begin(), result.chosen_indices.end());
  const double nan = std::nan("");
  result.diagnostics = {nan, nan};
  return result;
}

SubsetDiagnostics describe_subset(const FeatureDataset& x, std::span<const std::size_t> chosen,
                                  const KernelConfig& kcfg) {
  const auto sub = x.subset(chosen);
  return {renyi_entropy(sub, kcfg), cs_divergence(sub, x, kcfg)};
}

}  // namespace dualmem
