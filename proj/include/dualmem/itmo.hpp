#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dualmem/dataset.hpp"
#include "dualmem/kernel.hpp"

namespace dualmem {

/// Hyperparameters of the information-theoretic selection optimizer.
/// Defaults are the Split-MNIST column of the published tables, with a
/// temperature of 0.5 (never published).
struct ItmoConfig {
  double lambda_h2 = -1.0;   ///< weight of the subset entropy term, <= 0
  double lambda_cs = 1.0;    ///< weight of the CS divergence term, >= 0
  double lambda_ksp = 5.0;   ///< |sn - sum w| penalty
  double lambda_l1 = 1.0;
  double lambda_h = 1.0;     ///< binary-entropy penalty on each weight
  std::size_t sample_count = 100;
  double learning_rate = 0.03;
  std::size_t epochs = 1500;
  double temperature = 0.5;
  double weight_init = 0.1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument; `n` is the size of the target dataset.
  void validate(std::size_t n) const;
};

inline constexpr double kRelaxedWeightEps = 1e-6;

struct TraceRecord {
  std::size_t step = 0;
  double sum_w = 0.0;
  double h2_term = 0.0;  ///< lambda_h2 * H2(X, w)
  double cs_term = 0.0;  ///< lambda_cs * D_CS(X, X w)
  double reg_term = 0.0;
};

struct SelectionState {
  std::vector<double> relaxed_weights;
  std::vector<double> last_sampled_weights;
  std::size_t step_count = 0;
  std::vector<TraceRecord> trace;
};

enum class SelectionMode { global, balanced };

struct SubsetDiagnostics {
  double subset_entropy = 0.0;     ///< H2 of the chosen rows
  double divergence_to_full = 0.0; ///< D_CS(chosen rows, full set)
};

struct SelectionResult {
  std::vector<std::size_t> chosen_indices;  ///< sorted, distinct
  std::vector<double> final_weights;
  SubsetDiagnostics diagnostics;
};

/// sigmoid((logit(relaxed) + logit(u)) / temperature). Arguments must lie in
/// the open unit interval.
double concrete_sample(double relaxed, double temperature, double u);

double regularizer(const WeightVector& w, const ItmoConfig& cfg);

/// lambda_h2 H2(X w) + lambda_cs D_CS(X, X w) + r(w), weighted estimators.
double info_loss(const FeatureDataset& x, const WeightVector& w, const ItmoConfig& cfg,
                 const KernelConfig& kcfg);

/// Exact gradient of info_loss(x, concrete_sample(relaxed, T, u)) with respect
/// to the relaxed weights, u held fixed.
std::vector<double> info_loss_gradient(const FeatureDataset& x,
                                       std::span<const double> relaxed,
                                       const ItmoConfig& cfg, const KernelConfig& kcfg,
                                       std::span<const double> u);

/// Loss and gradient evaluation over a precomputed Gram matrix. One instance
/// serves a whole optimization run.
class InfoObjective {
 public:
  InfoObjective(const KernelMatrix& kernel, const ItmoConfig& cfg);

  struct Evaluation {
    double loss = 0.0;
    TraceRecord terms;
    std::vector<double> sampled;   ///< w
    std::vector<double> gradient;  ///< d loss / d relaxed
  };

  Evaluation evaluate(std::span<const double> relaxed, std::span<const double> u) const;

 private:
  const KernelMatrix& kernel_;
  ItmoConfig cfg_;
  double full_entropy_;
};

/// Gradient descent on the relaxed weights with fresh concrete noise each
/// epoch. The state's last_sampled_weights hold one extra draw taken after
/// the final epoch, which is what selection ranks.
SelectionState optimize_weights(const FeatureDataset& x, const ItmoConfig& cfg,
                                const KernelConfig& kcfg);
SelectionState optimize_weights(const KernelMatrix& kernel, const ItmoConfig& cfg);

/// Top-sn indices by final sampled weight (lowest index wins ties). Balanced
/// mode spreads sn evenly over the labels present, remainder to the lowest
/// class ids, shortfalls of small classes redistributed in class order.
SelectionResult select_subset(const SelectionState& state, std::size_t sn, SelectionMode mode,
                              std::span<const int> labels);

SubsetDiagnostics describe_subset(const FeatureDataset& x, std::span<const std::size_t> chosen,
                                  const KernelConfig& kcfg);

}  // namespace dualmem
