#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dualmem/bss.hpp"
#include "dualmem/dataset.hpp"
#include "dualmem/itmo.hpp"
#include "dualmem/kernel.hpp"
#include "dualmem/memory.hpp"
#include "dualmem/mlp.hpp"

namespace dualmem {

enum class Scenario { class_il, task_il, domain_il };
enum class Method { itdms, itdms_reservoir, derpp_single, sgd_none };

std::string to_string(Scenario s);
std::string to_string(Method m);
Scenario parse_scenario(const std::string& s);
Method parse_method(const std::string& s);

struct Task {
  FeatureDataset train;
  FeatureDataset test;
  std::vector<int> label_space;  ///< sorted labels the task may use
};

struct TaskStream {
  Scenario scenario = Scenario::class_il;
  std::vector<Task> tasks;
  std::size_t output_dim = 0;  ///< number of logits

  /// Class-IL and Task-IL label spaces must be disjoint, Domain-IL spaces
  /// identical; every label must lie in its task's space and below
  /// output_dim. Throws std::invalid_argument.
  void validate() const;
};

/// All tasks folded into one (joint training control).
TaskStream merge_tasks(const TaskStream& stream);

struct HarnessConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 10;
  std::size_t replay_batch_size = 10;
  double learning_rate = 0.03;
  double alpha = 0.1;  ///< logit-matching weight
  double beta = 0.5;   ///< replayed-label CE weight
  MemoryConfig memory;
  double frac_slow = 0.5;
  double frac_fast = 0.5;
  ItmoConfig itmo;
  KernelConfig kernel;
  bool bss_enabled = true;
  bool reset_fast = false;
  /// Largest candidate pool handed to the selector; bigger task sets are
  /// subsampled uniformly first. 0 means no limit.
  std::size_t selection_pool_limit = 2000;
  Method method = Method::itdms;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {100, 100};

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;         ///< current batch
  double logit_mse = 0.0;  ///< replay draw 1, before alpha
  double replay_ce = 0.0;  ///< replay draw 2, before beta
  double total = 0.0;
};

struct Batch {
  Matrix x;
  std::vector<int> labels;
};

Batch make_batch(const FeatureDataset& data, std::span<const std::size_t> rows);
Batch make_batch(const std::vector<MemoryRecord>& records);

/// One SGD step on CE(batch) + alpha * MSE(stored logits, replay_logits draw)
/// + beta * CE(replay_labels draw). Empty replay batches and zero
/// coefficients contribute nothing. `batch_logits`, when given, receives the
/// pre-step logits of the batch.
LossBreakdown train_step(MlpNet& net, const Batch& batch, const ReplayBatch& replay_logits,
                         const ReplayBatch& replay_labels, double alpha, double beta, double lr,
                         Matrix* batch_logits = nullptr);

/// Random streams used by one run; all derived from the run seed.
struct RunRngs {
  explicit RunRngs(std::uint64_t seed);
  std::uint64_t init_seed;
  std::mt19937_64 shuffle;
  std::mt19937_64 replay;
  std::mt19937_64 reservoir;
  std::mt19937_64 selection;
};

struct EndOfTaskReport {
  std::size_t quota = 0;
  std::size_t inserted = 0;
  bool quota_floored = false;
  DiversityTable diversity;
};

/// Slow-buffer maintenance after task `task_index` completes, using that
/// task's training set only.
EndOfTaskReport end_of_task(DualMemory& mem, const MlpNet& net, const FeatureDataset& task_train,
                            int task_index, Scenario scenario, const HarnessConfig& cfg,
                            RunRngs& rngs);

/// Accuracy on each of the first after_task_index + 1 test sets.
std::vector<double> evaluate(const MlpNet& net, const TaskStream& stream,
                             std::size_t after_task_index);

/// Argmax with the lowest index winning ties; restricted to `allowed` when
/// non-empty.
int predict_label(std::span<const double> logits, std::span<const int> allowed = {});

struct RunMetrics {
  /// accuracy[i][j]: test accuracy on task j after training task i, j <= i.
  std::vector<std::vector<double>> accuracy;
  double average_accuracy = 0.0;
  std::vector<double> forgetting;  ///< max earlier accuracy minus final
  std::map<int, double> final_class_accuracy;
  std::vector<LossBreakdown> losses;
  std::vector<EndOfTaskReport> end_of_task_reports;

  double min_class_accuracy() const;
};

using SnapshotCallback = std::function<void(std::size_t task_index, const DualMemory&)>;

RunMetrics run(const TaskStream& stream, const HarnessConfig& cfg,
               const SnapshotCallback& on_task_end = {});

}  // namespace dualmem
