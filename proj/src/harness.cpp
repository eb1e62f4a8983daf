#include "dualmem/harness.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

#include <spdlog/spdlog.h>

namespace dualmem {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::class_il: return "class-il";
    case Scenario::task_il: return "task-il";
    case Scenario::domain_il: return "domain-il";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::itdms: return "itdms";
    case Method::itdms_reservoir: return "itdms-reservoir";
    case Method::derpp_single: return "der++-single";
    case Method::sgd_none: return "sgd-none";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  for (Scenario v : {Scenario::class_il, Scenario::task_il, Scenario::domain_il}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown scenario '" + s + "' (class-il, task-il, domain-il)");
}

Method parse_method(const std::string& s) {
  for (Method v : {Method::itdms, Method::itdms_reservoir, Method::derpp_single, Method::sgd_none}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown method '" + s +
                              "' (itdms, itdms-reservoir, der++-single, sgd-none)");
}

void TaskStream::validate() const {
  if (tasks.empty()) throw std::invalid_argument("TaskStream: no tasks");
  if (output_dim == 0) throw std::invalid_argument("TaskStream: output_dim is 0");
  std::set<int> used;
  const std::size_t dim = tasks.front().train.dim();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    const std::string where = "TaskStream: task " + std::to_string(t);
    if (task.train.empty() || task.test.empty()) throw std::invalid_argument(where + " has an empty split");
    if (task.train.dim() != dim || task.test.dim() != dim) {
      throw std::invalid_argument(where + " feature dimension differs");
    }
    if (task.label_space.empty() || !std::is_sorted(task.label_space.begin(), task.label_space.end())) {
      throw std::invalid_argument(where + " label space must be sorted and non-empty");
    }
    std::set<int> space(task.label_space.begin(), task.label_space.end());
    for (const auto* split : {&task.train, &task.test}) {
      for (int y : split->labels()) {
        if (!space.count(y)) throw std::invalid_argument(where + " has label outside its space");
        if (static_cast<std::size_t>(y) >= output_dim) throw std::invalid_argument(where + " label >= output_dim");
      }
    }
    if (scenario == Scenario::domain_il) {
      if (task.label_space != tasks.front().label_space) {
        throw std::invalid_argument(where + " label space differs (Domain-IL shares one space)");
      }
    } else {
      for (int y : task.label_space) {
        if (!used.insert(y).second) {
          throw std::invalid_argument(where + " reuses label " + std::to_string(y));
        }
      }
    }
  }
}

TaskStream merge_tasks(const TaskStream& stream) {
  TaskStream out;
  out.scenario = stream.scenario;
  out.output_dim = stream.output_dim;
  Task joint;
  std::set<int> space;
  for (const Task& t : stream.tasks) {
    if (joint.train.empty()) {
      joint.train = t.train;
      joint.test = t.test;
    } else {
      joint.train.append(t.train);
      joint.test.append(t.test);
    }
    space.insert(t.label_space.begin(), t.label_space.end());
  }
  joint.label_space.assign(space.begin(), space.end());
  out.tasks.push_back(std::move(joint));
  return out;
}

void HarnessConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("HarnessConfig: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("HarnessConfig: batch_size must be >= 1");
  if (replay_batch_size == 0) throw std::invalid_argument("HarnessConfig: replay_batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("HarnessConfig: learning_rate must be positive");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("HarnessConfig: alpha, beta must be >= 0");
  if (!(frac_slow >= 0.0 && frac_slow <= 1.0) || !(frac_fast >= 0.0 && frac_fast <= 1.0)) {
    throw std::invalid_argument("HarnessConfig: replay fractions must lie in [0,1]");
  }
  memory.validate();
  kernel.validate();
  for (std::size_t h : hidden) {
    if (h == 0) throw std::invalid_argument("HarnessConfig: hidden layer of size 0");
  }
}

Batch make_batch(const FeatureDataset& data, std::span<const std::size_t> rows) {
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.dim()));
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = data.row(rows[i]);
    for (std::size_t j = 0; j < r.size(); ++j) {
      b.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    b.labels.push_back(data.label(rows[i]));
  }
  return b;
}

Batch make_batch(const std::vector<MemoryRecord>& records) {
  Batch b;
  if (records.empty()) return b;
  const std::size_t d = records.front().features.size();
  b.x.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      b.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].features[j];
    }
    b.labels.push_back(records[i].label);
  }
  return b;
}

namespace {

Matrix stored_logits(const std::vector<MemoryRecord>& records, std::size_t width) {
  Matrix z(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].logits.size() != width) {
      throw std::invalid_argument("train_step: stored logits width differs from network output");
    }
    for (std::size_t j = 0; j < width; ++j) {
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].logits[j];
    }
  }
  return z;
}

std::vector<double> row_of(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), m.row(i).data() + m.cols()};
}

}  // namespace

LossBreakdown train_step(MlpNet& net, const Batch& batch, const ReplayBatch& replay_logits,
                         const ReplayBatch& replay_labels, double alpha, double beta, double lr,
                         Matrix* batch_logits) {
  if (batch.labels.empty()) throw std::invalid_argument("train_step: empty batch");
  LossBreakdown out;
  std::vector<LossTerm> terms;
  terms.reserve(3);

  const ForwardTrace main = forward(net, batch.x);
  out.ce = mean_cross_entropy(main.logits(), batch.labels);
  out.total = out.ce;
  terms.push_back({LossTerm::Kind::cross_entropy, 1.0, &main, batch.labels, {}});

  ForwardTrace t1;
  if (alpha != 0.0 && !replay_logits.empty()) {
    const Batch rb = make_batch(replay_logits.records);
    t1 = forward(net, rb.x);
    Matrix targets = stored_logits(replay_logits.records, net.output_dim());
    out.logit_mse = mean_mse_logits(t1.logits(), targets);
    out.total += alpha * out.logit_mse;
    terms.push_back({LossTerm::Kind::logit_mse, alpha, &t1, {}, std::move(targets)});
  }
  ForwardTrace t2;
  if (beta != 0.0 && !replay_labels.empty()) {
    const Batch rb = make_batch(replay_labels.records);
    t2 = forward(net, rb.x);
    out.replay_ce = mean_cross_entropy(t2.logits(), rb.labels);
    out.total += beta * out.replay_ce;
    terms.push_back({LossTerm::Kind::cross_entropy, beta, &t2, rb.labels, {}});
  }

  if (batch_logits) *batch_logits = main.logits();
  const Gradients g = backward(net, terms);
  sgd_step(net, g, lr);
  return out;
}

RunRngs::RunRngs(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x64756d6cu};
  std::array<std::uint64_t, 5> s{};
  std::array<std::uint32_t, 10> raw{};
  seq.generate(raw.begin(), raw.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
  }
  init_seed = s[0];
  shuffle.seed(s[1]);
  replay.seed(s[2]);
  reservoir.seed(s[3]);
  selection.seed(s[4]);
}

int predict_label(std::span<const double> logits, std::span<const int> allowed) {
  if (logits.empty()) throw std::invalid_argument("predict_label: no logits");
  int best = -1;
  auto consider = [&](int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= logits.size()) {
      throw std::invalid_argument("predict_label: allowed label out of range");
    }
    if (best < 0 || logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)]) best = c;
  };
  if (allowed.empty()) {
    for (std::size_t c = 0; c < logits.size(); ++c) consider(static_cast<int>(c));
  } else {
    std::vector<int> sorted(allowed.begin(), allowed.end());
    std::sort(sorted.begin(), sorted.end());
    for (int c : sorted) consider(c);
  }
  return best;
}

namespace {

struct TaskEval {
  double accuracy = 0.0;
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  ///< correct, total
};

TaskEval evaluate_task(const MlpNet& net, const Task& task, Scenario scenario) {
  std::vector<std::size_t> rows(task.test.size());
  std::iota(rows.begin(), rows.end(), 0);
  const Batch b = make_batch(task.test, rows);
  const ForwardTrace t = forward(net, b.x);
  const Matrix& z = t.logits();
  std::span<const int> allowed;
  if (scenario == Scenario::task_il) allowed = task.label_space;
  TaskEval e;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto row = row_of(z, i);
    const int y = b.labels[static_cast<std::size_t>(i)];
    const bool ok = predict_label(row, allowed) == y;
    correct += ok;
    auto& pc = e.per_class[y];
    pc.first += ok;
    pc.second += 1;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(z.rows());
  return e;
}

PartitionKey key_for(Scenario s) {
  return s == Scenario::domain_il ? PartitionKey::task_and_label : PartitionKey::label;
}

std::vector<MemoryRecord> capture_records(const MlpNet& net, const FeatureDataset& data,
                                          std::span<const std::size_t> rows, int task_index) {
  std::vector<MemoryRecord> out;
  if (rows.empty()) return out;
  const Batch b = make_batch(data, rows);
  const ForwardTrace t = forward(net, b.x);
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = data.row(rows[i]);
    out.push_back({std::vector<float>(f.begin(), f.end()), data.label(rows[i]),
                   row_of(t.logits(), static_cast<Eigen::Index>(i)), task_index});
  }
  return out;
}

}  // namespace

std::vector<double> evaluate(const MlpNet& net, const TaskStream& stream,
                             std::size_t after_task_index) {
  if (after_task_index >= stream.tasks.size()) {
    throw std::out_of_range("evaluate: task index beyond stream");
  }
  std::vector<double> row;
  for (std::size_t j = 0; j <= after_task_index; ++j) {
    row.push_back(evaluate_task(net, stream.tasks[j], stream.scenario).accuracy);
  }
  return row;
}

EndOfTaskReport end_of_task(DualMemory& mem, const MlpNet& net, const FeatureDataset& task_train,
                            int task_index, Scenario scenario, const HarnessConfig& cfg,
                            RunRngs& rngs) {
  EndOfTaskReport report;
  if (cfg.method == Method::itdms_reservoir) {
    std::vector<std::size_t> rows(task_train.size());
    std::iota(rows.begin(), rows.end(), 0);
    for (auto& rec : capture_records(net, task_train, rows, task_index)) {
      mem.slow_reservoir_update(std::move(rec), rngs.reservoir);
    }
    report.inserted = task_train.size();
  } else if (cfg.method == Method::itdms) {
    const PartitionKey key = key_for(scenario);
    const std::size_t budget = mem.slow_budget();
    // partition keys before and after this task's classes join
    std::set<std::pair<int, int>> keys_prev;
    for (const auto& r : mem.slow()) {
      keys_prev.insert({key == PartitionKey::task_and_label ? r.task : 0, r.label});
    }
    std::set<std::pair<int, int>> keys_task;
    for (int y : task_train.distinct_labels()) {
      keys_task.insert({key == PartitionKey::task_and_label ? task_index : 0, y});
    }
    std::set<std::pair<int, int>> keys_next = keys_prev;
    keys_next.insert(keys_task.begin(), keys_task.end());
    std::size_t new_classes = 0;
    for (const auto& k : keys_task) new_classes += keys_prev.count(k) == 0;

    if (budget > 0 && new_classes > 0) {
      const SlowAllocation alloc = slow_capacity_for_task(2 * budget, keys_prev.size(), keys_next.size());
      report.quota = alloc.quota;
      report.quota_floored = alloc.floored;
      if (cfg.bss_enabled) report.diversity = balanced_remove(mem, alloc.quota, key);
      const std::size_t free = budget - std::min(budget, mem.slow().size());
      std::size_t target = std::min(free, alloc.quota * new_classes);

      // candidate pool: the task's rows whose class is new to the slow buffer
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < task_train.size(); ++i) {
        const std::pair<int, int> k{key == PartitionKey::task_and_label ? task_index : 0,
                                    task_train.label(i)};
        if (!keys_prev.count(k)) pool.push_back(i);
      }
      if (cfg.selection_pool_limit > 0 && pool.size() > cfg.selection_pool_limit) {
        std::vector<std::size_t> sub;
        std::sample(pool.begin(), pool.end(), std::back_inserter(sub), cfg.selection_pool_limit,
                    rngs.selection);
        pool = std::move(sub);
      }
      target = std::min(target, pool.size());
      if (target > 0) {
        const FeatureDataset candidates = task_train.subset(pool);
        std::vector<std::size_t> chosen_rows;
        if (target == pool.size()) {
          chosen_rows = pool;
        } else {
          ItmoConfig icfg = cfg.itmo;
          icfg.sample_count = target;
          icfg.seed = rngs.selection();
          const KernelMatrix kernel(candidates, cfg.kernel);
          const SelectionState state = optimize_weights(kernel, icfg);
          const SelectionResult sel =
              select_subset(state, target, SelectionMode::balanced, candidates.labels());
          for (std::size_t i : sel.chosen_indices) chosen_rows.push_back(pool[i]);
        }
        mem.insert_slow(capture_records(net, task_train, chosen_rows, task_index));
        report.inserted = chosen_rows.size();
      }
    }
    spdlog::debug("end of task {}: quota {} inserted {} slow size {}", task_index, report.quota,
                  report.inserted, mem.slow().size());
  }
  if (cfg.reset_fast) mem.reset_fast();
  return report;
}

double RunMetrics::min_class_accuracy() const {
  double m = 1.0;
  for (const auto& [c, a] : final_class_accuracy) m = std::min(m, a);
  return m;
}

RunMetrics run(const TaskStream& stream, const HarnessConfig& cfg,
               const SnapshotCallback& on_task_end) {
  stream.validate();
  cfg.validate();
  RunRngs rngs(cfg.seed);

  std::vector<std::size_t> sizes{stream.tasks.front().train.dim()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(stream.output_dim);
  MlpNet net = MlpNet::create(sizes, rngs.init_seed);

  MemoryConfig mcfg = cfg.memory;
  double frac_slow = cfg.frac_slow;
  double frac_fast = cfg.frac_fast;
  const bool uses_memory = cfg.method != Method::sgd_none;
  if (cfg.method == Method::derpp_single) {
    mcfg = {mcfg.max_capacity, 0, mcfg.max_capacity};
    frac_slow = 0.0;
    frac_fast = 1.0;
  } else if (!uses_memory) {
    mcfg = {0, 0, mcfg.max_capacity};
  }
  DualMemory mem(mcfg);

  const std::size_t n_tasks = stream.tasks.size();
  RunMetrics metrics;
  for (std::size_t ti = 0; ti < n_tasks; ++ti) {
    const Task& task = stream.tasks[ti];
    const int task_index = static_cast<int>(ti);
    std::vector<std::size_t> order(task.train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rngs.shuffle);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> rows(order.data() + start, stop - start);
        const Batch batch = make_batch(task.train, rows);
        ReplayBatch r1, r2;
        if (uses_memory && mem.total_size() > 0) {
          r1 = mem.sample_replay(cfg.replay_batch_size, frac_slow, frac_fast, rngs.replay);
          r2 = mem.sample_replay(cfg.replay_batch_size, frac_slow, frac_fast, rngs.replay);
        }
        Matrix logits;
        metrics.losses.push_back(train_step(net, batch, r1, r2, uses_memory ? cfg.alpha : 0.0,
                                            uses_memory ? cfg.beta : 0.0, cfg.learning_rate,
                                            &logits));
        if (uses_memory) {
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto f = task.train.row(rows[i]);
            mem.reservoir_update({std::vector<float>(f.begin(), f.end()), batch.labels[i],
                                  row_of(logits, static_cast<Eigen::Index>(i)), task_index},
                                 rngs.reservoir);
          }
        }
      }
    }
    metrics.accuracy.push_back(evaluate(net, stream, ti));
    spdlog::info("{} seed {} task {}: mean seen accuracy {:.4f}", to_string(cfg.method), cfg.seed,
                 ti, std::accumulate(metrics.accuracy.back().begin(), metrics.accuracy.back().end(), 0.0) /
                         static_cast<double>(ti + 1));
    const bool dual = cfg.method == Method::itdms || cfg.method == Method::itdms_reservoir;
    if (dual && ti + 1 < n_tasks) {
      metrics.end_of_task_reports.push_back(
          end_of_task(mem, net, task.train, task_index, stream.scenario, cfg, rngs));
    }
    if (on_task_end && uses_memory) on_task_end(ti, mem);
  }

  const auto& last = metrics.accuracy.back();
  metrics.average_accuracy =
      std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(last.size());
  metrics.forgetting.assign(n_tasks, 0.0);
  for (std::size_t j = 0; j < n_tasks; ++j) {
    double best = 0.0;
    for (std::size_t i = j; i < n_tasks; ++i) best = std::max(best, metrics.accuracy[i][j]);
    metrics.forgetting[j] = best - last[j];
  }
  std::map<int, std::pair<std::size_t, std::size_t>> counts;
  for (const Task& t : stream.tasks) {
    for (const auto& [c, pc] : evaluate_task(net, t, stream.scenario).per_class) {
      counts[c].first += pc.first;
      counts[c].second += pc.second;
    }
  }
  for (const auto& [c, pc] : counts) {
    metrics.final_class_accuracy[c] = static_cast<double>(pc.first) / static_cast<double>(pc.second);
  }
  return metrics;
}

}  // namespace dualmem
