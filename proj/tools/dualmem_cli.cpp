// dualmem: batch front end for subset selection, continual-learning runs,
// method ablations and buffer inspection.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dualmem/bss.hpp"
#include "dualmem/config.hpp"
#include "dualmem/data_io.hpp"
#include "dualmem/harness.hpp"
#include "dualmem/itmo.hpp"
#include "dualmem/kernel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualmem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
}

std::string config_dir(const std::string& path) {
  return fs::path(path).parent_path().string();
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_select(const Options& opt) {
  SelectConfig cfg = parse_select_config(load_json(opt.config));
  if (opt.seed) cfg.itmo.seed = *opt.seed;
  LoadedData data = load_data(cfg.data, config_dir(opt.config));
  FeatureDataset x = cfg.normalize ? MinMaxScaler::fit(data.train).apply(data.train) : data.train;
  cfg.itmo.validate(x.size());

  const KernelMatrix kernel(x, cfg.kernel);
  const SelectionState state = optimize_weights(kernel, cfg.itmo);
  SelectionResult result = select_subset(state, cfg.itmo.sample_count, cfg.mode, x.labels());
  result.diagnostics = describe_subset(x, result.chosen_indices, cfg.kernel);

  std::mt19937_64 rng(cfg.itmo.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> random_div;
  for (std::size_t r = 0; r < cfg.random_baseline; ++r) {
    std::vector<std::size_t> pick;
    std::sample(all.begin(), all.end(), std::back_inserter(pick), cfg.itmo.sample_count, rng);
    random_div.push_back(describe_subset(x, pick, cfg.kernel).divergence_to_full);
  }
  const double mean = std::accumulate(random_div.begin(), random_div.end(), 0.0) /
                      static_cast<double>(random_div.size());
  const double q1 = quantile(random_div, 0.25);
  const double q3 = quantile(random_div, 0.75);
  const double d = result.diagnostics.divergence_to_full;

  json diag = {{"n", x.size()},
               {"sample_count", cfg.itmo.sample_count},
               {"subset_entropy", result.diagnostics.subset_entropy},
               {"divergence_to_full", d},
               {"final_sum_w", state.trace.empty() ? 0.0 : state.trace.back().sum_w},
               {"random_baseline",
                {{"subsets", cfg.random_baseline}, {"mean", mean}, {"q1", q1}, {"q3", q3}}},
               {"below_random_mean", d <= mean},
               {"within_random_iqr", d >= q1 && d <= q3},
               {"comparison", cfg.itmo.lambda_cs == 0.0 ? "random-equivalent" : "representative"},
               {"itmo", to_json(cfg.itmo)},
               {"sigma", cfg.kernel.sigma}};

  const fs::path out(opt.out);
  write_files_atomically({{out / "chosen_indices.csv", indices_csv(result.chosen_indices)},
                          {out / "final_weights.csv", weights_csv(result.final_weights)},
                          {out / "trace.csv", trace_csv(state.trace)},
                          {out / "diagnostics.json", diag.dump(2) + "\n"}});
  spdlog::info("selected {} of {} rows, D_CS to full set {:.6f} (random mean {:.6f})",
               result.chosen_indices.size(), x.size(), d, mean);
  return 0;
}

TaskStream stream_for(const SimulateConfig& cfg, const std::string& dir) {
  const LoadedData data = load_data(cfg.data, dir);
  return build_stream(data.train, data.test, cfg.stream);
}

int cmd_simulate(const Options& opt) {
  SimulateConfig cfg = parse_simulate_config(load_json(opt.config));
  if (opt.seed) cfg.harness.seed = *opt.seed;
  const TaskStream stream = stream_for(cfg, config_dir(opt.config));

  std::map<fs::path, std::string> files;
  const fs::path out(opt.out);
  SnapshotCallback snap;
  if (cfg.snapshots) {
    snap = [&](std::size_t task, const DualMemory& mem) {
      const SnapshotFiles f = encode_snapshot(mem);
      const std::string stem = "task_" + std::to_string(task);
      files[out / "snapshots" / (stem + ".csv")] = f.csv;
      files[out / "snapshots" / (stem + ".bin")] = f.blob;
    };
  }
  const RunMetrics m = run(stream, cfg.harness, snap);
  files[out / "metrics.csv"] = metrics_csv(m);
  files[out / "summary.json"] = metrics_summary(m, to_json(cfg.harness), cfg.harness.seed).dump(2) + "\n";
  write_files_atomically(files);
  spdlog::info("average accuracy {:.4f}", m.average_accuracy);
  return 0;
}

int cmd_ablate(const Options& opt) {
  AblateConfig cfg = parse_ablate_config(load_json(opt.config));
  if (opt.seed) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = *opt.seed + i;
  }
  const TaskStream stream = stream_for(cfg.base, config_dir(opt.config));

  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Method m : cfg.methods) {
    for (std::uint64_t s : cfg.seeds) jobs.push_back({m, s});
  }
  std::vector<RunMetrics> results(jobs.size());
  const std::size_t width = std::max<std::size_t>(1, opt.jobs);
  for (std::size_t start = 0; start < jobs.size(); start += width) {
    std::vector<std::future<RunMetrics>> wave;
    for (std::size_t i = start; i < std::min(jobs.size(), start + width); ++i) {
      HarnessConfig h = cfg.base.harness;
      h.method = jobs[i].method;
      h.seed = jobs[i].seed;
      wave.push_back(std::async(std::launch::async, [&stream, h] { return run(stream, h); }));
    }
    for (std::size_t k = 0; k < wave.size(); ++k) results[start + k] = wave[k].get();
  }

  std::ostringstream table;
  table << "method,seed,average_accuracy,min_class_accuracy\n";
  std::map<std::string, std::vector<std::pair<double, double>>> per_method;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const std::string name = to_string(jobs[i].method);
    table << name << ',' << jobs[i].seed << ',' << results[i].average_accuracy << ','
          << results[i].min_class_accuracy() << '\n';
    if (!per_method.count(name)) order.push_back(name);
    per_method[name].push_back({results[i].average_accuracy, results[i].min_class_accuracy()});
  }
  json means = json::array();
  for (const auto& name : order) {
    const auto& v = per_method[name];
    double acc = 0.0, worst = 0.0;
    for (const auto& [a, w] : v) {
      acc += a;
      worst += w;
    }
    means.push_back({{"method", name},
                     {"runs", v.size()},
                     {"mean_average_accuracy", acc / static_cast<double>(v.size())},
                     {"mean_min_class_accuracy", worst / static_cast<double>(v.size())}});
  }
  json summary = {{"methods", means}, {"seeds", cfg.seeds}, {"config", to_json(cfg.base.harness)}};
  const fs::path out(opt.out);
  write_files_atomically({{out / "ablation.csv", table.str()},
                          {out / "ablation_summary.json", summary.dump(2) + "\n"}});
  return 0;
}

int cmd_inspect(const Options& opt) {
  const std::string dir = config_dir(opt.config);
  InspectConfig cfg = parse_inspect_config(load_json(opt.config));
  fs::path prefix(cfg.snapshot);
  if (!prefix.is_absolute() && !dir.empty()) prefix = fs::path(dir) / prefix;
  const SnapshotFiles files{read_file(prefix.string() + ".csv"), read_file(prefix.string() + ".bin")};
  const DualMemory mem = decode_snapshot(files, cfg.memory);

  const auto parts = partition_by_class(mem.slow(), cfg.key);
  std::size_t quota = cfg.quota.value_or(parts.empty() ? 0 : mem.slow_budget() / parts.size());
  const DiversityTable table = score_slow_buffer(mem, quota, cfg.key);

  json classes = json::array();
  for (const auto& p : parts) {
    classes.push_back({{"class_id", p.class_id},
                       {"count", p.member_indices.size()},
                       {"central_index", central_sample(p, mem.slow())}});
  }
  json summary = {{"fast_size", mem.fast().size()},
                  {"slow_size", mem.slow().size()},
                  {"seen_count", mem.seen_count()},
                  {"quota", quota},
                  {"classes", classes}};
  const fs::path out(opt.out);
  write_files_atomically({{out / "diversity.csv", diversity_csv(table)},
                          {out / "inspect.json", summary.dump(2) + "\n"}});
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("dualmem");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("DUALMEM_LOG")) {
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && std::string(level) != "off") {
      spdlog::warn("DUALMEM_LOG: unknown level '{}', keeping 'warn'", level);
    } else {
      spdlog::set_level(parsed);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Dual-memory continual learning: selection, simulation, ablation, inspection"};
  app.require_subcommand(1, 1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory")->required();
    sub->add_option("--seed", opt.seed, "Seed override");
    sub->add_option("--jobs", opt.jobs, "Parallel runs (ablate)")->check(CLI::PositiveNumber);
  };
  std::map<CLI::App*, int (*)(const Options&)> handlers;
  handlers[app.add_subcommand("select", "Optimize selection weights and pick a subset")] = cmd_select;
  handlers[app.add_subcommand("simulate", "Run one continual-learning stream")] = cmd_simulate;
  handlers[app.add_subcommand("ablate", "Run methods x seeds and compare")] = cmd_ablate;
  handlers[app.add_subcommand("inspect", "Score a slow-buffer snapshot")] = cmd_inspect;
  for (auto& [sub, fn] : handlers) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    for (auto& [sub, fn] : handlers) {
      if (sub->parsed()) return fn(opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "dualmem: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
