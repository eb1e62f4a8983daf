#include "dualmem/config.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

namespace dualmem {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
}

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  require_object(j, where);
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

DataSpec parse_data(const json& j) {
  const std::string where = "data";
  require_object(j, where);
  DataSpec d;
  const std::string source = j.value("source", "mixture");
  if (source == "mixture") {
    allow_keys(j, where, {"source", "components", "seed", "test_per_component"});
    read(j, "seed", d.mixture.seed, where);
    read(j, "test_per_component", d.test_per_component, where);
    if (!j.contains("components")) throw std::invalid_argument("data.components: required for mixture data");
    for (const auto& c : j.at("components")) {
      allow_keys(c, "data.components[]", {"mean", "stddev", "label", "count"});
      MixtureComponent mc;
      read(c, "mean", mc.mean, "data.components[]");
      read(c, "stddev", mc.stddev, "data.components[]");
      read(c, "label", mc.label, "data.components[]");
      read(c, "count", mc.count, "data.components[]");
      d.mixture.components.push_back(std::move(mc));
    }
    d.mixture.validate();
  } else if (source == "native") {
    d.source = DataSpec::Source::native;
    allow_keys(j, where, {"source", "train", "test"});
    read(j, "train", d.train_path, where);
    read(j, "test", d.test_path, where);
    if (d.train_path.empty()) throw std::invalid_argument("data.train: required for native data");
  } else if (source == "idx") {
    d.source = DataSpec::Source::idx;
    allow_keys(j, where, {"source", "train_images", "train_labels", "test_images", "test_labels"});
    read(j, "train_images", d.train_images, where);
    read(j, "train_labels", d.train_labels, where);
    read(j, "test_images", d.test_images, where);
    read(j, "test_labels", d.test_labels, where);
    if (d.train_images.empty() || d.train_labels.empty()) {
      throw std::invalid_argument("data: idx sources need train_images and train_labels");
    }
  } else {
    throw std::invalid_argument("data.source: unknown value '" + source + "' (mixture, native, idx)");
  }
  return d;
}

ItmoConfig parse_itmo(const json& j) {
  const std::string where = "itmo";
  allow_keys(j, where, {"lambda_h2", "lambda_cs", "lambda_ksp", "lambda_l1", "lambda_h", "sample_count",
                        "learning_rate", "epochs", "temperature", "weight_init", "seed"});
  ItmoConfig c;
  read(j, "lambda_h2", c.lambda_h2, where);
  read(j, "lambda_cs", c.lambda_cs, where);
  read(j, "lambda_ksp", c.lambda_ksp, where);
  read(j, "lambda_l1", c.lambda_l1, where);
  read(j, "lambda_h", c.lambda_h, where);
  read(j, "sample_count", c.sample_count, where);
  read(j, "learning_rate", c.learning_rate, where);
  read(j, "epochs", c.epochs, where);
  read(j, "temperature", c.temperature, where);
  read(j, "weight_init", c.weight_init, where);
  read(j, "seed", c.seed, where);
  return c;
}

KernelConfig parse_kernel(const json& j) {
  allow_keys(j, "kernel", {"sigma"});
  KernelConfig k;
  read(j, "sigma", k.sigma, "kernel");
  k.validate();
  return k;
}

MemoryConfig parse_memory(const json& j) {
  allow_keys(j, "memory", {"fast_capacity", "slow_capacity", "max_capacity"});
  MemoryConfig m;
  read(j, "fast_capacity", m.fast_capacity, "memory");
  read(j, "slow_capacity", m.slow_capacity, "memory");
  m.max_capacity = m.fast_capacity + m.slow_capacity;
  read(j, "max_capacity", m.max_capacity, "memory");
  m.validate();
  return m;
}

StreamSpec parse_stream(const json& j) {
  const std::string where = "stream";
  allow_keys(j, where, {"scenario", "tasks", "classes_per_task", "train_counts", "test_counts",
                        "imbalanced_first", "imbalance_ratio", "normalize", "transform",
                        "image_side", "seed"});
  StreamSpec s;
  if (j.contains("scenario")) s.scenario = parse_scenario(j.at("scenario").get<std::string>());
  read(j, "tasks", s.tasks, where);
  read(j, "classes_per_task", s.classes_per_task, where);
  read(j, "train_counts", s.train_counts, where);
  read(j, "test_counts", s.test_counts, where);
  read(j, "normalize", s.normalize, where);
  read(j, "image_side", s.image_side, where);
  read(j, "seed", s.seed, where);
  if (j.contains("imbalanced_first")) {
    if (j.contains("train_counts")) {
      throw std::invalid_argument("stream: give either train_counts or imbalanced_first, not both");
    }
    std::size_t first = 0, ratio = 10;
    read(j, "imbalanced_first", first, where);
    read(j, "imbalance_ratio", ratio, where);
    s.train_counts = imbalanced_counts(s.tasks, first, ratio);
  }
  if (j.contains("transform")) {
    const auto t = j.at("transform").get<std::string>();
    if (t == "none") s.transform = DomainTransform::none;
    else if (t == "permute") s.transform = DomainTransform::permute;
    else if (t == "rotate") s.transform = DomainTransform::rotate;
    else throw std::invalid_argument("stream.transform: unknown value '" + t + "' (none, permute, rotate)");
  }
  s.validate();
  return s;
}

HarnessConfig parse_harness(const json& j) {
  const std::string where = "harness";
  allow_keys(j, where, {"epochs", "batch_size", "replay_batch_size", "learning_rate", "alpha", "beta",
                        "frac_slow", "frac_fast", "bss_enabled", "reset_fast",
                        "selection_pool_limit", "method", "seed", "hidden"});
  HarnessConfig h;
  read(j, "epochs", h.epochs, where);
  read(j, "batch_size", h.batch_size, where);
  read(j, "replay_batch_size", h.replay_batch_size, where);
  read(j, "learning_rate", h.learning_rate, where);
  read(j, "alpha", h.alpha, where);
  read(j, "beta", h.beta, where);
  read(j, "frac_slow", h.frac_slow, where);
  read(j, "frac_fast", h.frac_fast, where);
  read(j, "bss_enabled", h.bss_enabled, where);
  read(j, "reset_fast", h.reset_fast, where);
  read(j, "selection_pool_limit", h.selection_pool_limit, where);
  read(j, "seed", h.seed, where);
  read(j, "hidden", h.hidden, where);
  if (j.contains("method")) h.method = parse_method(j.at("method").get<std::string>());
  return h;
}

SimulateConfig parse_simulate_body(const json& j) {
  SimulateConfig c;
  if (!j.contains("data")) throw std::invalid_argument("config: 'data' is required");
  c.data = parse_data(j.at("data"));
  if (j.contains("stream")) c.stream = parse_stream(j.at("stream"));
  if (j.contains("harness")) c.harness = parse_harness(j.at("harness"));
  if (j.contains("memory")) c.harness.memory = parse_memory(j.at("memory"));
  if (j.contains("itmo")) c.harness.itmo = parse_itmo(j.at("itmo"));
  if (j.contains("kernel")) c.harness.kernel = parse_kernel(j.at("kernel"));
  read(j, "snapshots", c.snapshots, "config");
  c.harness.validate();
  return c;
}

}  // namespace

LoadedData load_data(const DataSpec& spec, const std::string& base_dir) {
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : fs::path(base_dir) / path).string();
  };
  LoadedData out;
  switch (spec.source) {
    case DataSpec::Source::mixture: {
      out.train = generate_mixture(spec.mixture);
      MixtureSpec test = spec.mixture;
      test.seed = spec.mixture.seed + 1;
      if (spec.test_per_component > 0) {
        for (auto& c : test.components) c.count = spec.test_per_component;
      }
      out.test = generate_mixture(test);
      break;
    }
    case DataSpec::Source::native:
      out.train = load_dataset(resolve(spec.train_path));
      out.test = spec.test_path.empty() ? out.train : load_dataset(resolve(spec.test_path));
      break;
    case DataSpec::Source::idx:
      out.train = read_idx(resolve(spec.train_images), resolve(spec.train_labels));
      out.test = spec.test_images.empty() ? out.train
                                          : read_idx(resolve(spec.test_images), resolve(spec.test_labels));
      break;
  }
  return out;
}

SelectConfig parse_select_config(const json& j) {
  allow_keys(j, "config", {"data", "normalize", "itmo", "kernel", "mode", "random_baseline"});
  SelectConfig c;
  if (!j.contains("data")) throw std::invalid_argument("config: 'data' is required");
  c.data = parse_data(j.at("data"));
  read(j, "normalize", c.normalize, "config");
  if (j.contains("itmo")) c.itmo = parse_itmo(j.at("itmo"));
  if (j.contains("kernel")) c.kernel = parse_kernel(j.at("kernel"));
  read(j, "random_baseline", c.random_baseline, "config");
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "global") c.mode = SelectionMode::global;
    else if (m == "balanced") c.mode = SelectionMode::balanced;
    else throw std::invalid_argument("config.mode: unknown value '" + m + "' (global, balanced)");
  }
  if (c.random_baseline < 2) throw std::invalid_argument("config.random_baseline: need at least 2 subsets");
  return c;
}

SimulateConfig parse_simulate_config(const json& j) {
  allow_keys(j, "config", {"data", "stream", "harness", "memory", "itmo", "kernel", "snapshots"});
  return parse_simulate_body(j);
}

AblateConfig parse_ablate_config(const json& j) {
  allow_keys(j, "config",
             {"data", "stream", "harness", "memory", "itmo", "kernel", "snapshots", "methods", "seeds"});
  AblateConfig c;
  c.base = parse_simulate_body(j);
  if (!j.contains("methods") || !j.contains("seeds")) {
    throw std::invalid_argument("config: ablate needs 'methods' and 'seeds'");
  }
  for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
  read(j, "seeds", c.seeds, "config");
  if (c.methods.size() < 2) throw std::invalid_argument("config.methods: ablate needs at least 2 methods");
  if (c.seeds.size() < 2) throw std::invalid_argument("config.seeds: ablate needs at least 2 seeds");
  return c;
}

InspectConfig parse_inspect_config(const json& j) {
  allow_keys(j, "config", {"snapshot", "memory", "quota", "partition"});
  InspectConfig c;
  read(j, "snapshot", c.snapshot, "config");
  if (c.snapshot.empty()) throw std::invalid_argument("config.snapshot: required");
  if (!j.contains("memory")) throw std::invalid_argument("config.memory: required");
  c.memory = parse_memory(j.at("memory"));
  if (j.contains("quota")) c.quota = j.at("quota").get<std::size_t>();
  if (j.contains("partition")) {
    const auto p = j.at("partition").get<std::string>();
    if (p == "label") c.key = PartitionKey::label;
    else if (p == "task_and_label") c.key = PartitionKey::task_and_label;
    else throw std::invalid_argument("config.partition: unknown value '" + p + "' (label, task_and_label)");
  }
  return c;
}

json to_json(const ItmoConfig& c) {
  return {{"lambda_h2", c.lambda_h2},         {"lambda_cs", c.lambda_cs},
          {"lambda_ksp", c.lambda_ksp},       {"lambda_l1", c.lambda_l1},
          {"lambda_h", c.lambda_h},           {"sample_count", c.sample_count},
          {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"temperature", c.temperature},     {"weight_init", c.weight_init},
          {"seed", c.seed}};
}

json to_json(const HarnessConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"replay_batch_size", c.replay_batch_size},
          {"learning_rate", c.learning_rate},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"frac_slow", c.frac_slow},
          {"frac_fast", c.frac_fast},
          {"bss_enabled", c.bss_enabled},
          {"reset_fast", c.reset_fast},
          {"selection_pool_limit", c.selection_pool_limit},
          {"method", to_string(c.method)},
          {"seed", c.seed},
          {"hidden", c.hidden},
          {"memory",
           {{"fast_capacity", c.memory.fast_capacity},
            {"slow_capacity", c.memory.slow_capacity},
            {"max_capacity", c.memory.max_capacity}}},
          {"itmo", to_json(c.itmo)},
          {"kernel", {{"sigma", c.kernel.sigma}}}};
}

}  // namespace dualmem
