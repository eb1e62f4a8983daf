#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualmem/bss.hpp"
#include "dualmem/data_io.hpp"
#include "dualmem/harness.hpp"
#include "dualmem/itmo.hpp"

namespace dualmem {

/// Where features come from. Mixture sources draw the test split from the
/// same components with seed + 1.
struct DataSpec {
  enum class Source { mixture, native, idx };
  Source source = Source::mixture;
  MixtureSpec mixture;
  std::size_t test_per_component = 0;  ///< 0 reuses each component's count
  std::string train_path, test_path;   ///< native
  std::string train_images, train_labels, test_images, test_labels;  ///< idx
};

struct LoadedData {
  FeatureDataset train;
  FeatureDataset test;
};

/// Relative paths resolve against `base_dir`.
LoadedData load_data(const DataSpec& spec, const std::string& base_dir);

struct SelectConfig {
  DataSpec data;
  bool normalize = true;
  ItmoConfig itmo;
  KernelConfig kernel;
  SelectionMode mode = SelectionMode::global;
  std::size_t random_baseline = 20;  ///< random subsets drawn for comparison
};

struct SimulateConfig {
  DataSpec data;
  StreamSpec stream;
  HarnessConfig harness;
  bool snapshots = false;
};

struct AblateConfig {
  SimulateConfig base;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
};

struct InspectConfig {
  std::string snapshot;  ///< path prefix of <prefix>.csv / <prefix>.bin
  MemoryConfig memory;
  std::optional<std::size_t> quota;  ///< default: slow capacity / class count
  PartitionKey key = PartitionKey::label;
};

// Parsers reject unknown keys and invalid values with std::invalid_argument
// naming the offending key.
SelectConfig parse_select_config(const nlohmann::json& j);
SimulateConfig parse_simulate_config(const nlohmann::json& j);
AblateConfig parse_ablate_config(const nlohmann::json& j);
InspectConfig parse_inspect_config(const nlohmann::json& j);

nlohmann::json to_json(const HarnessConfig& cfg);
nlohmann::json to_json(const ItmoConfig& cfg);

}  // namespace dualmem
