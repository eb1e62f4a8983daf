#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualmem/bss.hpp"
#include "dualmem/dataset.hpp"
#include "dualmem/harness.hpp"
#include "dualmem/itmo.hpp"
#include "dualmem/memory.hpp"

namespace dualmem {

struct MixtureComponent {
  std::vector<double> mean;
  double stddev = 0.05;  ///< isotropic; 0 places every point on the mean
  int label = 0;
  std::size_t count = 1;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rows are emitted component by component in spec order.
FeatureDataset generate_mixture(const MixtureSpec& spec);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled by 1/255 and flattened row-major. Throws
/// std::runtime_error naming the offending file.
FeatureDataset read_idx(const std::string& images_path, const std::string& labels_path);

enum class DomainTransform { none, permute, rotate };

struct StreamSpec {
  Scenario scenario = Scenario::class_il;
  std::size_t tasks = 5;
  std::size_t classes_per_task = 2;      ///< Class-IL / Task-IL only
  std::vector<std::size_t> train_counts; ///< per task; empty takes everything
  std::vector<std::size_t> test_counts;  ///< per task; empty takes everything
  bool normalize = true;                 ///< min-max fit on the training pool
  DomainTransform transform = DomainTransform::none;
  std::size_t image_side = 28;           ///< rotation needs square images
  std::uint64_t seed = 0;

  void validate() const;
};

/// {first, first / ratio, ...} for `tasks` entries.
std::vector<std::size_t> imbalanced_counts(std::size_t tasks, std::size_t first,
                                           std::size_t ratio = 10);

/// Per-dimension min and max of `fit`, applied to `data`; constant
/// dimensions map to 0.
struct MinMaxScaler {
  std::vector<float> lo;
  std::vector<float> hi;

  static MinMaxScaler fit(const FeatureDataset& fit);
  FeatureDataset apply(const FeatureDataset& data) const;
};

/// Class-IL / Task-IL: task t owns labels [t * cpt, (t + 1) * cpt), drawing
/// its training rows evenly over those labels. Domain-IL: every task uses the
/// whole label set on disjoint training rows, each task with its own seeded
/// pixel permutation or rotation. Throws std::invalid_argument when a count
/// cannot be met.
TaskStream build_stream(const FeatureDataset& train_pool, const FeatureDataset& test_pool,
                        const StreamSpec& spec);

/// Rotates a side x side image about its centre with bilinear resampling;
/// pixels falling outside are 0.
std::vector<float> rotate_image(std::span<const float> image, std::size_t side, double radians);

// Native dataset format: one JSON header line, float32 LE features, int32 LE
// labels.
std::string encode_dataset(const FeatureDataset& ds);
FeatureDataset decode_dataset(const std::string& bytes, const std::string& origin = "<memory>");
FeatureDataset load_dataset(const std::string& path);

/// Buffer snapshot: CSV sidecar (one row per record, logits ';'-joined) and
/// a float32 blob of the features in CSV row order. The first CSV line is a
/// '#'-prefixed key=value list with the reservoir counters.
struct SnapshotFiles {
  std::string csv;
  std::string blob;
};
SnapshotFiles encode_snapshot(const DualMemory& mem);
DualMemory decode_snapshot(const SnapshotFiles& files, const MemoryConfig& cfg);

std::string metrics_csv(const RunMetrics& m);
nlohmann::json metrics_summary(const RunMetrics& m, const nlohmann::json& config_echo,
                               std::uint64_t seed);
std::string trace_csv(const std::vector<TraceRecord>& trace);
std::string diversity_csv(const DiversityTable& table);
std::string indices_csv(std::span<const std::size_t> indices);
std::string weights_csv(std::span<const double> weights);

std::string read_file(const std::string& path);

/// Writes every (path, content) pair to a sibling temporary file, then
/// renames them all into place. If any temporary cannot be written nothing
/// is renamed and the temporaries are removed.
void write_files_atomically(const std::map<std::filesystem::path, std::string>& files);

}  // namespace dualmem
