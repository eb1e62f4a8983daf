#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualmem/memory.hpp"

namespace dualmem {

/// Members of one class inside the slow buffer.
struct ClassPartition {
  int class_id = 0;
  std::vector<std::size_t> member_indices;  ///< ascending slot indices
};

struct DiversityRow {
  int class_id = 0;
  std::size_t index = 0;  ///< slot in the slow buffer before removal
  double diversity = 0.0;
  double removal_score = 0.0;
  bool retained = false;
};

using DiversityTable = std::vector<DiversityRow>;

/// How records are grouped into classes. task_and_label keeps the same label
/// from different domains apart (Domain-IL).
enum class PartitionKey { label, task_and_label };

/// 1 - cosine similarity. Throws std::invalid_argument on a zero vector or a
/// dimension mismatch.
double cosine_distance(std::span<const float> x, std::span<const float> y);

/// Partitions ordered by class id (or by (task, label) pair), each listing
/// its slots in ascending order. Partition class_id is the record label.
std::vector<ClassPartition> partition_by_class(const std::vector<MemoryRecord>& buffer,
                                               PartitionKey key = PartitionKey::label);

/// Member with the smallest mean distance to the others; lowest slot on ties.
std::size_t central_sample(const ClassPartition& part, const std::vector<MemoryRecord>& buffer);

/// Distance of each member to the central member, in member order.
std::vector<double> diversity_scores(const ClassPartition& part,
                                     const std::vector<MemoryRecord>& buffer);

/// removal_j = 1 - d_j / sum_{j' != j} d_j'. A zero denominator yields 1 when
/// d_j is 0 and 0 otherwise. Throws std::invalid_argument for fewer than two
/// members.
std::vector<double> removal_scores(std::span<const double> diversity);

/// Indices (positions within the partition) kept under `quota`: the centre
/// first, then ascending removal score, lower position on ties.
std::vector<std::size_t> retained_positions(std::size_t centre_position,
                                            std::span<const double> removal, std::size_t quota);

/// Prunes every class of the slow buffer to at most `quota` members and
/// returns the scoring table of the pass (one row per record before removal).
DiversityTable balanced_remove(DualMemory& mem, std::size_t quota,
                               PartitionKey key = PartitionKey::label);

/// Scores the slow buffer without modifying it; every row is marked retained
/// unless it would be pruned under `quota`.
DiversityTable score_slow_buffer(const DualMemory& mem, std::size_t quota,
                                 PartitionKey key = PartitionKey::label);

}  // namespace dualmem
