#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace dualmem {

/// One stored example: features, label, classifier logits captured when the
/// record entered memory, and the index of the task it came from.
struct MemoryRecord {
  std::vector<float> features;
  int label = 0;
  std::vector<double> logits;
  int task = 0;

  friend bool operator==(const MemoryRecord&, const MemoryRecord&) = default;
};

struct MemoryConfig {
  std::size_t fast_capacity = 0;
  std::size_t slow_capacity = 0;
  std::size_t max_capacity = 0;  ///< joint bound on |fast| + |slow|

  void validate() const;
};

enum class Provenance { fast, slow };

struct ReplayBatch {
  std::vector<MemoryRecord> records;
  std::vector<Provenance> provenance;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Fast reservoir buffer plus slow curated buffer. The slow side is only
/// written through insert_slow / retain_slow / slow_reservoir_update, never by
/// reservoir_update.
class DualMemory {
 public:
  explicit DualMemory(MemoryConfig cfg);

  const MemoryConfig& config() const { return cfg_; }
  const std::vector<MemoryRecord>& fast() const { return fast_; }
  const std::vector<MemoryRecord>& slow() const { return slow_; }
  std::size_t seen_count() const { return seen_; }
  std::size_t slow_seen_count() const { return slow_seen_; }
  std::size_t total_size() const { return fast_.size() + slow_.size(); }

  /// Room the slow buffer may use: its own cap, less whatever the fast
  /// buffer is entitled to under the joint bound.
  std::size_t slow_budget() const;

  /// Streaming reservoir step on the fast buffer. No-op when the fast
  /// capacity is 0.
  void reservoir_update(MemoryRecord rec, std::mt19937_64& rng);

  /// Same reservoir rule applied to the slow buffer with its own counter.
  /// Used only by the reservoir ablation.
  void slow_reservoir_update(MemoryRecord rec, std::mt19937_64& rng);

  /// Draws with replacement; slow records first, then fast. Throws when both
  /// buffers are empty.
  ReplayBatch sample_replay(std::size_t batch_size, double frac_slow, double frac_fast,
                            std::mt19937_64& rng) const;

  void reset_fast();

  /// Appends to the slow buffer; throws std::length_error if a capacity
  /// bound would be exceeded.
  void insert_slow(std::vector<MemoryRecord> records);

  /// Keeps exactly the listed slow slots (any order, no duplicates), in
  /// ascending slot order.
  void retain_slow(std::span<const std::size_t> keep);

  /// Replaces both buffers wholesale (snapshot import). Capacities are
  /// checked.
  void restore(std::vector<MemoryRecord> fast, std::vector<MemoryRecord> slow,
               std::size_t seen, std::size_t slow_seen);

 private:
  std::size_t fast_room() const;

  MemoryConfig cfg_;
  std::vector<MemoryRecord> fast_;
  std::vector<MemoryRecord> slow_;
  std::size_t seen_ = 0;
  std::size_t slow_seen_ = 0;
};

struct SlowAllocation {
  std::size_t quota = 0;       ///< per-class target after pruning
  std::size_t free_slots = 0;  ///< room left for the next task's classes
  bool floored = false;        ///< raw quota was 0 and was raised to 1
};

/// quota = floor((M_max / 2) / K_next), raised to 1 when it would be 0;
/// free = M_max / 2 - quota * K_prev, never negative.
SlowAllocation slow_capacity_for_task(std::size_t max_capacity, std::size_t classes_prev,
                                      std::size_t classes_next);

}  // namespace dualmem
