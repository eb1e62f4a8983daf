#include "dualmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dualmem {

void MemoryConfig::validate() const {
  if (fast_capacity + slow_capacity > max_capacity) {
    throw std::invalid_argument("MemoryConfig: fast_capacity + slow_capacity (" +
                                std::to_string(fast_capacity + slow_capacity) +
                                ") exceeds max_capacity (" + std::to_string(max_capacity) + ")");
  }
}

DualMemory::DualMemory(MemoryConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  fast_.reserve(cfg_.fast_capacity);
  slow_.reserve(cfg_.slow_capacity);
}

std::size_t DualMemory::slow_budget() const { return cfg_.slow_capacity; }

std::size_t DualMemory::fast_room() const {
  const std::size_t joint = cfg_.max_capacity - std::min(cfg_.max_capacity, slow_.size());
  return std::min(cfg_.fast_capacity, joint);
}

namespace {

void reservoir_step(std::vector<MemoryRecord>& buffer, std::size_t capacity, std::size_t& seen,
                    MemoryRecord rec, std::mt19937_64& rng) {
  ++seen;
  if (buffer.size() < capacity) {
    buffer.push_back(std::move(rec));
    return;
  }
  // keep with probability capacity / seen, into a uniform slot
  std::uniform_int_distribution<std::size_t> pick(0, seen - 1);
  const std::size_t j = pick(rng);
  if (j < buffer.size()) buffer[j] = std::move(rec);
}

}  // namespace

void DualMemory::reservoir_update(MemoryRecord rec, std::mt19937_64& rng) {
  if (cfg_.fast_capacity == 0) return;
  reservoir_step(fast_, fast_room(), seen_, std::move(rec), rng);
}

void DualMemory::slow_reservoir_update(MemoryRecord rec, std::mt19937_64& rng) {
  if (cfg_.slow_capacity == 0) return;
  reservoir_step(slow_, slow_budget(), slow_seen_, std::move(rec), rng);
}

ReplayBatch DualMemory::sample_replay(std::size_t batch_size, double frac_slow, double frac_fast,
                                      std::mt19937_64& rng) const {
  if (fast_.empty() && slow_.empty()) {
    throw std::logic_error("sample_replay: both buffers are empty");
  }
  if (!(frac_slow >= 0.0 && frac_slow <= 1.0) || !(frac_fast >= 0.0 && frac_fast <= 1.0)) {
    throw std::invalid_argument("sample_replay: fractions must lie in [0,1]");
  }
  const double b = static_cast<double>(batch_size);
  auto n_slow = static_cast<std::size_t>(std::floor(frac_slow * b + 0.5));
  auto n_fast = static_cast<std::size_t>(std::floor(frac_fast * b + 0.5));
  // fractions meant to split one batch: absorb rounding on the slow side
  if (std::abs(frac_slow + frac_fast - 1.0) < 1e-9) {
    n_fast = std::min(n_fast, batch_size);
    n_slow = batch_size - n_fast;
  }
  if (slow_.empty()) {
    n_fast += n_slow;
    n_slow = 0;
  } else if (fast_.empty()) {
    n_slow += n_fast;
    n_fast = 0;
  }

  ReplayBatch batch;
  batch.records.reserve(n_slow + n_fast);
  batch.provenance.reserve(n_slow + n_fast);
  auto draw = [&](const std::vector<MemoryRecord>& src, std::size_t count, Provenance tag) {
    if (count == 0) return;
    std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
    for (std::size_t i = 0; i < count; ++i) {
      batch.records.push_back(src[pick(rng)]);
      batch.provenance.push_back(tag);
    }
  };
  draw(slow_, n_slow, Provenance::slow);
  draw(fast_, n_fast, Provenance::fast);
  return batch;
}

void DualMemory::reset_fast() {
  fast_.clear();
  seen_ = 0;
}

void DualMemory::insert_slow(std::vector<MemoryRecord> records) {
  if (slow_.size() + records.size() > slow_budget() ||
      total_size() + records.size() > cfg_.max_capacity) {
    throw std::length_error("insert_slow: " + std::to_string(records.size()) +
                            " records do not fit (slow " + std::to_string(slow_.size()) + "/" +
                            std::to_string(slow_budget()) + ")");
  }
  for (auto& r : records) slow_.push_back(std::move(r));
}

void DualMemory::retain_slow(std::span<const std::size_t> keep) {
  std::vector<std::size_t> order(keep.begin(), keep.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw std::invalid_argument("retain_slow: duplicate slot");
  }
  std::vector<MemoryRecord> kept;
  kept.reserve(order.size());
  for (std::size_t i : order) {
    if (i >= slow_.size()) throw std::out_of_range("retain_slow: slot out of range");
    kept.push_back(std::move(slow_[i]));
  }
  slow_ = std::move(kept);
}

void DualMemory::restore(std::vector<MemoryRecord> fast, std::vector<MemoryRecord> slow,
                         std::size_t seen, std::size_t slow_seen) {
  if (fast.size() > cfg_.fast_capacity || slow.size() > cfg_.slow_capacity ||
      fast.size() + slow.size() > cfg_.max_capacity) {
    throw std::length_error("DualMemory::restore: contents exceed capacity");
  }
  fast_ = std::move(fast);
  slow_ = std::move(slow);
  seen_ = seen;
  slow_seen_ = slow_seen;
}

SlowAllocation slow_capacity_for_task(std::size_t max_capacity, std::size_t classes_prev,
                                      std::size_t classes_next) {
  if (classes_next == 0) throw std::invalid_argument("slow_capacity_for_task: K_next must be >= 1");
  const std::size_t half = max_capacity / 2;
  SlowAllocation out;
  out.quota = half / classes_next;
  if (out.quota == 0) {
    out.quota = 1;
    out.floored = true;
  }
  const std::size_t used = out.quota * classes_prev;
  out.free_slots = used < half ? half - used : 0;
  return out;
}

}  // namespace dualmem
