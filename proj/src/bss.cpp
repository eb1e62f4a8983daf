#include "dualmem/bss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace dualmem {

double cosine_distance(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i];
    const double b = y[i];
    dot += a * b;
    nx += a * a;
    ny += b * b;
  }
  if (nx == 0.0 || ny == 0.0) throw std::invalid_argument("cosine_distance: zero vector");
  const double sim = dot / (std::sqrt(nx) * std::sqrt(ny));
  return 1.0 - std::clamp(sim, -1.0, 1.0);
}

std::vector<ClassPartition> partition_by_class(const std::vector<MemoryRecord>& buffer,
                                               PartitionKey key) {
  std::map<std::pair<int, int>, ClassPartition> groups;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& r = buffer[i];
    const int task = key == PartitionKey::task_and_label ? r.task : 0;
    auto& g = groups[{task, r.label}];
    g.class_id = r.label;
    g.member_indices.push_back(i);
  }
  std::vector<ClassPartition> out;
  out.reserve(groups.size());
  for (auto& [k, g] : groups) out.push_back(std::move(g));
  return out;
}

namespace {

std::vector<double> pairwise(const ClassPartition& part, const std::vector<MemoryRecord>& buffer) {
  const std::size_t m = part.member_indices.size();
  std::vector<double> d(m * m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double v = cosine_distance(buffer[part.member_indices[a]].features,
                                       buffer[part.member_indices[b]].features);
      d[a * m + b] = v;
      d[b * m + a] = v;
    }
  }
  return d;
}

std::size_t centre_position(const ClassPartition& part, const std::vector<double>& d) {
  const std::size_t m = part.member_indices.size();
  if (m == 0) throw std::invalid_argument("central_sample: empty partition");
  std::size_t best = 0;
  double best_sum = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < m; ++b) s += d[a * m + b];
    // mean over the same m-1 partners for every candidate: compare sums
    if (a == 0 || s < best_sum) {
      best = a;
      best_sum = s;
    }
  }
  return best;
}

struct Scored {
  std::size_t centre = 0;
  std::vector<double> diversity;
  std::vector<double> removal;
  std::vector<std::size_t> keep;  ///< positions within the partition
};

Scored score_partition(const ClassPartition& part, const std::vector<MemoryRecord>& buffer,
                       std::size_t quota) {
  const std::size_t m = part.member_indices.size();
  const auto d = pairwise(part, buffer);
  Scored s;
  s.centre = centre_position(part, d);
  s.diversity.resize(m);
  for (std::size_t a = 0; a < m; ++a) s.diversity[a] = d[a * m + s.centre];
  if (m >= 2) {
    s.removal = removal_scores(s.diversity);
  } else {
    s.removal.assign(m, 0.0);
  }
  s.keep = retained_positions(s.centre, s.removal, quota);
  return s;
}

DiversityTable score_all(const std::vector<MemoryRecord>& buffer, std::size_t quota,
                         PartitionKey key, std::vector<std::size_t>* keep_slots) {
  DiversityTable table;
  table.reserve(buffer.size());
  for (const auto& part : partition_by_class(buffer, key)) {
    const Scored s = score_partition(part, buffer, quota);
    std::vector<bool> kept(part.member_indices.size(), false);
    for (std::size_t p : s.keep) {
      kept[p] = true;
      if (keep_slots) keep_slots->push_back(part.member_indices[p]);
    }
    for (std::size_t a = 0; a < part.member_indices.size(); ++a) {
      table.push_back({part.class_id, part.member_indices[a], s.diversity[a], s.removal[a],
                       static_cast<bool>(kept[a])});
    }
  }
  return table;
}

}  // namespace

std::size_t central_sample(const ClassPartition& part, const std::vector<MemoryRecord>& buffer) {
  return part.member_indices.at(centre_position(part, pairwise(part, buffer)));
}

std::vector<double> diversity_scores(const ClassPartition& part,
                                     const std::vector<MemoryRecord>& buffer) {
  const std::size_t m = part.member_indices.size();
  const auto d = pairwise(part, buffer);
  const std::size_t c = centre_position(part, d);
  std::vector<double> out(m);
  for (std::size_t a = 0; a < m; ++a) out[a] = d[a * m + c];
  return out;
}

std::vector<double> removal_scores(std::span<const double> diversity) {
  const std::size_t m = diversity.size();
  if (m < 2) throw std::invalid_argument("removal_scores: need at least two members");
  const double total = std::accumulate(diversity.begin(), diversity.end(), 0.0);
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double rest = total - diversity[j];
    if (rest > 0.0) {
      out[j] = 1.0 - diversity[j] / rest;
    } else {
      out[j] = diversity[j] == 0.0 ? 1.0 : 0.0;
    }
  }
  return out;
}

std::vector<std::size_t> retained_positions(std::size_t centre_position,
                                            std::span<const double> removal, std::size_t quota) {
  const std::size_t m = removal.size();
  if (quota == 0 || m == 0) return {};
  if (centre_position >= m) throw std::out_of_range("retained_positions: centre out of range");
  std::vector<std::size_t> rest;
  rest.reserve(m - 1);
  for (std::size_t j = 0; j < m; ++j) {
    if (j != centre_position) rest.push_back(j);
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [&](std::size_t a, std::size_t b) { return removal[a] < removal[b]; });
  std::vector<std::size_t> keep{centre_position};
  for (std::size_t j : rest) {
    if (keep.size() >= quota) break;
    keep.push_back(j);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

DiversityTable balanced_remove(DualMemory& mem, std::size_t quota, PartitionKey key) {
  std::vector<std::size_t> keep;
  DiversityTable table = score_all(mem.slow(), quota, key, &keep);
  mem.retain_slow(keep);
  return table;
}

DiversityTable score_slow_buffer(const DualMemory& mem, std::size_t quota, PartitionKey key) {
  return score_all(mem.slow(), quota, key, nullptr);
}

}  // namespace dualmem
