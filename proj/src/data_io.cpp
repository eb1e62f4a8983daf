#include "dualmem/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dualmem {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

void MixtureSpec::validate() const {
  if (components.empty()) throw std::invalid_argument("MixtureSpec: no components");
  const std::size_t d = components.front().mean.size();
  if (d == 0) throw std::invalid_argument("MixtureSpec: empty mean vector");
  for (const auto& c : components) {
    if (c.mean.size() != d) throw std::invalid_argument("MixtureSpec: mean dimensions differ");
    if (c.count == 0) throw std::invalid_argument("MixtureSpec: component count must be >= 1");
    if (!(c.stddev >= 0.0)) throw std::invalid_argument("MixtureSpec: stddev must be >= 0");
    if (c.label < 0) throw std::invalid_argument("MixtureSpec: negative label");
  }
}

FeatureDataset generate_mixture(const MixtureSpec& spec) {
  spec.validate();
  const std::size_t d = spec.components.front().mean.size();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> values;
  std::vector<int> labels;
  for (const auto& c : spec.components) {
    for (std::size_t i = 0; i < c.count; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        values.push_back(static_cast<float>(c.mean[j] + c.stddev * normal(rng)));
      }
      labels.push_back(c.label);
    }
  }
  const std::size_t n = labels.size();
  return FeatureDataset(n, d, std::move(values), std::move(labels));
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error("read_idx: truncated header in " + path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t bytes, const std::string& path) {
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw std::runtime_error("read_idx: truncated payload in " + path + " (expected " +
                             std::to_string(bytes) + " bytes, got " + std::to_string(in.gcount()) + ")");
  }
  return buf;
}

}  // namespace

FeatureDataset read_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("read_idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("read_idx: cannot open " + labels_path);

  if (read_be32(img, images_path) != 0x00000803u) {
    throw std::runtime_error("read_idx: bad magic in " + images_path + " (expected 0x00000803)");
  }
  const std::size_t n = read_be32(img, images_path);
  const std::size_t rows = read_be32(img, images_path);
  const std::size_t cols = read_be32(img, images_path);
  if (read_be32(lab, labels_path) != 0x00000801u) {
    throw std::runtime_error("read_idx: bad magic in " + labels_path + " (expected 0x00000801)");
  }
  const std::size_t n_labels = read_be32(lab, labels_path);
  if (n_labels != n) {
    throw std::runtime_error("read_idx: " + labels_path + " holds " + std::to_string(n_labels) +
                             " labels but " + images_path + " holds " + std::to_string(n) + " images");
  }
  const std::size_t d = rows * cols;
  if (d == 0) throw std::runtime_error("read_idx: zero-sized images in " + images_path);
  const auto pixels = read_payload(img, n * d, images_path);
  const auto raw_labels = read_payload(lab, n, labels_path);

  std::vector<float> values(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) values[i] = static_cast<float>(pixels[i]) / 255.0f;
  std::vector<int> labels(raw_labels.begin(), raw_labels.end());
  return FeatureDataset(n, d, std::move(values), std::move(labels));
}

void StreamSpec::validate() const {
  if (tasks == 0) throw std::invalid_argument("StreamSpec: tasks must be >= 1");
  if (scenario != Scenario::domain_il && classes_per_task == 0) {
    throw std::invalid_argument("StreamSpec: classes_per_task must be >= 1");
  }
  for (const auto* counts : {&train_counts, &test_counts}) {
    if (!counts->empty() && counts->size() != tasks) {
      throw std::invalid_argument("StreamSpec: per-task counts need one entry per task");
    }
    for (std::size_t c : *counts) {
      if (c == 0) throw std::invalid_argument("StreamSpec: per-task counts must be positive");
    }
  }
  if (transform != DomainTransform::none && scenario != Scenario::domain_il) {
    throw std::invalid_argument("StreamSpec: input transforms apply to Domain-IL streams only");
  }
}

std::vector<std::size_t> imbalanced_counts(std::size_t tasks, std::size_t first, std::size_t ratio) {
  if (tasks == 0 || ratio == 0 || first < ratio) {
    throw std::invalid_argument("imbalanced_counts: need tasks >= 1 and first >= ratio >= 1");
  }
  std::vector<std::size_t> out(tasks, first / ratio);
  out[0] = first;
  return out;
}

MinMaxScaler MinMaxScaler::fit(const FeatureDataset& data) {
  if (data.empty()) throw std::invalid_argument("MinMaxScaler::fit: empty dataset");
  MinMaxScaler s;
  const auto first = data.row(0);
  s.lo.assign(first.begin(), first.end());
  s.hi = s.lo;
  for (std::size_t i = 1; i < data.size(); ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      s.lo[j] = std::min(s.lo[j], r[j]);
      s.hi[j] = std::max(s.hi[j], r[j]);
    }
  }
  return s;
}

FeatureDataset MinMaxScaler::apply(const FeatureDataset& data) const {
  if (data.dim() != lo.size()) throw std::invalid_argument("MinMaxScaler::apply: dimension mismatch");
  FeatureDataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = out.mutable_row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double span = static_cast<double>(hi[j]) - static_cast<double>(lo[j]);
      r[j] = span > 0.0 ? static_cast<float>((static_cast<double>(r[j]) - lo[j]) / span) : 0.0f;
    }
  }
  return out;
}

std::vector<float> rotate_image(std::span<const float> image, std::size_t side, double radians) {
  if (image.size() != side * side) throw std::invalid_argument("rotate_image: image is not side x side");
  std::vector<float> out(image.size(), 0.0f);
  const double c = (static_cast<double>(side) - 1.0) / 2.0;
  const double cs = std::cos(radians);
  const double sn = std::sin(radians);
  const auto at = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(side) || x >= static_cast<long>(side)) return 0.0;
    return image[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      // inverse map output pixel to its source position
      const double dx = static_cast<double>(x) - c;
      const double dy = static_cast<double>(y) - c;
      const double sx = cs * dx + sn * dy + c;
      const double sy = -sn * dx + cs * dy + c;
      const long x0 = static_cast<long>(std::floor(sx));
      const long y0 = static_cast<long>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      out[y * side + x] = static_cast<float>(v);
    }
  }
  return out;
}

namespace {

std::map<int, std::vector<std::size_t>> rows_by_label(const FeatureDataset& ds) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out[ds.label(i)].push_back(i);
  return out;
}

/// `count` rows spread evenly over `labels` (remainder to the lowest labels),
/// drawn without replacement from the unused rows of each label.
std::vector<std::size_t> draw_balanced(std::map<int, std::vector<std::size_t>>& available,
                                       const std::vector<int>& labels, std::size_t count,
                                       const char* split) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const std::size_t want = count / labels.size() + (k < count % labels.size() ? 1 : 0);
    auto& pool = available[labels[k]];
    if (pool.size() < want) {
      throw std::invalid_argument(std::string("build_stream: label ") + std::to_string(labels[k]) +
                                  " has " + std::to_string(pool.size()) + " " + split +
                                  " samples, " + std::to_string(want) + " requested");
    }
    out.insert(out.end(), pool.end() - static_cast<std::ptrdiff_t>(want), pool.end());
    pool.resize(pool.size() - want);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> take_all(std::map<int, std::vector<std::size_t>>& available,
                                  const std::vector<int>& labels) {
  std::vector<std::size_t> out;
  for (int y : labels) {
    auto& pool = available[y];
    out.insert(out.end(), pool.begin(), pool.end());
    pool.clear();
  }
  std::sort(out.begin(), out.end());
  return out;
}

void shuffle_pools(std::map<int, std::vector<std::size_t>>& pools, std::mt19937_64& rng) {
  for (auto& [label, rows] : pools) std::shuffle(rows.begin(), rows.end(), rng);
}

FeatureDataset transform_rows(const FeatureDataset& ds, DomainTransform kind,
                              const std::vector<std::size_t>& permutation, double angle,
                              std::size_t side) {
  if (kind == DomainTransform::none) return ds;
  FeatureDataset out = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto src = ds.row(i);
    auto dst = out.mutable_row(i);
    if (kind == DomainTransform::permute) {
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[permutation[j]];
    } else {
      const auto rot = rotate_image(src, side, angle);
      std::copy(rot.begin(), rot.end(), dst.begin());
    }
  }
  return out;
}

}  // namespace

TaskStream build_stream(const FeatureDataset& train_pool, const FeatureDataset& test_pool,
                        const StreamSpec& spec) {
  spec.validate();
  if (train_pool.empty() || test_pool.empty()) throw std::invalid_argument("build_stream: empty pool");
  if (train_pool.dim() != test_pool.dim()) throw std::invalid_argument("build_stream: pool dimensions differ");
  if (spec.transform == DomainTransform::rotate && spec.image_side * spec.image_side != train_pool.dim()) {
    throw std::invalid_argument("build_stream: rotation needs image_side^2 == feature dimension");
  }

  FeatureDataset train = train_pool;
  FeatureDataset test = test_pool;
  if (spec.normalize) {
    const MinMaxScaler scaler = MinMaxScaler::fit(train_pool);
    train = scaler.apply(train_pool);
    test = scaler.apply(test_pool);
  }

  std::mt19937_64 rng(spec.seed);
  auto train_avail = rows_by_label(train);
  auto test_avail = rows_by_label(test);
  shuffle_pools(train_avail, rng);
  shuffle_pools(test_avail, rng);

  TaskStream stream;
  stream.scenario = spec.scenario;
  const auto all_labels = train.distinct_labels();

  if (spec.scenario == Scenario::domain_il) {
    stream.output_dim = static_cast<std::size_t>(train.label_bound());
    for (std::size_t t = 0; t < spec.tasks; ++t) {
      std::vector<std::size_t> perm(train.dim());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const double angle = std::uniform_real_distribution<double>(0.0, std::acos(-1.0))(rng);

      std::size_t n_train = 0;
      if (spec.train_counts.empty()) {
        // even split that every class can sustain for all tasks
        std::size_t smallest = train.size();
        for (const auto& [y, rows] : rows_by_label(train)) smallest = std::min(smallest, rows.size());
        n_train = smallest / spec.tasks * all_labels.size();
      } else {
        n_train = spec.train_counts[t];
      }
      const auto train_rows = draw_balanced(train_avail, all_labels, n_train, "training");
      // test rows are shared across domains; each domain sees its own transform
      std::vector<std::size_t> test_rows;
      if (spec.test_counts.empty()) {
        test_rows.resize(test.size());
        std::iota(test_rows.begin(), test_rows.end(), 0);
      } else {
        auto fresh = rows_by_label(test);
        std::mt19937_64 trng(spec.seed + 1);
        shuffle_pools(fresh, trng);
        test_rows = draw_balanced(fresh, all_labels, spec.test_counts[t], "test");
      }
      Task task;
      task.train = transform_rows(train.subset(train_rows), spec.transform, perm, angle, spec.image_side);
      task.test = transform_rows(test.subset(test_rows), spec.transform, perm, angle, spec.image_side);
      task.label_space = all_labels;
      stream.tasks.push_back(std::move(task));
    }
  } else {
    const std::size_t cpt = spec.classes_per_task;
    for (std::size_t t = 0; t < spec.tasks; ++t) {
      std::vector<int> labels;
      for (std::size_t k = 0; k < cpt; ++k) labels.push_back(static_cast<int>(t * cpt + k));
      for (int y : labels) {
        if (!train_avail.count(y) || !test_avail.count(y)) {
          throw std::invalid_argument("build_stream: label " + std::to_string(y) +
                                      " missing from the pool");
        }
      }
      const auto train_rows = spec.train_counts.empty()
                                  ? take_all(train_avail, labels)
                                  : draw_balanced(train_avail, labels, spec.train_counts[t], "training");
      const auto test_rows = spec.test_counts.empty()
                                 ? take_all(test_avail, labels)
                                 : draw_balanced(test_avail, labels, spec.test_counts[t], "test");
      Task task;
      task.train = train.subset(train_rows);
      task.test = test.subset(test_rows);
      task.label_space = labels;
      stream.tasks.push_back(std::move(task));
    }
    stream.output_dim = spec.tasks * cpt;
  }
  stream.validate();
  return stream;
}

namespace {

template <class T>
void append_blob(std::string& out, const T* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n * sizeof(T));
}

}  // namespace

std::string encode_dataset(const FeatureDataset& ds) {
  nlohmann::json header = {{"format", "dualmem-dataset"}, {"version", 1},
                           {"n", ds.size()},              {"d", ds.dim()},
                           {"K", ds.label_bound()},       {"dtype", "float32"},
                           {"label_dtype", "int32"}};
  std::string out = header.dump() + "\n";
  append_blob(out, ds.values().data(), ds.values().size());
  std::vector<std::int32_t> labels(ds.labels().begin(), ds.labels().end());
  append_blob(out, labels.data(), labels.size());
  return out;
}

FeatureDataset decode_dataset(const std::string& bytes, const std::string& origin) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("decode_dataset: no header line in " + origin);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("decode_dataset: bad header in " + origin + ": " + e.what());
  }
  if (header.value("format", "") != "dualmem-dataset" || header.value("dtype", "") != "float32" ||
      header.value("label_dtype", "") != "int32") {
    throw std::runtime_error("decode_dataset: " + origin + " is not a float32/int32 dataset file");
  }
  const auto n = header.at("n").get<std::size_t>();
  const auto d = header.at("d").get<std::size_t>();
  const std::size_t expected = nl + 1 + n * d * sizeof(float) + n * sizeof(std::int32_t);
  if (bytes.size() != expected) {
    throw std::runtime_error("decode_dataset: " + origin + " has " + std::to_string(bytes.size()) +
                             " bytes, header implies " + std::to_string(expected));
  }
  std::vector<float> values(n * d);
  std::memcpy(values.data(), bytes.data() + nl + 1, values.size() * sizeof(float));
  std::vector<std::int32_t> raw(n);
  std::memcpy(raw.data(), bytes.data() + nl + 1 + values.size() * sizeof(float), n * sizeof(std::int32_t));
  return FeatureDataset(n, d, std::move(values), std::vector<int>(raw.begin(), raw.end()));
}

FeatureDataset load_dataset(const std::string& path) { return decode_dataset(read_file(path), path); }

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

SnapshotFiles encode_snapshot(const DualMemory& mem) {
  SnapshotFiles f;
  std::ostringstream csv;
  csv << "# seen=" << mem.seen_count() << " slow_seen=" << mem.slow_seen_count() << "\n";
  csv << "buffer,slot,label,task,dim,logits\n";
  auto emit = [&](const std::vector<MemoryRecord>& buf, const char* name) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const auto& r = buf[i];
      csv << name << ',' << i << ',' << r.label << ',' << r.task << ',' << r.features.size() << ',';
      for (std::size_t k = 0; k < r.logits.size(); ++k) {
        if (k) csv << ';';
        csv << format_double(r.logits[k]);
      }
      csv << '\n';
      append_blob(f.blob, r.features.data(), r.features.size());
    }
  };
  emit(mem.slow(), "slow");
  emit(mem.fast(), "fast");
  f.csv = csv.str();
  return f;
}

DualMemory decode_snapshot(const SnapshotFiles& files, const MemoryConfig& cfg) {
  std::istringstream in(files.csv);
  std::string line;
  std::size_t seen = 0, slow_seen = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# seen=%zu slow_seen=%zu", &seen, &slow_seen) != 2) {
    throw std::runtime_error("decode_snapshot: missing counter line");
  }
  if (!std::getline(in, line) || line != "buffer,slot,label,task,dim,logits") {
    throw std::runtime_error("decode_snapshot: unexpected CSV header");
  }
  std::vector<MemoryRecord> fast, slow;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 6) throw std::runtime_error("decode_snapshot: malformed row '" + line + "'");
    MemoryRecord r;
    r.label = std::stoi(cols[2]);
    r.task = std::stoi(cols[3]);
    const std::size_t dim = std::stoul(cols[4]);
    if (!cols[5].empty()) {
      for (const auto& z : split(cols[5], ';')) r.logits.push_back(std::stod(z));
    }
    if ((offset + dim) * sizeof(float) > files.blob.size()) {
      throw std::runtime_error("decode_snapshot: feature blob too short");
    }
    r.features.resize(dim);
    std::memcpy(r.features.data(), files.blob.data() + offset * sizeof(float), dim * sizeof(float));
    offset += dim;
    if (cols[0] == "slow") {
      slow.push_back(std::move(r));
    } else if (cols[0] == "fast") {
      fast.push_back(std::move(r));
    } else {
      throw std::runtime_error("decode_snapshot: unknown buffer '" + cols[0] + "'");
    }
  }
  if (offset * sizeof(float) != files.blob.size()) {
    throw std::runtime_error("decode_snapshot: feature blob has trailing bytes");
  }
  DualMemory mem(cfg);
  mem.restore(std::move(fast), std::move(slow), seen, slow_seen);
  return mem;
}

std::string metrics_csv(const RunMetrics& m) {
  std::ostringstream os;
  os << "train_task,eval_task,accuracy\n";
  for (std::size_t i = 0; i < m.accuracy.size(); ++i) {
    for (std::size_t j = 0; j < m.accuracy[i].size(); ++j) {
      os << i << ',' << j << ',' << format_double(m.accuracy[i][j]) << '\n';
    }
  }
  return os.str();
}

nlohmann::json metrics_summary(const RunMetrics& m, const nlohmann::json& config_echo,
                               std::uint64_t seed) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, a] : m.final_class_accuracy) per_class[std::to_string(c)] = a;
  return {{"average_accuracy", m.average_accuracy},
          {"forgetting", m.forgetting},
          {"final_class_accuracy", per_class},
          {"min_class_accuracy", m.min_class_accuracy()},
          {"seed", seed},
          {"config", config_echo}};
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream os;
  os << "step,sum_w,h2_term,cs_term,reg_term\n";
  for (const auto& t : trace) {
    os << t.step << ',' << format_double(t.sum_w) << ',' << format_double(t.h2_term) << ','
       << format_double(t.cs_term) << ',' << format_double(t.reg_term) << '\n';
  }
  return os.str();
}

std::string diversity_csv(const DiversityTable& table) {
  std::ostringstream os;
  os << "class_id,index,diversity,removal_score,retained\n";
  for (const auto& r : table) {
    os << r.class_id << ',' << r.index << ',' << format_double(r.diversity) << ','
       << format_double(r.removal_score) << ',' << (r.retained ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string indices_csv(std::span<const std::size_t> indices) {
  std::ostringstream os;
  os << "index\n";
  for (std::size_t i : indices) os << i << '\n';
  return os.str();
}

std::string weights_csv(std::span<const double> weights) {
  std::ostringstream os;
  os << "index,weight\n";
  for (std::size_t i = 0; i < weights.size(); ++i) os << i << ',' << format_double(weights[i]) << '\n';
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_files_atomically(const std::map<std::filesystem::path, std::string>& files) {
  namespace fs = std::filesystem;
  std::vector<std::pair<fs::path, fs::path>> staged;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& [tmp, dst] : staged) fs::remove(tmp, ec);
  };
  try {
    for (const auto& [dst, content] : files) {
      if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
      fs::path tmp = dst;
      tmp += ".tmp";
      staged.emplace_back(tmp, dst);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      out.close();
      if (!out) throw std::runtime_error("failed to write " + tmp.string());
    }
  } catch (...) {
    cleanup();
    throw;
  }
  for (const auto& [tmp, dst] : staged) fs::rename(tmp, dst);
}

}  // namespace dualmem
