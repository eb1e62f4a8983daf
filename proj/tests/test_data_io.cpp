#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "dualmem/data_io.hpp"

using namespace dualmem;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualmem_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

// n images of side x side with pixel value (i + r + c) % 256, label i % 10
void write_idx(const fs::path& images, const fs::path& labels, std::uint32_t n, std::uint32_t side,
               std::uint32_t image_magic = 0x803) {
  std::ofstream fi(images, std::ios::binary), fl(labels, std::ios::binary);
  put_be32(fi, image_magic);
  put_be32(fi, n);
  put_be32(fi, side);
  put_be32(fi, side);
  put_be32(fl, 0x801);
  put_be32(fl, n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t r = 0; r < side; ++r)
      for (std::uint32_t c = 0; c < side; ++c) fi.put(static_cast<char>((i + r + c) % 256));
    fl.put(static_cast<char>(i % 10));
  }
}

FeatureDataset labelled_pool(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  MixtureSpec spec;
  spec.seed = seed;
  for (std::size_t c = 0; c < classes; ++c) {
    spec.components.push_back({{double(c), double(c) * 0.5, 1.0}, 0.1, int(c), per_class});
  }
  return generate_mixture(spec);
}

}  // namespace

TEST_CASE("mixture generation") {
  MixtureSpec spec;
  spec.seed = 3;
  spec.components = {{{1.0, -2.0}, 0.5, 4, 4000}, {{0.0, 0.0}, 0.0, 1, 3}};
  const auto ds = generate_mixture(spec);
  REQUIRE(ds.size() == 4003);
  double m0 = 0, m1 = 0, v0 = 0;
  for (std::size_t i = 0; i < 4000; ++i) {
    CHECK(ds.label(i) == 4);
    m0 += ds.row(i)[0];
    m1 += ds.row(i)[1];
  }
  m0 /= 4000;
  m1 /= 4000;
  for (std::size_t i = 0; i < 4000; ++i) v0 += (ds.row(i)[0] - m0) * (ds.row(i)[0] - m0);
  CHECK(std::abs(m0 - 1.0) < 4 * 0.5 / std::sqrt(4000.0));
  CHECK(std::abs(m1 + 2.0) < 4 * 0.5 / std::sqrt(4000.0));
  CHECK(std::sqrt(v0 / 3999) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(ds.row(4001)[0] == 0.0f);
  CHECK(ds.label(4002) == 1);
  CHECK(generate_mixture(spec) == ds);

  spec.components.push_back({{1.0}, 0.1, 0, 5});
  CHECK_THROWS_AS(generate_mixture(spec), std::invalid_argument);
}

TEST_CASE("IDX reader") {
  const auto dir = scratch("idx");
  write_idx(dir / "img", dir / "lab", 12, 3);
  const auto ds = read_idx((dir / "img").string(), (dir / "lab").string());
  REQUIRE(ds.size() == 12);
  CHECK(ds.dim() == 9);
  CHECK(ds.label(11) == 1);
  CHECK(ds.row(5)[4] == doctest::Approx((5 + 1 + 1) / 255.0));

  write_idx(dir / "bad", dir / "lab2", 4, 2, 0x802);
  CHECK_THROWS_AS(read_idx((dir / "bad").string(), (dir / "lab2").string()), std::runtime_error);

  write_idx(dir / "short", dir / "lab3", 5, 4);
  fs::resize_file(dir / "short", fs::file_size(dir / "short") - 3);
  try {
    read_idx((dir / "short").string(), (dir / "lab3").string());
    FAIL("truncated file accepted");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("short") != std::string::npos);
  }

  write_idx(dir / "img4", dir / "lab4", 6, 2);
  write_idx(dir / "img5", dir / "lab5", 5, 2);
  CHECK_THROWS_AS(read_idx((dir / "img4").string(), (dir / "lab5").string()), std::runtime_error);
  CHECK_THROWS_AS(read_idx((dir / "missing").string(), (dir / "lab5").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("imbalanced counts") {
  CHECK(imbalanced_counts(5, 5000) == std::vector<std::size_t>{5000, 500, 500, 500, 500});
  CHECK(imbalanced_counts(3, 100, 4) == std::vector<std::size_t>{100, 25, 25});
  CHECK_THROWS_AS(imbalanced_counts(0, 10), std::invalid_argument);
}

TEST_CASE("class-incremental stream construction") {
  const auto train = labelled_pool(10, 60, 1), test = labelled_pool(10, 20, 2);
  StreamSpec spec;
  spec.tasks = 5;
  spec.train_counts = imbalanced_counts(5, 100);
  spec.test_counts = {20, 20, 20, 20, 20};
  spec.seed = 4;
  const auto s = build_stream(train, test, spec);
  CHECK_NOTHROW(s.validate());
  CHECK(s.output_dim == 10);
  REQUIRE(s.tasks.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    const auto& task = s.tasks[t];
    CHECK(task.label_space == std::vector<int>{int(2 * t), int(2 * t + 1)});
    CHECK(task.train.size() == spec.train_counts[t]);
    CHECK(task.test.size() == 20);
    std::size_t first = 0;
    for (int y : task.train.labels()) first += y == int(2 * t);
    CHECK(first == task.train.size() / 2);
    for (std::size_t i = 0; i < task.train.size(); ++i) {
      for (float v : task.train.row(i)) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  CHECK(build_stream(train, test, spec).tasks[2].train == s.tasks[2].train);

  spec.train_counts = imbalanced_counts(5, 1000);
  CHECK_THROWS_AS(build_stream(train, test, spec), std::invalid_argument);
}

TEST_CASE("domain-incremental streams use disjoint rows and per-task transforms") {
  const auto train = labelled_pool(2, 40, 5), test = labelled_pool(2, 10, 6);
  StreamSpec spec;
  spec.scenario = Scenario::domain_il;
  spec.tasks = 3;
  spec.normalize = false;
  spec.transform = DomainTransform::none;
  spec.train_counts = {20, 20, 20};
  const auto s = build_stream(train, test, spec);
  CHECK_NOTHROW(s.validate());
  std::set<std::vector<float>> rows;
  std::size_t total = 0;
  for (const auto& t : s.tasks) {
    CHECK(t.label_space == std::vector<int>{0, 1});
    for (std::size_t i = 0; i < t.train.size(); ++i) {
      rows.insert({t.train.row(i).begin(), t.train.row(i).end()});
      ++total;
    }
  }
  CHECK(rows.size() == total);

  spec.transform = DomainTransform::permute;
  const auto p = build_stream(train, test, spec);
  // a permutation keeps each row's multiset of values
  for (std::size_t i = 0; i < 5; ++i) {
    auto a = std::vector<float>(p.tasks[1].test.row(i).begin(), p.tasks[1].test.row(i).end());
    auto b = std::vector<float>(test.row(i).begin(), test.row(i).end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("image rotation") {
  std::vector<float> img(25, 0.0f);
  img[2 * 5 + 4] = 1.0f;  // right of centre
  CHECK(rotate_image(img, 5, 0.0) == img);
  const auto quarter = rotate_image(img, 5, std::acos(-1.0) / 2);
  float total = 0.0f;
  for (float v : quarter) total += v;
  CHECK(total == doctest::Approx(1.0f));
  CHECK((quarter[0 * 5 + 2] == doctest::Approx(1.0f) || quarter[4 * 5 + 2] == doctest::Approx(1.0f)));
  CHECK_THROWS_AS(rotate_image(img, 4, 0.1), std::invalid_argument);
}

TEST_CASE("min-max scaling") {
  const auto ds = FeatureDataset::from_rows({{0.0, 5.0, 2.0}, {10.0, 5.0, 4.0}, {5.0, 5.0, 3.0}}, {0, 1, 0});
  const auto s = MinMaxScaler::fit(ds);
  const auto out = s.apply(ds);
  CHECK(out.row(2)[0] == doctest::Approx(0.5));
  CHECK(out.row(1)[1] == 0.0f);
  CHECK(out.row(1)[2] == doctest::Approx(1.0));
}

TEST_CASE("native dataset round trip and corruption") {
  const auto ds = labelled_pool(3, 7, 9);
  const auto bytes = encode_dataset(ds);
  CHECK(decode_dataset(bytes) == ds);
  CHECK_THROWS_AS(decode_dataset(bytes.substr(0, bytes.size() - 1)), std::runtime_error);
  CHECK_THROWS_AS(decode_dataset(bytes + "x"), std::runtime_error);
  CHECK_THROWS_AS(decode_dataset("{\"format\":\"other\"}\n"), std::runtime_error);

  const auto dir = scratch("native");
  write_files_atomically({{dir / "d.bin", bytes}});
  CHECK(load_dataset((dir / "d.bin").string()) == ds);
  fs::remove_all(dir);
}

TEST_CASE("snapshot round trip") {
  DualMemory m({3, 3, 6});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 9; ++i) {
    m.reservoir_update({{float(i) * 0.25f, -1.5f}, i % 3, {0.1 * i, -2.0, 1e-17}, i / 3}, rng);
  }
  m.insert_slow({{{0.125f, 3.0f}, 7, {1.0, 2.0, 3.0}, 2}});
  const auto files = encode_snapshot(m);
  CHECK(files.csv.rfind("# seen=9", 0) == 0);
  const auto back = decode_snapshot(files, m.config());
  CHECK(back.fast() == m.fast());
  CHECK(back.slow() == m.slow());
  CHECK(back.seen_count() == 9);
  CHECK_THROWS(decode_snapshot({files.csv, files.blob.substr(4)}, m.config()));
  CHECK_THROWS(decode_snapshot(files, MemoryConfig{1, 1, 2}));
}

TEST_CASE("output writers") {
  RunMetrics rm;
  rm.accuracy = {{1.0}, {0.5, 0.75}};
  CHECK(metrics_csv(rm) == "train_task,eval_task,accuracy\n0,0,1\n1,0,0.5\n1,1,0.75\n");
  const std::vector<std::size_t> idx{3, 1};
  CHECK(indices_csv(idx).find('3') != std::string::npos);

  const auto dir = scratch("atomic");
  write_files_atomically({{dir / "a.txt", "alpha"}, {dir / "b.txt", "beta"}});
  CHECK(read_file((dir / "a.txt").string()) == "alpha");
  CHECK(read_file((dir / "b.txt").string()) == "beta");
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");
  // a regular file where a parent directory should be
  write_files_atomically({{dir / "blocker", "x"}});
  CHECK_THROWS(write_files_atomically({{dir / "c.txt", "c"}, {dir / "blocker" / "d.txt", "d"}}));
  CHECK(!fs::exists(dir / "c.txt"));
  CHECK_THROWS_AS(read_file((dir / "zzz").string()), std::runtime_error);
  fs::remove_all(dir);
}
