#include "doctest.h"

#include <stdexcept>

#include "dualmem/config.hpp"

using namespace dualmem;
using nlohmann::json;

namespace {

json mixture() {
  return {{"source", "mixture"},
          {"seed", 3},
          {"components", {{{"mean", {0.1, 0.2}}, {"stddev", 0.01}, {"label", 0}, {"count", 5}}}}};
}

}  // namespace

TEST_CASE("select config defaults and overrides") {
  const auto c = parse_select_config({{"data", mixture()}, {"itmo", {{"sample_count", 4}}}, {"mode", "balanced"}});
  CHECK(c.itmo.sample_count == 4);
  CHECK(c.itmo.lambda_ksp == 5.0);
  CHECK(c.itmo.temperature == 0.5);
  CHECK(c.mode == SelectionMode::balanced);
  CHECK(c.data.mixture.components.size() == 1);
  CHECK(c.random_baseline == 20);
}

TEST_CASE("unknown keys and bad values are rejected with their path") {
  auto expect = [](const json& j, const std::string& fragment) {
    try {
      parse_select_config(j);
      FAIL("accepted " << j.dump());
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect({{"data", mixture()}, {"bogus", 1}}, "bogus");
  expect({{"data", mixture()}, {"itmo", {{"lambda_kps", 1}}}}, "lambda_kps");
  expect({{"data", mixture()}, {"itmo", {{"epochs", "many"}}}}, "itmo.epochs");
  expect({{"data", mixture()}, {"mode", "greedy"}}, "greedy");
  expect({{"itmo", json::object()}}, "data");
  expect({{"data", {{"source", "tape"}}}}, "tape");
}

TEST_CASE("simulate config") {
  const json j{{"data", mixture()},
               {"stream", {{"tasks", 3}, {"imbalanced_first", 300}, {"scenario", "task-il"}}},
               {"harness", {{"method", "der++-single"}, {"hidden", {8}}}},
               {"memory", {{"fast_capacity", 10}, {"slow_capacity", 10}}}};
  const auto c = parse_simulate_config(j);
  CHECK(c.stream.train_counts == std::vector<std::size_t>{300, 30, 30});
  CHECK(c.stream.scenario == Scenario::task_il);
  CHECK(c.harness.method == Method::derpp_single);
  CHECK(c.harness.memory.max_capacity == 20);
  CHECK(c.harness.hidden == std::vector<std::size_t>{8});

  json over = j;
  over["memory"]["max_capacity"] = 15;
  CHECK_THROWS_AS(parse_simulate_config(over), std::invalid_argument);
  json both = j;
  both["stream"]["train_counts"] = {1, 2, 3};
  CHECK_THROWS_AS(parse_simulate_config(both), std::invalid_argument);
}

TEST_CASE("ablate config needs two methods and two seeds") {
  json j{{"data", mixture()}, {"methods", {"itdms", "sgd-none"}}, {"seeds", {1, 2}}};
  const auto c = parse_ablate_config(j);
  CHECK(c.methods.size() == 2);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  j["seeds"] = {1};
  CHECK_THROWS_AS(parse_ablate_config(j), std::invalid_argument);
  j["seeds"] = {1, 2};
  j["methods"] = {"itdms", "hat"};
  CHECK_THROWS_AS(parse_ablate_config(j), std::invalid_argument);
}

TEST_CASE("inspect config") {
  const auto c = parse_inspect_config({{"snapshot", "snaps/task_0"},
                                       {"memory", {{"fast_capacity", 5}, {"slow_capacity", 5}}},
                                       {"partition", "task_and_label"}});
  CHECK(c.key == PartitionKey::task_and_label);
  CHECK(!c.quota.has_value());
  CHECK_THROWS_AS(parse_inspect_config({{"memory", {{"fast_capacity", 5}}}}), std::invalid_argument);
}

TEST_CASE("config echo round-trips through the parser") {
  HarnessConfig h;
  h.alpha = 0.25;
  h.hidden = {7, 3};
  h.memory = {4, 6, 10};
  json echo = to_json(h);
  json j{{"data", mixture()}};
  for (const char* section : {"memory", "itmo", "kernel"}) {
    j[section] = echo[section];
    echo.erase(section);
  }
  j["harness"] = echo;
  const auto c = parse_simulate_config(j);
  CHECK(c.harness.memory.slow_capacity == 6);
  CHECK(c.harness.alpha == 0.25);
  CHECK(c.harness.hidden == h.hidden);
  ItmoConfig i;
  i.lambda_cs = 0.0;
  CHECK(parse_select_config({{"data", mixture()}, {"itmo", to_json(i)}}).itmo.lambda_cs == 0.0);
}
