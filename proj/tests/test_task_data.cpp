#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "ordlab/task_data.hpp"

using namespace ordlab;

TEST_CASE("label arithmetic") {
  CHECK(label(0, 0, 7) == 0);
  CHECK(label(3, 5, 7) == 1);
  CHECK(label(96, 96, 97) == 95);
  CHECK(label(9972, 9972, 9973) == 9971);
  CHECK_THROWS_AS(label(7, 0, 7), std::invalid_argument);
}

TEST_CASE("is_prime") {
  CHECK(is_prime(2));
  CHECK(is_prime(97));
  CHECK(is_prime(9973));
  CHECK_FALSE(is_prime(1));
  CHECK_FALSE(is_prime(91));  // 7 * 13
  CHECK_FALSE(is_prime(9975));
}

TEST_CASE("spec validation") {
  TaskSpec ok{97, 2500, 1000, 0};
  CHECK_NOTHROW(ok.validate());
  TaskSpec composite{96, 100, 100, 0};
  CHECK_THROWS_AS(composite.validate(), std::invalid_argument);
  TaskSpec overflow{7, 40, 10, 0};  // 50 > 49
  CHECK_THROWS_AS(overflow.validate(), std::invalid_argument);
  TaskSpec no_test{7, 40, 0, 0};
  CHECK_THROWS_AS(no_test.validate(), std::invalid_argument);
  TaskSpec full_grid{7, 49, 0, 0};
  CHECK_NOTHROW(full_grid.validate());
}

TEST_CASE("generated splits are disjoint, in range, correctly labeled") {
  TaskSpec spec{97, 2500, 1000, 12345};
  Dataset ds = generate_dataset(spec);
  REQUIRE(ds.train.size() == 2500);
  REQUIRE(ds.test.size() == 1000);
  std::set<std::uint64_t> seen;
  auto visit = [&](const ExamplePair& e) {
    CHECK(e.a < spec.p);
    CHECK(e.b < spec.p);
    CHECK(e.c == (e.a + e.b) % spec.p);
    seen.insert(static_cast<std::uint64_t>(e.a) * spec.p + e.b);
  };
  for (const auto& e : ds.train) visit(e);
  for (const auto& e : ds.test) visit(e);
  CHECK(seen.size() == 3500);  // no duplicates anywhere
}

TEST_CASE("generation is a pure function of the seed") {
  TaskSpec spec{97, 300, 100, 7};
  Dataset a = generate_dataset(spec);
  Dataset b = generate_dataset(spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  spec.data_seed = 8;
  Dataset c = generate_dataset(spec);
  CHECK(a.train != c.train);
}

TEST_CASE("full grid enumeration covers every pair exactly once") {
  TaskSpec spec{11, 121, 0, 42};
  Dataset ds = generate_dataset(spec);
  std::set<std::uint64_t> seen;
  for (const auto& e : ds.train) seen.insert(static_cast<std::uint64_t>(e.a) * 11 + e.b);
  CHECK(seen.size() == 121);
}

TEST_CASE("large-p sampling stays tractable and disjoint") {
  TaskSpec spec{9973, 30000, 1000, 1};
  Dataset ds = generate_dataset(spec);
  std::set<std::uint64_t> seen;
  for (const auto& e : ds.train) seen.insert(static_cast<std::uint64_t>(e.a) * 9973 + e.b);
  for (const auto& e : ds.test) seen.insert(static_cast<std::uint64_t>(e.a) * 9973 + e.b);
  CHECK(seen.size() == 31000);
}

TEST_CASE("save / load round trip") {
  TaskSpec spec{97, 200, 50, 99};
  Dataset ds = generate_dataset(spec);
  auto path = std::filesystem::temp_directory_path() / "ordlab_dataset_test.bin";
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  CHECK(back.spec.p == spec.p);
  CHECK(back.spec.data_seed == spec.data_seed);
  CHECK(back.train == ds.train);
  CHECK(back.test == ds.test);
  std::filesystem::remove(path);
}

TEST_CASE("load rejects garbage") {
  auto path = std::filesystem::temp_directory_path() / "ordlab_garbage.bin";
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  std::fputs("definitely not a dataset", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
  std::filesystem::remove(path);
}
