#include <doctest.h>

#include <algorithm>
#include <random>

#include "smcpar/kernels.hpp"
#include "support.hpp"

using namespace smcpar;

namespace {

struct GroupOutput {
  std::vector<Count> keys;
  std::vector<double> rows;
};

template <class Kernel>
GroupOutput run_kernel(const testing::Instance& inst, int P, Kernel kernel) {
  auto shards = spawn_group(P, [&](Communicator& c) { return kernel(c, testing::slice(inst, P, c.rank())); });
  GroupOutput out;
  for (auto& s : shards) {
    REQUIRE(s.size() == inst.N() / static_cast<std::size_t>(P));
    out.keys.insert(out.keys.end(), s.keys.begin(), s.keys.end());
    out.rows.insert(out.rows.end(), s.particles.values().begin(), s.particles.values().end());
  }
  return out;
}

KeyedShard make_shard(std::vector<Count> keys) {
  KeyedShard s;
  s.particles = ParticleShard(keys.size(), 1);
  for (std::size_t i = 0; i < keys.size(); ++i) s.particles.row(i)[0] = static_cast<double>(i);
  s.keys = std::move(keys);
  return s;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("nearly-sorted predicate") {
  CHECK(is_nearly_sorted_ascending(std::vector<Count>{0, 0, 3, 1}));
  CHECK(is_nearly_sorted_ascending(std::vector<Count>{}));
  CHECK_FALSE(is_nearly_sorted_ascending(std::vector<Count>{0, 2, 0, 1}));
}

TEST_CASE("sequential nearly sort: zeros left, positives from the back, n writes") {
  KernelStats stats;
  auto out = sequential_nearly_sort(make_shard({3, 0, 1, 0, 0, 4}), &stats);
  CHECK(out.keys == std::vector<Count>{0, 0, 0, 4, 1, 3});
  CHECK(stats.writes == 6);
  CHECK(out.particles.row(0)[0] == 1.0);
  CHECK(out.particles.row(5)[0] == 0.0);
}

TEST_CASE("local sort keeps pairs together") {
  for (auto kind : {LocalSort::merge, LocalSort::bitonic}) {
    auto out = local_sort(make_shard({5, 0, 2, 0, 7, 1, 1, 3}), Direction::ascending, kind);
    CHECK(std::is_sorted(out.keys.begin(), out.keys.end()));
    CHECK(out.keys[7] == 7);
    CHECK(out.particles.row(7)[0] == 4.0);
    auto desc = local_sort(make_shard({5, 0, 2, 0, 7, 1, 1, 3}), Direction::descending, kind);
    CHECK(std::is_sorted(desc.keys.rbegin(), desc.keys.rend()));
  }
}

TEST_CASE("merge sort is stable") {
  auto out = local_sort(make_shard({1, 0, 1, 0}), Direction::ascending, LocalSort::merge);
  CHECK(out.particles.row(0)[0] == 1.0);
  CHECK(out.particles.row(1)[0] == 3.0);
  CHECK(out.particles.row(2)[0] == 0.0);
  CHECK(out.particles.row(3)[0] == 2.0);
}

TEST_CASE("nearly merge consumes complementary halves") {
  // Lower rank holds [0,0,2,1] (ascending nearly sorted), upper [4,1,0,0].
  auto out = spawn_group(2, [](Communicator& c) {
    KernelStats stats;
    auto in = c.rank() == 0 ? make_shard({0, 0, 2, 1}) : make_shard({4, 1, 0, 0});
    auto res = nearly_merge(c, in, 1 - c.rank(), c.rank() == 0 ? MergeRole::zeros_first : MergeRole::positives_first,
                            &stats);
    CHECK(stats.writes == 4);
    return res.keys;
  });
  CHECK(out[0] == std::vector<Count>{0, 0, 0, 0});
  CHECK(out[1] == std::vector<Count>{2, 1, 4, 1});
}

TEST_CASE("bitonic sort and nearly sort on random instances") {
  std::mt19937_64 rng(11);
  for (std::size_t N : {16u, 64u, 256u}) {
    for (std::size_t M : {1u, 4u}) {
      for (int P : {1, 2, 4, 8}) {
        for (int rep = 0; rep < 10; ++rep) {
          CAPTURE(N);
          CAPTURE(M);
          CAPTURE(P);
          const auto inst = testing::random_instance(N, M, rng);
          const auto want = testing::pair_multiset(inst.keys, inst.rows, M);

          for (auto kind : {LocalSort::merge, LocalSort::bitonic}) {
            for (auto dir : {Direction::ascending, Direction::descending}) {
              auto got = run_kernel(inst, P, [&](Communicator& c, KeyedShard s) { return bitonic_sort(c, std::move(s), dir, kind); });
              if (dir == Direction::ascending) {
                CHECK(std::is_sorted(got.keys.begin(), got.keys.end()));
              } else {
                CHECK(std::is_sorted(got.keys.rbegin(), got.keys.rend()));
              }
              CHECK(testing::pair_multiset(got.keys, got.rows, M) == want);
            }
          }

          auto ns = run_kernel(inst, P, [](Communicator& c, KeyedShard s) { return parallel_nearly_sort(c, std::move(s)); });
          CHECK(testing::nearly_sorted(ns.keys));
          CHECK(testing::pair_multiset(ns.keys, ns.rows, M) == want);
        }
      }
    }
  }
}

TEST_CASE("nearly sort writes are data independent") {
  std::mt19937_64 rng(5);
  // Ranks play different merge roles, so compare each rank across inputs.
  std::vector<std::vector<std::size_t>> writes;
  for (int rep = 0; rep < 8; ++rep) {
    const auto inst = testing::random_instance(64, 1, rng);
    auto per_rank = spawn_group(4, [&](Communicator& c) {
      KernelStats stats;
      (void)parallel_nearly_sort(c, testing::slice(inst, 4, c.rank()), &stats);
      return stats.writes;
    });
    writes.push_back(per_rank);
  }
  for (const auto& w : writes) CHECK(w == writes[0]);
}

}  // TEST_SUITE
