#include <doctest.h>

#include <cmath>
#include <sstream>

#include "smcpar/bench.hpp"

using namespace smcpar;
using namespace smcpar::bench;

namespace {

Options tiny() {
  Options o;
  o.N = 64;
  o.P = {1, 2};
  o.T = 4;
  o.reps = 2;
  o.seed = 3;
  return o;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("empty record set writes only the header") {
  std::ostringstream os;
  write_csv(os, {});
  CHECK(os.str() == std::string(kCsvHeader) + "\n");
}

TEST_CASE("csv round trip") {
  RunRecord r;
  r.experiment = "pf-econ";
  r.algo = "NR";
  r.N = 1024;
  r.M = 2;
  r.P = 4;
  r.T = 10;
  r.D = 1;
  r.seed = 7;
  r.rep = 3;
  r.wall_time_s = 0.125;
  r.resamples = 9;
  r.estimate = {0.1, -2.0 / 3.0};
  r.rmse = 0.3;
  RunRecord s = r;
  s.rmse.reset();
  s.estimate.clear();

  std::ostringstream os;
  write_csv(os, {r, s});
  std::istringstream is(os.str());
  const auto back = parse_csv(is);
  REQUIRE(back.size() == 2);
  CHECK(back[0].same_row(r));
  CHECK(back[1].same_row(s));
  CHECK(back[0].estimate[1] == r.estimate[1]);
  CHECK_FALSE(back[1].rmse.has_value());
  CHECK_THROWS(parse_record("a,b,c"));
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("summary speedup and shares") {
  std::vector<RunRecord> rs;
  for (int P : {1, 2}) {
    for (double t : {1.0, 2.0, 3.0}) {
      RunRecord r;
      r.experiment = "x";
      r.algo = "NR";
      r.N = 8;
      r.P = P;
      r.wall_time_s = t / P;
      r.importance_seconds = 3.0;
      r.resample_seconds = 1.0;
      rs.push_back(r);
    }
  }
  const auto rows = summarise(rs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].runs == 3);
  CHECK(*rows[0].speedup == 1.0);
  CHECK(*rows[1].speedup == doctest::Approx(2.0));
  CHECK(*rows[0].is_share == doctest::Approx(0.75));
  CHECK_FALSE(rows[0].rmse.has_value());
}

TEST_CASE("worst case resamples every step") {
  Options o = tiny();
  o.worst_case = true;
  o.algos = {"NR"};
  for (const auto& r : bench_pf(o, "econ")) CHECK(r.resamples == o.T);
}

TEST_CASE("benchmarks are reproducible apart from timings") {
  Options o = tiny();
  const auto a = bench_smcs(o);
  const auto b = bench_smcs(o);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].estimate == b[i].estimate);
    CHECK(a[i].resamples == b[i].resamples);
  }
}

TEST_CASE("bearing sensors surround the start") {
  const auto p = bearing_setup(4);
  REQUIRE(p.sensors.size() == 4);
  const auto x0 = bearing_initial_state();
  for (const auto& s : p.sensors) CHECK(std::hypot(s.x - x0[0], s.y - x0[2]) == doctest::Approx(100.0));
}

}  // TEST_SUITE
