#pragma once

// Experiment harness: timed runs, CSV records and median summaries.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smcpar/models.hpp"

namespace smcpar::bench {

inline constexpr std::string_view kCsvHeader =
    "experiment,algo,N,M,P,T,D,seed,rep,wall_time_s,resamples,estimate,rmse";

struct RunRecord {
  std::string experiment;
  std::string algo;
  std::uint64_t N = 0;
  std::size_t M = 1;
  int P = 1;
  std::size_t T = 0;
  std::size_t D = 0;
  std::uint64_t seed = 0;
  std::size_t rep = 0;
  double wall_time_s = 0.0;
  std::size_t resamples = 0;
  std::vector<double> estimate;  // written ';'-separated
  std::optional<double> rmse;

  // Not part of the CSV.
  double importance_seconds = 0.0;
  double resample_seconds = 0.0;

  /// Compares the CSV columns only.
  bool same_row(const RunRecord& o) const;
};

/// One CSV line without the trailing newline.
std::string format_record(const RunRecord& r);
RunRecord parse_record(std::string_view line);

void write_csv(std::ostream& os, const std::vector<RunRecord>& records);
/// Throws std::runtime_error if the path cannot be written.
void emit_csv(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> parse_csv(std::istream& is);

double median(std::vector<double> values);

struct SummaryRow {
  std::string experiment;
  std::string algo;
  std::uint64_t N = 0;
  int P = 1;
  std::size_t T = 0;
  std::size_t D = 0;
  std::size_t runs = 0;
  double median_wall_time_s = 0.0;
  std::optional<double> speedup;   // median at P=1 over median at P
  std::optional<double> rmse;      // sqrt(mean rmse^2) over runs
  std::optional<double> is_share;  // median importance / (importance + resample)
};

/// Groups by (experiment, algo, N, T, D, P) in first-seen order.
std::vector<SummaryRow> summarise(const std::vector<RunRecord>& records);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

struct Options {
  std::size_t N = std::size_t{1} << 14;
  std::vector<int> P{1, 2, 4, 8};
  std::size_t T = 100;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> algos;  // empty means the experiment's default set
  std::vector<std::size_t> D{1};
  std::size_t M = 1;
  models::StudentTParams student;
  std::optional<std::size_t> tau;  // MH burn-in
  bool worst_case = false;
  std::size_t centralised_capacity = 0;
};

/// NS, BS and BS+MS on MVR-generated duplication counts.
std::vector<RunRecord> bench_sort(const Options& o);

/// NR, BR and CR (SR at P=1 if requested). CR capacity failures leave the
/// point out.
std::vector<RunRecord> bench_redistribute(const Options& o);

/// Particle filter on the stochastic volatility model ("econ") or the
/// bearing model ("bearing", D = o.D.front()).
std::vector<RunRecord> bench_pf(const Options& o, std::string_view model);

/// SMC sampler on the Student's t target.
std::vector<RunRecord> bench_smcs(const Options& o);

/// Worst-case bearing filter for each D in o.D.
std::vector<RunRecord> bench_multisensor(const Options& o);

struct MHComparison {
  std::vector<RunRecord> records;
  std::vector<int> P;
  std::vector<double> su;          // MH time over SMCS time at equal workload
  std::vector<std::size_t> T_equal_time;
  std::vector<double> rmse_smcs;   // at equalised time
  double rmse_mh = 0.0;
  std::vector<double> ideal_ratio;  // 1 / sqrt(P)
};

/// Equal workload first (T_MH = N * T), then SMCS rerun for T * SU_P
/// iterations and compared against the MH baseline.
MHComparison compare_mh(const Options& o);

/// BearingParams for D sensors on a circle around the initial position.
models::BearingParams bearing_setup(std::size_t D);
models::BearingState bearing_initial_state();

}  // namespace smcpar::bench
