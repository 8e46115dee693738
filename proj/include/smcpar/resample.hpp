#pragma once

// Weight normalisation, effective sample size, minimum variance resampling and
// the redistribute family:
//   SR  sequential, single rank
//   CR  centralised: gather to rank 0, SR there, scatter back
//   BR  bitonic sort, then recursive Distribute
//   NR  parallel nearly sort, then recursive Distribute

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "smcpar/comm.hpp"
#include "smcpar/kernels.hpp"
#include "smcpar/shard.hpp"

namespace smcpar {

/// All-zero or non-finite weights.
class DegenerateWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A weight vector used where normalised weights are required, or vice versa.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// sum(ncopies) differs from the particle count somewhere it must match.
/// Always an internal bug.
class MassInvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Centralised redistribute asked to hold more than its capacity at rank 0.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RedistributeAlgo { SR, CR, BR, NR };

std::string_view to_string(RedistributeAlgo algo) noexcept;
std::optional<RedistributeAlgo> parse_redistribute_algo(std::string_view name) noexcept;

struct ResampleConfig {
  std::size_t N = 0;            // global particle count, power of two
  double threshold = 0.0;       // resample when ESS < threshold; 0 means N/2
  RedistributeAlgo algo = RedistributeAlgo::NR;
  LocalSort local_sort = LocalSort::merge;  // BR only
  std::size_t centralised_capacity = 0;     // CR rank-0 scalar budget; 0 = unlimited

  double effective_threshold() const { return threshold > 0.0 ? threshold : static_cast<double>(N) / 2.0; }
  void validate() const;
};

/// Rank-local weights. `normalised` is set only by normalise()/reset_weights().
class WeightShard {
 public:
  WeightShard() = default;
  explicit WeightShard(std::vector<double> values) : values_(std::move(values)) {}

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool normalised() const noexcept { return normalised_; }

 private:
  friend WeightShard normalise(Communicator&, std::span<const double>);
  friend WeightShard normalise_log(Communicator&, std::span<const double>, double*);
  friend WeightShard reset_weights(std::size_t, std::size_t);

  std::vector<double> values_;
  bool normalised_ = false;
};

/// w_i / sum_j w_j over the whole group.
WeightShard normalise(Communicator& comm, std::span<const double> weights);

/// Same as normalise() for log weights, via a global max shift. Optionally
/// reports log(sum_i w_i).
WeightShard normalise_log(Communicator& comm, std::span<const double> log_weights, double* log_total = nullptr);

/// log(sum_i exp(log_w_i)) over the group.
double global_log_sum_exp(Communicator& comm, std::span<const double> log_weights);

/// 1 / sum_i w_i^2 over normalised weights.
double ess(Communicator& comm, const WeightShard& normalised);

/// Duplication counts from one shared offset u in [0, 1):
///   ncopies_i = floor(N c_i - u) - floor(N c_{i-1} - u), c the global CDF.
std::vector<Count> mvr_ncopies(Communicator& comm, const WeightShard& normalised, std::size_t N, double u);

/// As above with u drawn on rank 0 from `rng` and broadcast.
std::vector<Count> mvr_ncopies(Communicator& comm, const WeightShard& normalised, std::size_t N, std::mt19937_64& rng);

/// Concatenation of ncopies[j] copies of row j, j ascending.
ParticleShard redistribute_sequential(std::span<const Count> ncopies, const ParticleShard& particles);

/// Per-level record of Distribute's mass checks.
struct DistributeTrace {
  std::size_t nodes_checked = 0;
  std::size_t straddles = 0;
  bool record_keys = false;
  std::vector<std::vector<Count>> level_keys;  // local keys after each split, if recorded
};

ParticleShard redistribute_centralised(Communicator& comm, KeyedShard shard, std::size_t capacity = 0);

/// Recursive pivot / rotational-shift balancing of a group whose keys are
/// partitioned (zeros then positives, or positives then zeros). Ends with
/// sequential redistribute on every rank.
ParticleShard distribute(Communicator& comm, KeyedShard shard, DistributeTrace* trace = nullptr);

ParticleShard redistribute_bitonic(Communicator& comm, KeyedShard shard, LocalSort kind = LocalSort::merge,
                                   DistributeTrace* trace = nullptr);

ParticleShard redistribute_nearly(Communicator& comm, KeyedShard shard, DistributeTrace* trace = nullptr);

/// Dispatches on cfg.algo. SR gathers nothing and is only valid with P = 1.
ParticleShard redistribute(Communicator& comm, const ResampleConfig& cfg, KeyedShard shard,
                           DistributeTrace* trace = nullptr);

/// n_local entries of 1/N.
WeightShard reset_weights(std::size_t n_local, std::size_t N);

}  // namespace smcpar
