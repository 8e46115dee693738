#pragma once

// SIR particle filter, SMC sampler with recycling, and random-walk
// Metropolis-Hastings.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcpar/comm.hpp"
#include "smcpar/model_api.hpp"
#include "smcpar/resample.hpp"

namespace smcpar {

/// A model density or weight that came out NaN or +inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rng purposes: per-rank particle stream, rank-0 resampling offsets, MH chain.
inline constexpr std::uint64_t kParticleStream = 1;
inline constexpr std::uint64_t kOffsetStream = 2;
inline constexpr std::uint64_t kChainStream = 3;

struct PFOptions {
  // Sort particle rows lexicographically after every redistribute so that
  // different redistribute variants feed identical inputs to the proposal.
  bool canonicalise = false;
};

struct PFResult {
  std::vector<std::vector<double>> estimates;  // T weighted means
  std::vector<double> ess;                     // ESS before any resampling
  std::size_t resamples = 0;
  double importance_seconds = 0.0;  // rank-local
  double resample_seconds = 0.0;    // rank-local
};

/// Collective. One step per measurement row. Every rank returns the same
/// estimates.
PFResult run_sir_pf(Communicator& comm, const PFModel& model, std::span<const std::vector<double>> measurements,
                    const ResampleConfig& cfg, std::uint64_t seed, PFOptions options = {});

struct EstimateSeries {
  std::vector<std::vector<double>> f;  // per-iteration weighted means
  std::vector<double> log_c;           // log normalisation-constant ratios
  std::vector<double> recycled;        // combined estimate
  std::size_t resamples = 0;
  double importance_seconds = 0.0;
  double resample_seconds = 0.0;
};

/// Collective. T iterations after the initial draw.
EstimateSeries run_smc_sampler(Communicator& comm, const SMCSModel& model, const ResampleConfig& cfg, std::size_t T,
                               std::uint64_t seed, PFOptions options = {});

/// sum_t f_t c_t / sum_t c_t.
std::vector<double> recycle(std::span<const std::vector<double>> f, std::span<const double> c);

/// recycle() with c given as logs; stable for widely spread constants.
std::vector<double> recycle_log(std::span<const std::vector<double>> f, std::span<const double> log_c);

/// Gathers, sorts rows lexicographically at rank 0 and scatters back.
ParticleShard canonicalise(Communicator& comm, const ParticleShard& particles);

struct MHTarget {
  std::size_t dim = 1;
  std::function<double(std::span<const double>)> log_density;
  std::vector<double> initial;  // empty means the origin
};

struct MHConfig {
  std::size_t iterations = 0;
  std::optional<std::size_t> burn_in;  // default: 10% of iterations
  double epsilon = 0.5;
  std::vector<double> covariance;  // dim x dim row-major; empty means identity
  bool keep_samples = false;

  std::size_t effective_burn_in() const { return burn_in.value_or(iterations / 10); }
  void validate(std::size_t dim) const;
};

struct MHResult {
  std::vector<double> mean;  // over post-burn-in samples
  double acceptance_rate = 0.0;
  std::vector<std::vector<double>> samples;  // all iterations, when kept
};

/// Single worker. Proposal x* ~ N(x, epsilon^2 Sigma); accept when r < a.
MHResult run_mh(const MHTarget& target, const MHConfig& cfg, std::uint64_t seed);

/// Pilot runs adjusting epsilon toward the given acceptance rate.
double tune_mh_epsilon(const MHTarget& target, double initial_epsilon, std::uint64_t seed,
                       double target_acceptance = 0.44, std::size_t pilot_iterations = 2000, int rounds = 12);

}  // namespace smcpar
