#include "smcpar/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace smcpar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t local_count(const Communicator& comm, const ResampleConfig& cfg) {
  cfg.validate();
  const auto P = static_cast<std::size_t>(comm.size());
  if (cfg.N < P) throw std::invalid_argument("N must be at least the number of ranks");
  if (cfg.algo == RedistributeAlgo::SR && P != 1) {
    throw std::invalid_argument("sequential redistribute runs on a single rank");
  }
  return cfg.N / P;
}

void check_log_weight(double lw) {
  if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
    throw NumericalError("model returned a non-finite log weight");
  }
}

std::vector<double> weighted_mean(Communicator& comm, const WeightShard& w, const ParticleShard& x,
                                  std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  const auto wv = w.values();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t k = 0; k < dim; ++k) acc[k] += wv[i] * row[k];
  }
  comm.allreduce_sum(std::span<double>(acc));
  return acc;
}

ParticleShard resample(Communicator& comm, const ResampleConfig& cfg, const WeightShard& w, ParticleShard particles,
                       Rng& offset_rng, const PFOptions& options) {
  KeyedShard keyed{mvr_ncopies(comm, w, cfg.N, offset_rng), std::move(particles)};
  ParticleShard out = redistribute(comm, cfg, std::move(keyed));
  if (options.canonicalise) out = canonicalise(comm, out);
  return out;
}

}  // namespace

ParticleShard canonicalise(Communicator& comm, const ParticleShard& particles) {
  const std::size_t dim = particles.dim();
  const std::size_t n = particles.rows();
  auto all = comm.gather<double>(particles.values());
  std::vector<double> sorted;
  if (comm.rank() == 0) {
    const std::size_t rows = all.size() / dim;
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(all.begin() + static_cast<std::ptrdiff_t>(a * dim),
                                          all.begin() + static_cast<std::ptrdiff_t>((a + 1) * dim),
                                          all.begin() + static_cast<std::ptrdiff_t>(b * dim),
                                          all.begin() + static_cast<std::ptrdiff_t>((b + 1) * dim));
    });
    sorted.reserve(all.size());
    for (std::size_t r : order) {
      sorted.insert(sorted.end(), all.begin() + static_cast<std::ptrdiff_t>(r * dim),
                    all.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
    }
  }
  auto local = comm.scatter<double>(sorted, n * dim);
  return ParticleShard(dim, TrackedVector<double>(local.begin(), local.end()));
}

PFResult run_sir_pf(Communicator& comm, const PFModel& model, std::span<const std::vector<double>> measurements,
                    const ResampleConfig& cfg, std::uint64_t seed, PFOptions options) {
  const std::size_t n = local_count(comm, cfg);
  const std::size_t dim = model.state_dim();
  Rng rng = make_rng(seed, comm.rank(), kParticleStream);
  Rng offset_rng = make_rng(seed, 0, kOffsetStream);

  PFResult result;
  ParticleShard x(n, dim);
  for (std::size_t i = 0; i < n; ++i) model.sample_prior(x.row(i), rng);
  std::vector<double> logw(n, 0.0);

  for (const auto& y : measurements) {
    const auto t0 = Clock::now();
    ParticleShard next(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      model.propose(x.row(i), y, next.row(i), rng);
      logw[i] += model.log_weight_increment(x.row(i), next.row(i), y);
      check_log_weight(logw[i]);
    }
    x = std::move(next);
    result.importance_seconds += seconds_since(t0);

    double log_total = 0.0;
    WeightShard w = normalise_log(comm, logw, &log_total);
    for (double& lw : logw) lw -= log_total;
    const double e = ess(comm, w);
    result.ess.push_back(e);

    if (e < cfg.effective_threshold()) {
      const auto t1 = Clock::now();
      x = resample(comm, cfg, w, std::move(x), offset_rng, options);
      w = reset_weights(n, cfg.N);
      std::fill(logw.begin(), logw.end(), -std::log(static_cast<double>(cfg.N)));
      ++result.resamples;
      result.resample_seconds += seconds_since(t1);
    }
    result.estimates.push_back(weighted_mean(comm, w, x, dim));
  }
  return result;
}

EstimateSeries run_smc_sampler(Communicator& comm, const SMCSModel& model, const ResampleConfig& cfg, std::size_t T,
                               std::uint64_t seed, PFOptions options) {
  const std::size_t n = local_count(comm, cfg);
  const std::size_t dim = model.state_dim();
  Rng rng = make_rng(seed, comm.rank(), kParticleStream);
  Rng offset_rng = make_rng(seed, 0, kOffsetStream);

  // Each row carries the state followed by its cached log target.
  const std::size_t width = dim + 1;
  auto state = [dim](ParticleShard& s, std::size_t i) { return s.row(i).first(dim); };
  auto cstate = [dim](const ParticleShard& s, std::size_t i) { return s.row(i).first(dim); };

  EstimateSeries out;
  ParticleShard x(n, width);
  std::vector<double> logw(n);
  for (std::size_t i = 0; i < n; ++i) {
    model.sample_initial(state(x, i), rng);
    const double lp = model.log_target(cstate(x, i));
    x.row(i)[dim] = lp;
    logw[i] = lp - model.log_initial_density(cstate(x, i));
    check_log_weight(logw[i]);
  }
  double log_prev = global_log_sum_exp(comm, logw);
  for (double& lw : logw) lw -= log_prev;

  for (std::size_t t = 0; t < T; ++t) {
    const auto t0 = Clock::now();
    ParticleShard next(n, width);
    for (std::size_t i = 0; i < n; ++i) {
      const auto prev = cstate(x, i);
      const auto cur = state(next, i);
      model.propose(prev, cur, rng);
      const double lp = model.log_target(cur);
      next.row(i)[dim] = lp;
      logw[i] += lp + model.log_backward(prev, cur) - x.row(i)[dim] - model.log_forward(cur, prev);
      check_log_weight(logw[i]);
    }
    x = std::move(next);
    out.importance_seconds += seconds_since(t0);

    // Previous weights are normalised, so the ratio of sums is the new sum.
    double log_c = 0.0;
    WeightShard w = normalise_log(comm, logw, &log_c);
    if (!std::isfinite(log_c)) throw NumericalError("normalisation constant is not positive and finite");
    out.log_c.push_back(log_c);
    for (double& lw : logw) lw -= log_c;
    out.f.push_back(weighted_mean(comm, w, x, dim));

    if (ess(comm, w) < cfg.effective_threshold()) {
      const auto t1 = Clock::now();
      x = resample(comm, cfg, w, std::move(x), offset_rng, options);
      std::fill(logw.begin(), logw.end(), -std::log(static_cast<double>(cfg.N)));
      ++out.resamples;
      out.resample_seconds += seconds_since(t1);
    }
  }
  if (T > 0) out.recycled = recycle_log(out.f, out.log_c);
  return out;
}

std::vector<double> recycle(std::span<const std::vector<double>> f, std::span<const double> c) {
  if (f.size() != c.size()) throw std::invalid_argument("recycle: f and c differ in length");
  if (f.empty()) throw std::invalid_argument("recycle: empty series");
  std::vector<double> log_c(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (!(c[t] > 0.0) || !std::isfinite(c[t])) throw std::invalid_argument("recycle: c must be positive and finite");
    log_c[t] = std::log(c[t]);
  }
  // Exact for the plain form when all c are equal or T == 1.
  double total = 0.0;
  std::vector<double> acc(f.front().size(), 0.0);
  for (std::size_t t = 0; t < f.size(); ++t) {
    if (f[t].size() != acc.size()) throw std::invalid_argument("recycle: ragged estimates");
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += f[t][k] * c[t];
    total += c[t];
  }
  if (!std::isfinite(total)) return recycle_log(f, log_c);
  for (double& a : acc) a /= total;
  return acc;
}

std::vector<double> recycle_log(std::span<const std::vector<double>> f, std::span<const double> log_c) {
  if (f.size() != log_c.size()) throw std::invalid_argument("recycle: f and c differ in length");
  if (f.empty()) throw std::invalid_argument("recycle: empty series");
  double shift = -std::numeric_limits<double>::infinity();
  for (double lc : log_c) {
    if (!std::isfinite(lc)) throw std::invalid_argument("recycle: c must be positive and finite");
    shift = std::max(shift, lc);
  }
  double total = 0.0;
  std::vector<double> acc(f.front().size(), 0.0);
  for (std::size_t t = 0; t < f.size(); ++t) {
    if (f[t].size() != acc.size()) throw std::invalid_argument("recycle: ragged estimates");
    const double c = std::exp(log_c[t] - shift);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += f[t][k] * c;
    total += c;
  }
  for (double& a : acc) a /= total;
  return acc;
}

void MHConfig::validate(std::size_t dim) const {
  if (iterations == 0) throw std::invalid_argument("MHConfig: iterations must be positive");
  if (effective_burn_in() >= iterations) throw std::invalid_argument("MHConfig: burn-in must be below iterations");
  if (!(epsilon > 0.0)) throw std::invalid_argument("MHConfig: epsilon must be > 0");
  if (!covariance.empty() && covariance.size() != dim * dim) {
    throw std::invalid_argument("MHConfig: covariance must be dim x dim");
  }
}

MHResult run_mh(const MHTarget& target, const MHConfig& cfg, std::uint64_t seed) {
  const std::size_t dim = target.dim;
  cfg.validate(dim);
  if (!target.log_density) throw std::invalid_argument("run_mh: no target density");

  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  const bool identity = cfg.covariance.empty();
  if (!identity) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> sigma(
        cfg.covariance.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("run_mh: covariance is not positive definite");
    L = llt.matrixL();
  }

  std::vector<double> x = target.initial.empty() ? std::vector<double>(dim, 0.0) : target.initial;
  if (x.size() != dim) throw std::invalid_argument("run_mh: initial point has the wrong dimension");
  double lp = target.log_density(x);
  if (!std::isfinite(lp)) throw NumericalError("run_mh: target is not finite at the initial point");

  Rng rng = make_rng(seed, 0, kChainStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::size_t burn = cfg.effective_burn_in();
  MHResult out;
  out.mean.assign(dim, 0.0);
  if (cfg.keep_samples) out.samples.reserve(cfg.iterations);
  std::vector<double> proposal(dim);
  Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
  std::size_t accepted = 0;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
    if (!identity) z = L * z;
    for (std::size_t k = 0; k < dim; ++k) proposal[k] = x[k] + cfg.epsilon * z[static_cast<Eigen::Index>(k)];
    const double lp_new = target.log_density(proposal);
    // Gaussian random walk is symmetric, so the proposal terms cancel.
    const double a = std::isnan(lp_new) ? 0.0 : std::exp(std::min(0.0, lp_new - lp));
    if (uniform(rng) < a) {
      x.swap(proposal);
      lp = lp_new;
      ++accepted;
    }
    if (it >= burn) {
      for (std::size_t k = 0; k < dim; ++k) out.mean[k] += x[k];
    }
    if (cfg.keep_samples) out.samples.push_back(x);
  }
  const auto kept = static_cast<double>(cfg.iterations - burn);
  for (double& m : out.mean) m /= kept;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.iterations);
  return out;
}

double tune_mh_epsilon(const MHTarget& target, double initial_epsilon, std::uint64_t seed, double target_acceptance,
                       std::size_t pilot_iterations, int rounds) {
  if (!(initial_epsilon > 0.0)) throw std::invalid_argument("tune_mh_epsilon: epsilon must be > 0");
  double eps = initial_epsilon;
  MHTarget pilot = target;
  for (int r = 0; r < rounds; ++r) {
    MHConfig cfg;
    cfg.iterations = pilot_iterations;
    cfg.burn_in = 0;
    cfg.epsilon = eps;
    const MHResult res = run_mh(pilot, cfg, seed + static_cast<std::uint64_t>(r));
    eps *= std::exp(2.0 * (res.acceptance_rate - target_acceptance));
    pilot.initial = res.mean;
  }
  return eps;
}

}  // namespace smcpar
