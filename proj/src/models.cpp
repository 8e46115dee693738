#include "smcpar/models.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace smcpar {

Rng make_rng(std::uint64_t seed, int rank, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rank), static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

namespace models {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

double std_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

// -- stochastic volatility ----------------------------------------------------

void EconParams::validate() const {
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("EconParams: |phi| must be < 1");
  if (!(sigma >= 0.0) || !(beta > 0.0)) throw std::invalid_argument("EconParams: sigma >= 0 and beta > 0 required");
}

double econ_step(double x, const EconParams& p, Rng& rng) { return p.phi * x + p.sigma * std_normal(rng); }

double econ_log_likelihood(double x, double y, const EconParams& p) {
  return normal_log_pdf(y, 0.0, p.beta * p.beta * std::exp(x));
}

Trajectory econ_simulate(const EconParams& p, std::size_t T, std::uint64_t seed) {
  p.validate();
  Rng rng = make_rng(seed, 0, 0x65636f6e);
  Trajectory out;
  double x = std::sqrt(p.stationary_variance()) * std_normal(rng);
  for (std::size_t t = 0; t < T; ++t) {
    x = econ_step(x, p, rng);
    const double y = p.beta * std::exp(x / 2.0) * std_normal(rng);
    out.states.push_back({x});
    out.measurements.push_back({y});
  }
  return out;
}

void EconModel::sample_prior(std::span<double> x, Rng& rng) const {
  x[0] = std::sqrt(p_.stationary_variance()) * std_normal(rng);
}

void EconModel::propose(std::span<const double> prev, std::span<const double>, std::span<double> x, Rng& rng) const {
  x[0] = econ_step(prev[0], p_, rng);
}

double EconModel::log_weight_increment(std::span<const double>, std::span<const double> x,
                                       std::span<const double> y) const {
  return econ_log_likelihood(x[0], y[0], p_);
}

// -- bearing-only tracking ----------------------------------------------------

Eigen::Matrix4d BearingParams::transition() const {
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  A(0, 1) = delta;
  A(2, 3) = delta;
  return A;
}

Eigen::Matrix4d BearingParams::process_covariance() const {
  const double d = delta;
  Eigen::Matrix2d block;
  block << 5.0 * d * d * d / 3.0, 5.0 * d * d / 2.0, 5.0 * d * d / 2.0, 5.0 * d;
  Eigen::Matrix4d S = Eigen::Matrix4d::Zero();
  S.block<2, 2>(0, 0) = block;
  S.block<2, 2>(2, 2) = block;
  return S;
}

std::vector<Sensor> sensors_on_circle(std::size_t D, double cx, double cy, double radius) {
  if (D == 0) throw std::invalid_argument("sensors_on_circle: D must be >= 1");
  std::vector<Sensor> out(D);
  for (std::size_t k = 0; k < D; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(D);
    out[k] = Sensor{cx + radius * std::cos(angle), cy + radius * std::sin(angle)};
  }
  return out;
}

BearingState bearing_transition(const BearingState& x, const BearingParams& p) {
  return {x[0] + p.delta * x[1], x[1], x[2] + p.delta * x[3], x[3]};
}

namespace {

Eigen::Matrix4d process_cholesky(const BearingParams& p) {
  Eigen::LLT<Eigen::Matrix4d> llt(p.process_covariance());
  if (llt.info() != Eigen::Success) throw std::invalid_argument("BearingParams: covariance is not positive definite");
  return llt.matrixL();
}

void add_process_noise(std::span<double> x, const Eigen::Matrix4d& L, Rng& rng) {
  Eigen::Vector4d z;
  for (int i = 0; i < 4; ++i) z[i] = std_normal(rng);
  const Eigen::Vector4d v = L * z;
  for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] += v[i];
}

}  // namespace

BearingState bearing_step(const BearingState& x, const BearingParams& p, Rng& rng) {
  BearingState out = bearing_transition(x, p);
  add_process_noise(out, process_cholesky(p), rng);
  return out;
}

std::vector<double> bearing_angles(const BearingState& x, std::span<const Sensor> sensors) {
  std::vector<double> out(sensors.size());
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    const double dx = x[0] - sensors[k].x;
    const double dy = x[2] - sensors[k].y;
    if (dx == 0.0 && dy == 0.0) throw AngleUndefinedError("bearing: target coincides with a sensor");
    out[k] = std::atan2(dy, dx);
  }
  return out;
}

std::vector<double> bearing_measure(const BearingState& x, const BearingParams& p, Rng& rng) {
  auto y = bearing_angles(x, p.sensors);
  const double sd = std::sqrt(p.measurement_variance);
  for (double& v : y) v += sd * std_normal(rng);
  return y;
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

Trajectory bearing_simulate(const BearingParams& p, const BearingState& x0, std::size_t T, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0, 0x62656172);
  const Eigen::Matrix4d L = process_cholesky(p);
  Trajectory out;
  BearingState x = x0;
  for (std::size_t t = 0; t < T; ++t) {
    x = bearing_transition(x, p);
    add_process_noise(x, L, rng);
    out.states.emplace_back(x.begin(), x.end());
    out.measurements.push_back(bearing_measure(x, p, rng));
  }
  return out;
}

BearingModel::BearingModel(BearingParams p, BearingState x0) : p_(std::move(p)), x0_(x0), chol_(process_cholesky(p_)) {
  if (p_.sensors.empty()) throw std::invalid_argument("BearingModel: at least one sensor required");
}

void BearingModel::sample_prior(std::span<double> x, Rng& rng) const {
  for (std::size_t i = 0; i < 4; ++i) x[i] = x0_[i] + std_normal(rng);
}

void BearingModel::propose(std::span<const double> prev, std::span<const double>, std::span<double> x,
                           Rng& rng) const {
  const BearingState s = bearing_transition({prev[0], prev[1], prev[2], prev[3]}, p_);
  std::copy(s.begin(), s.end(), x.begin());
  add_process_noise(x, chol_, rng);
}

double BearingModel::log_weight_increment(std::span<const double>, std::span<const double> x,
                                          std::span<const double> y) const {
  const double var = p_.measurement_variance;
  const double norm = -0.5 * (kLog2Pi + std::log(var));
  double acc = 0.0;
  for (std::size_t k = 0; k < p_.sensors.size(); ++k) {
    const double dx = x[0] - p_.sensors[k].x;
    const double dy = x[2] - p_.sensors[k].y;
    const double r = wrap_angle(y[k] - std::atan2(dy, dx));
    acc += norm - 0.5 * r * r / var;
  }
  return acc;
}

// -- Student's t --------------------------------------------------------------

void StudentTParams::validate() const {
  if (!(nu > 0.0)) throw std::invalid_argument("StudentTParams: nu must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("StudentTParams: epsilon must be > 0");
}

double student_t_log_pdf(double x, double nu, double mu) {
  if (!(nu > 0.0)) throw std::invalid_argument("student_t_log_pdf: nu must be > 0");
  const double d = x - mu;
  return std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi) -
         (nu + 1.0) / 2.0 * std::log1p(d * d / nu);
}

void random_walk_propose(std::span<const double> x, double eps, std::span<double> out, Rng& rng) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + eps * std_normal(rng);
}

double random_walk_log_density(std::span<const double> to, std::span<const double> from, double eps) {
  double acc = 0.0;
  for (std::size_t i = 0; i < to.size(); ++i) acc += normal_log_pdf(to[i], from[i], eps * eps);
  return acc;
}

StudentTSampler::StudentTSampler(StudentTParams p, double initial_mean, double initial_scale)
    : p_(p), initial_mean_(initial_mean), initial_scale_(initial_scale) {
  p_.validate();
  log_norm_ = student_t_log_pdf(p_.mu, p_.nu, p_.mu);
  if (!(initial_scale_ > 0.0)) throw std::invalid_argument("StudentTSampler: initial scale must be > 0");
}

void StudentTSampler::sample_initial(std::span<double> x, Rng& rng) const {
  x[0] = initial_mean_ + initial_scale_ * std_normal(rng);
}

double StudentTSampler::log_initial_density(std::span<const double> x) const {
  return normal_log_pdf(x[0], initial_mean_, initial_scale_ * initial_scale_);
}

double StudentTSampler::log_target(std::span<const double> x) const {
  const double d = x[0] - p_.mu;
  return log_norm_ - (p_.nu + 1.0) / 2.0 * std::log1p(d * d / p_.nu);
}

void StudentTSampler::propose(std::span<const double> prev, std::span<double> x, Rng& rng) const {
  random_walk_propose(prev, p_.epsilon, x, rng);
}

double StudentTSampler::log_forward(std::span<const double> x, std::span<const double> prev) const {
  return random_walk_log_density(x, prev, p_.epsilon);
}

double StudentTSampler::log_backward(std::span<const double> prev, std::span<const double> x) const {
  return log_forward(x, prev);
}

// -- linear-Gaussian ----------------------------------------------------------

Trajectory linear_gaussian_simulate(const LinearGaussianParams& p, std::size_t T, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0, 0x6c696e67);
  Trajectory out;
  double x = p.prior_mean + std::sqrt(p.prior_variance) * std_normal(rng);
  for (std::size_t t = 0; t < T; ++t) {
    x = p.a * x + std::sqrt(p.process_variance) * std_normal(rng);
    out.states.push_back({x});
    out.measurements.push_back({x + std::sqrt(p.measurement_variance) * std_normal(rng)});
  }
  return out;
}

std::vector<KalmanStep> kalman_oracle(const LinearGaussianParams& p, std::span<const std::vector<double>> measurements) {
  std::vector<KalmanStep> out;
  out.reserve(measurements.size());
  double m = p.prior_mean;
  double v = p.prior_variance;
  for (const auto& y : measurements) {
    m = p.a * m;
    v = p.a * p.a * v + p.process_variance;
    const double s = v + p.measurement_variance;
    const double gain = s > 0.0 ? v / s : 1.0;
    m += gain * (y[0] - m);
    v *= 1.0 - gain;
    out.push_back({m, v});
  }
  return out;
}

void LinearGaussianModel::sample_prior(std::span<double> x, Rng& rng) const {
  x[0] = p_.prior_mean + std::sqrt(p_.prior_variance) * std_normal(rng);
}

void LinearGaussianModel::propose(std::span<const double> prev, std::span<const double>, std::span<double> x,
                                  Rng& rng) const {
  x[0] = p_.a * prev[0] + std::sqrt(p_.process_variance) * std_normal(rng);
}

double LinearGaussianModel::log_weight_increment(std::span<const double>, std::span<const double> x,
                                                 std::span<const double> y) const {
  return normal_log_pdf(y[0], x[0], p_.measurement_variance);
}

void IdentityModel::sample_prior(std::span<double> x, Rng& rng) const {
  for (double& v : x) v = std_normal(rng);
}

void IdentityModel::propose(std::span<const double> prev, std::span<const double>, std::span<double> x, Rng&) const {
  std::copy(prev.begin(), prev.end(), x.begin());
}

}  // namespace models
}  // namespace smcpar
