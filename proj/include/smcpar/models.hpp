#pragma once

// Experiment models: stochastic volatility, bearing-only tracking with D
// sensors, a static Student's t target, and a scalar linear-Gaussian model
// with its Kalman filter oracle.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "smcpar/model_api.hpp"

namespace smcpar::models {

// -- stochastic volatility ----------------------------------------------------

struct EconParams {
  double phi = 0.9731;
  double sigma = 0.1726;
  double beta = 0.6338;

  double stationary_variance() const { return sigma * sigma / (1.0 - phi * phi); }
  void validate() const;
};

/// phi * x + sigma * v, v ~ N(0, 1).
double econ_step(double x, const EconParams& p, Rng& rng);

/// log N(y; 0, beta^2 exp(x)).
double econ_log_likelihood(double x, double y, const EconParams& p);

struct Trajectory {
  std::vector<std::vector<double>> states;        // T rows of M
  std::vector<std::vector<double>> measurements;  // T rows of D
};

/// T steps from x_0 drawn from the stationary distribution.
Trajectory econ_simulate(const EconParams& p, std::size_t T, std::uint64_t seed);

class EconModel final : public PFModel {
 public:
  explicit EconModel(EconParams p = {}) : p_(p) { p_.validate(); }

  std::size_t state_dim() const override { return 1; }
  void sample_prior(std::span<double> x, Rng& rng) const override;
  void propose(std::span<const double> prev, std::span<const double> y, std::span<double> x, Rng& rng) const override;
  double log_weight_increment(std::span<const double> prev, std::span<const double> x,
                              std::span<const double> y) const override;

 private:
  EconParams p_;
};

// -- bearing-only tracking ----------------------------------------------------

using BearingState = std::array<double, 4>;  // [x, vx, y, vy]

class AngleUndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Sensor {
  double x = 0.0;
  double y = 0.0;
};

struct BearingParams {
  double delta = 1.0;
  double measurement_variance = 1e-4;
  std::vector<Sensor> sensors{Sensor{}};

  Eigen::Matrix4d transition() const;
  Eigen::Matrix4d process_covariance() const;
};

/// D sensors evenly spaced on a circle of `radius` around (cx, cy).
std::vector<Sensor> sensors_on_circle(std::size_t D, double cx, double cy, double radius = 100.0);

/// Noise-free part of the state equation, A * x.
BearingState bearing_transition(const BearingState& x, const BearingParams& p);

/// A * x + v, v ~ N(0, Sigma).
BearingState bearing_step(const BearingState& x, const BearingParams& p, Rng& rng);

/// Noise-free bearing to every sensor: atan2(y - y_k, x - x_k).
std::vector<double> bearing_angles(const BearingState& x, std::span<const Sensor> sensors);

/// bearing_angles plus N(0, measurement_variance) noise per sensor.
std::vector<double> bearing_measure(const BearingState& x, const BearingParams& p, Rng& rng);

/// Angle difference wrapped into (-pi, pi].
double wrap_angle(double a);

Trajectory bearing_simulate(const BearingParams& p, const BearingState& x0, std::size_t T, std::uint64_t seed);

/// Bootstrap filter for the bearing model. The prior is N(x0, I).
class BearingModel final : public PFModel {
 public:
  BearingModel(BearingParams p, BearingState x0);

  std::size_t state_dim() const override { return 4; }
  void sample_prior(std::span<double> x, Rng& rng) const override;
  void propose(std::span<const double> prev, std::span<const double> y, std::span<double> x, Rng& rng) const override;
  double log_weight_increment(std::span<const double> prev, std::span<const double> x,
                              std::span<const double> y) const override;

  const BearingParams& params() const { return p_; }

 private:
  BearingParams p_;
  BearingState x0_;
  Eigen::Matrix4d chol_;
};

// -- Student's t target ---------------------------------------------------------

struct StudentTParams {
  double nu = 5.0;
  double mu = 3.0;
  double epsilon = 0.5;  // random-walk scale

  void validate() const;
};

double student_t_log_pdf(double x, double nu, double mu);

/// x + eps * z, z ~ N(0, I), written to `out`.
void random_walk_propose(std::span<const double> x, double eps, std::span<double> out, Rng& rng);

/// log N(to; from, eps^2 I). Symmetric in (to, from).
double random_walk_log_density(std::span<const double> to, std::span<const double> from, double eps);

/// SMC sampler on the 1-D Student's t target with a random-walk forward
/// kernel and L(x_{t-1} | x_t) = q(x_t | x_{t-1}). The initial proposal is
/// N(initial_mean, initial_scale^2).
class StudentTSampler final : public SMCSModel {
 public:
  explicit StudentTSampler(StudentTParams p = {}, double initial_mean = 0.0, double initial_scale = 5.0);

  std::size_t state_dim() const override { return 1; }
  void sample_initial(std::span<double> x, Rng& rng) const override;
  double log_initial_density(std::span<const double> x) const override;
  double log_target(std::span<const double> x) const override;
  void propose(std::span<const double> prev, std::span<double> x, Rng& rng) const override;
  double log_forward(std::span<const double> x, std::span<const double> prev) const override;
  double log_backward(std::span<const double> prev, std::span<const double> x) const override;

  const StudentTParams& params() const { return p_; }
  double initial_mean() const { return initial_mean_; }
  double initial_scale() const { return initial_scale_; }

 private:
  StudentTParams p_;
  double initial_mean_;
  double initial_scale_;
  double log_norm_;  // log of the t density's normalising constant
};

// -- linear-Gaussian test model ---------------------------------------------------

/// x_t = a x_{t-1} + v, v ~ N(0, q);  y_t = x_t + w, w ~ N(0, r);  x_0 ~ N(m0, v0).
struct LinearGaussianParams {
  double a = 0.9;
  double process_variance = 1.0;
  double measurement_variance = 1.0;
  double prior_mean = 0.0;
  double prior_variance = 1.0;
};

Trajectory linear_gaussian_simulate(const LinearGaussianParams& p, std::size_t T, std::uint64_t seed);

struct KalmanStep {
  double mean;
  double variance;
};

/// Exact filtering moments of x_t given y_1..y_t.
std::vector<KalmanStep> kalman_oracle(const LinearGaussianParams& p, std::span<const std::vector<double>> measurements);

class LinearGaussianModel final : public PFModel {
 public:
  explicit LinearGaussianModel(LinearGaussianParams p = {}) : p_(p) {}

  std::size_t state_dim() const override { return 1; }
  void sample_prior(std::span<double> x, Rng& rng) const override;
  void propose(std::span<const double> prev, std::span<const double> y, std::span<double> x, Rng& rng) const override;
  double log_weight_increment(std::span<const double> prev, std::span<const double> x,
                              std::span<const double> y) const override;

 private:
  LinearGaussianParams p_;
};

/// Flat likelihood with an identity transition; weights never move.
class IdentityModel final : public PFModel {
 public:
  explicit IdentityModel(std::size_t dim = 1) : dim_(dim) {}

  std::size_t state_dim() const override { return dim_; }
  void sample_prior(std::span<double> x, Rng& rng) const override;
  void propose(std::span<const double> prev, std::span<const double> y, std::span<double> x, Rng& rng) const override;
  double log_weight_increment(std::span<const double>, std::span<const double>, std::span<const double>) const override {
    return 0.0;
  }

 private:
  std::size_t dim_;
};

}  // namespace smcpar::models
