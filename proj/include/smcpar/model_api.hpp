#pragma once

// Plug-in interfaces for particle filter and SMC sampler models. Densities are
// returned as logs. Implementations must be safe to call concurrently from
// several ranks, each with its own Rng.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace smcpar {

using Rng = std::mt19937_64;

/// Independent stream for (seed, rank, purpose).
Rng make_rng(std::uint64_t seed, int rank, std::uint64_t purpose = 0);

class PFModel {
 public:
  virtual ~PFModel() = default;

  virtual std::size_t state_dim() const = 0;

  /// x_0 ~ p(x_0).
  virtual void sample_prior(std::span<double> x, Rng& rng) const = 0;

  /// x_t ~ q(x_t | x_{t-1}, y_t).
  virtual void propose(std::span<const double> prev, std::span<const double> y, std::span<double> x,
                       Rng& rng) const = 0;

  /// log[p(x_t | x_{t-1}) p(y_t | x_t) / q(x_t | x_{t-1}, y_t)].
  virtual double log_weight_increment(std::span<const double> prev, std::span<const double> x,
                                      std::span<const double> y) const = 0;
};

class SMCSModel {
 public:
  virtual ~SMCSModel() = default;

  virtual std::size_t state_dim() const = 0;

  virtual void sample_initial(std::span<double> x, Rng& rng) const = 0;
  virtual double log_initial_density(std::span<const double> x) const = 0;

  /// Static target, log pi(x), up to a constant.
  virtual double log_target(std::span<const double> x) const = 0;

  /// x_t ~ q(x_t | x_{t-1}).
  virtual void propose(std::span<const double> prev, std::span<double> x, Rng& rng) const = 0;
  virtual double log_forward(std::span<const double> x, std::span<const double> prev) const = 0;

  /// log L(x_{t-1} | x_t).
  virtual double log_backward(std::span<const double> prev, std::span<const double> x) const = 0;
};

}  // namespace smcpar
