#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcpar/ledger.hpp"

namespace smcpar {

/// Duplication count of one particle.
using Count = std::int64_t;

/// Rank-local block of particles, one row of `dim` reals per particle.
class ParticleShard {
 public:
  ParticleShard() = default;
  ParticleShard(std::size_t rows, std::size_t dim) : dim_(dim), values_(rows * dim) {}
  ParticleShard(std::size_t dim, TrackedVector<double> values) : dim_(dim), values_(std::move(values)) {
    if (dim_ == 0 || values_.size() % dim_ != 0) throw std::invalid_argument("ParticleShard: ragged rows");
  }

  std::size_t rows() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<double> row(std::size_t i) noexcept { return {values_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {values_.data() + i * dim_, dim_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  TrackedVector<double>& storage() noexcept { return values_; }

  bool operator==(const ParticleShard&) const = default;

 private:
  std::size_t dim_ = 0;
  TrackedVector<double> values_;
};

/// Duplication counts paired index-for-index with a particle shard. Kernels
/// move each (key, row) pair atomically.
struct KeyedShard {
  std::vector<Count> keys;
  ParticleShard particles;

  std::size_t size() const noexcept { return keys.size(); }
  std::size_t dim() const noexcept { return particles.dim(); }

  void check() const {
    if (keys.size() != particles.rows()) throw std::invalid_argument("KeyedShard: keys and rows differ in length");
  }
};

}  // namespace smcpar
