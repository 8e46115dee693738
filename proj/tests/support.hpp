#pragma once

// Test-side oracles and fixtures. Nothing here calls the library routine it
// is used to check.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "smcpar/comm.hpp"
#include "smcpar/shard.hpp"

namespace testing {

using smcpar::Count;

/// Global (keys, rows) instance with sum(keys) == N.
struct Instance {
  std::vector<Count> keys;
  std::vector<double> rows;  // N * M
  std::size_t M = 1;

  std::size_t N() const { return keys.size(); }
};

/// Counts drawn by throwing N balls into N bins with a skewed bin choice, so
/// zeros, ones and large counts all appear.
inline Instance random_instance(std::size_t N, std::size_t M, std::mt19937_64& rng) {
  Instance inst;
  inst.M = M;
  inst.keys.assign(N, 0);
  std::uniform_int_distribution<int> shape(0, 3);
  const int s = shape(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t b = 0; b < N; ++b) {
    double u = unit(rng);
    if (s == 1) u = u * u;          // mass piles onto the front
    if (s == 2) u = 1.0 - u * u * u;  // and onto the back
    std::size_t i = std::min(N - 1, static_cast<std::size_t>(u * static_cast<double>(N)));
    if (s == 3 && unit(rng) < 0.5) i = N / 3;  // one heavy particle
    ++inst.keys[i];
  }
  inst.rows.resize(N * M);
  // Distinct payloads so multisets identify particles.
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < M; ++k) inst.rows[i * M + k] = static_cast<double>(i) + 0.001 * static_cast<double>(k);
  }
  return inst;
}

/// Plain double loop over the counts.
inline std::vector<double> expand_oracle(const Instance& inst) {
  std::vector<double> out;
  for (std::size_t j = 0; j < inst.N(); ++j) {
    for (Count c = 0; c < inst.keys[j]; ++c) {
      out.insert(out.end(), inst.rows.begin() + static_cast<std::ptrdiff_t>(j * inst.M),
                 inst.rows.begin() + static_cast<std::ptrdiff_t>((j + 1) * inst.M));
    }
  }
  return out;
}

inline smcpar::KeyedShard slice(const Instance& inst, int P, int rank) {
  const std::size_t n = inst.N() / static_cast<std::size_t>(P);
  const std::size_t lo = n * static_cast<std::size_t>(rank);
  smcpar::KeyedShard s;
  s.keys.assign(inst.keys.begin() + static_cast<std::ptrdiff_t>(lo), inst.keys.begin() + static_cast<std::ptrdiff_t>(lo + n));
  s.particles = smcpar::ParticleShard(
      inst.M, smcpar::TrackedVector<double>(inst.rows.begin() + static_cast<std::ptrdiff_t>(lo * inst.M),
                                            inst.rows.begin() + static_cast<std::ptrdiff_t>((lo + n) * inst.M)));
  return s;
}

/// Rows of a flat row-major array as a sorted list, for multiset comparison.
inline std::vector<std::vector<double>> row_multiset(const std::vector<double>& flat, std::size_t M) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i + M <= flat.size(); i += M) rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i), flat.begin() + static_cast<std::ptrdiff_t>(i + M));
  std::sort(rows.begin(), rows.end());
  return rows;
}

template <class Shards>
std::vector<double> concat_rows(const Shards& shards) {
  std::vector<double> out;
  for (const auto& s : shards) out.insert(out.end(), s.values().begin(), s.values().end());
  return out;
}

inline bool nearly_sorted(const std::vector<Count>& keys) {
  bool seen_positive = false;
  for (Count k : keys) {
    if (k > 0) seen_positive = true;
    else if (seen_positive) return false;
  }
  return true;
}

inline std::map<std::pair<Count, std::vector<double>>, int> pair_multiset(const std::vector<Count>& keys,
                                                                          const std::vector<double>& rows,
                                                                          std::size_t M) {
  std::map<std::pair<Count, std::vector<double>>, int> out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    ++out[{keys[i], std::vector<double>(rows.begin() + static_cast<std::ptrdiff_t>(i * M),
                                        rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * M))}];
  }
  return out;
}

}  // namespace testing
