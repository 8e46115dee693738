#include "smcpar/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace smcpar {

namespace {

constexpr int kTagStraddle = Communicator::kUserTag + 2;
constexpr int kTagCarry = Communicator::kUserTag + 3;

// Fixed-point scale of the MVR cumulative sum. Integer prefix sums keep every
// rank's CDF boundaries bit-consistent, so sum(ncopies) == N holds exactly.
constexpr double kCdfScale = 4503599627370496.0;  // 2^52

__extension__ using Wide = __int128;

std::int64_t floor_div(Wide a, Wide b) {
  Wide q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<std::int64_t>(q);
}

void raise_degenerate_if(Communicator& comm, bool local_bad, const char* what) {
  if (comm.allreduce_sum(std::int64_t{local_bad ? 1 : 0}) != 0) throw DegenerateWeightsError(what);
}

Count local_mass(std::span<const Count> keys) { return std::accumulate(keys.begin(), keys.end(), Count{0}); }

}  // namespace

std::string_view to_string(RedistributeAlgo algo) noexcept {
  switch (algo) {
    case RedistributeAlgo::SR: return "SR";
    case RedistributeAlgo::CR: return "CR";
    case RedistributeAlgo::BR: return "BR";
    case RedistributeAlgo::NR: return "NR";
  }
  return "?";
}

std::optional<RedistributeAlgo> parse_redistribute_algo(std::string_view name) noexcept {
  for (auto a : {RedistributeAlgo::SR, RedistributeAlgo::CR, RedistributeAlgo::BR, RedistributeAlgo::NR}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

void ResampleConfig::validate() const {
  if (!is_power_of_two(N)) throw std::invalid_argument("ResampleConfig: N must be a power of two");
  const double t = effective_threshold();
  if (t < 1.0 || t > static_cast<double>(N)) throw std::invalid_argument("ResampleConfig: threshold outside [1, N]");
}

WeightShard normalise(Communicator& comm, std::span<const double> weights) {
  bool bad = false;
  double local = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) bad = true;
    local += w;
  }
  raise_degenerate_if(comm, bad, "normalise: negative or non-finite weight");
  const double total = comm.allreduce_sum(local);
  if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateWeightsError("normalise: weights sum to zero");
  WeightShard out;
  out.values_.resize(weights.size());
  std::transform(weights.begin(), weights.end(), out.values_.begin(), [total](double w) { return w / total; });
  out.normalised_ = true;
  return out;
}

double global_log_sum_exp(Communicator& comm, std::span<const double> log_weights) {
  bool bad = false;
  double local_max = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) bad = true;
    local_max = std::max(local_max, lw);
  }
  raise_degenerate_if(comm, bad, "log weights contain NaN or +inf");
  const double shift = comm.allreduce_max(local_max);
  if (!std::isfinite(shift)) throw DegenerateWeightsError("all weights are zero");
  double local = 0.0;
  for (double lw : log_weights) local += std::exp(lw - shift);
  return shift + std::log(comm.allreduce_sum(local));
}

WeightShard normalise_log(Communicator& comm, std::span<const double> log_weights, double* log_total_out) {
  const double log_total = global_log_sum_exp(comm, log_weights);
  if (log_total_out) *log_total_out = log_total;
  WeightShard out;
  out.values_.resize(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), out.values_.begin(),
                 [log_total](double lw) { return std::exp(lw - log_total); });
  out.normalised_ = true;
  return out;
}

double ess(Communicator& comm, const WeightShard& normalised) {
  if (!normalised.normalised()) throw ContractViolation("ess: weights are not normalised");
  double local = 0.0;
  for (double w : normalised.values()) local += w * w;
  return 1.0 / comm.allreduce_sum(local);
}

std::vector<Count> mvr_ncopies(Communicator& comm, const WeightShard& normalised, std::size_t N, double u) {
  if (!normalised.normalised()) throw ContractViolation("mvr_ncopies: weights are not normalised");
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("mvr_ncopies: offset outside [0, 1)");
  const auto w = normalised.values();

  std::vector<std::int64_t> q(w.size());
  std::int64_t local_q = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    q[i] = std::llround(w[i] * kCdfScale);
    local_q += q[i];
  }
  const std::int64_t before = comm.scan_sum(local_q) - local_q;
  const std::int64_t total = comm.allreduce_sum(local_q);
  if (total <= 0) throw DegenerateWeightsError("mvr_ncopies: weights quantise to zero");

  const auto offset = static_cast<std::int64_t>(std::floor(static_cast<long double>(u) * total));
  const auto n_big = static_cast<Wide>(N);
  std::vector<Count> ncopies(w.size());
  std::int64_t cdf = before;
  std::int64_t prev = floor_div(n_big * cdf - offset, total);
  for (std::size_t i = 0; i < w.size(); ++i) {
    cdf += q[i];
    const std::int64_t cur = floor_div(n_big * cdf - offset, total);
    ncopies[i] = cur - prev;
    prev = cur;
  }
  return ncopies;
}

std::vector<Count> mvr_ncopies(Communicator& comm, const WeightShard& normalised, std::size_t N, std::mt19937_64& rng) {
  double u = 0.0;
  if (comm.rank() == 0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  u = comm.broadcast(u);
  return mvr_ncopies(comm, normalised, N, u);
}

ParticleShard redistribute_sequential(std::span<const Count> ncopies, const ParticleShard& particles) {
  if (ncopies.size() != particles.rows()) throw std::invalid_argument("redistribute_sequential: length mismatch");
  const Count mass = local_mass(ncopies);
  if (mass != static_cast<Count>(particles.rows()) ||
      std::any_of(ncopies.begin(), ncopies.end(), [](Count c) { return c < 0; })) {
    throw MassInvariantError("redistribute_sequential: ncopies sum " + std::to_string(mass) + " != " +
                             std::to_string(particles.rows()));
  }
  const std::size_t dim = particles.dim();
  ParticleShard out(particles.rows(), dim);
  std::size_t i = 0;
  for (std::size_t j = 0; j < ncopies.size(); ++j) {
    for (Count k = 0; k < ncopies[j]; ++k) {
      std::copy_n(particles.row(j).begin(), dim, out.row(i).begin());
      ++i;
    }
  }
  return out;
}

ParticleShard redistribute_centralised(Communicator& comm, KeyedShard shard, std::size_t capacity) {
  shard.check();
  const std::size_t n = shard.size();
  const std::size_t dim = shard.dim();
  if (comm.size() == 1) return redistribute_sequential(shard.keys, shard.particles);

  const std::size_t need = n * static_cast<std::size_t>(comm.size()) * dim;
  const bool fits = comm.broadcast<std::int64_t>(capacity == 0 || need <= capacity ? 1 : 0) != 0;
  if (!fits) throw CapacityError("centralised redistribute needs " + std::to_string(need) + " scalars at rank 0");

  auto all_keys = comm.gather<Count>(shard.keys);
  auto all_rows = comm.gather<double, LedgerAllocator<double>>(shard.particles.values());
  TrackedVector<double> result;
  if (comm.rank() == 0) {
    ParticleShard gathered(dim, std::move(all_rows));
    result = std::move(redistribute_sequential(all_keys, gathered).storage());
  }
  return ParticleShard(dim, comm.scatter<double, LedgerAllocator<double>>(result, n * dim));
}

ParticleShard distribute(Communicator& comm, KeyedShard shard, DistributeTrace* trace) {
  shard.check();
  const std::size_t n = shard.size();
  const std::size_t dim = shard.dim();
  Communicator node = comm;
  for (;;) {
    const int P = node.size();
    const auto node_mass = static_cast<Count>(n) * P;
    if (P == 1) {
      if (trace) ++trace->nodes_checked;
      return redistribute_sequential(shard.keys, shard.particles);
    }

    const Count mine = local_mass(shard.keys);
    const Count before = node.scan_sum(mine) - mine;
    const Count half = node_mass / 2;

    // [pivot index, csum at pivot, mass]; only the rank holding the pivot
    // contributes the first two.
    std::int64_t agree[3] = {0, 0, mine};
    if (before < half && before + mine >= half) {
      Count csum = before;
      for (std::size_t i = 0; i < n; ++i) {
        csum += shard.keys[i];
        if (csum >= half) {
          agree[0] = static_cast<std::int64_t>(static_cast<std::size_t>(node.rank()) * n + i);
          agree[1] = csum;
          break;
        }
      }
    }
    node.allreduce_sum(std::span<std::int64_t>(agree));
    if (trace) ++trace->nodes_checked;
    if (agree[2] != node_mass) {
      throw MassInvariantError("distribute: node mass " + std::to_string(agree[2]) + " != " + std::to_string(node_mass));
    }
    const std::int64_t pivot = agree[0];
    const std::int64_t csum_pivot = agree[1];

    // Bring the pivot to the last slot of the left half. r can be negative
    // when positives precede zeros; that is a right shift.
    const std::int64_t r_signed = pivot - (half - 1);
    const auto r = static_cast<std::size_t>(((r_signed % node_mass) + node_mass) % node_mass);
    shard.keys = node.rotational_shift<Count>(shard.keys, r);
    shard.particles = ParticleShard(
        dim, node.rotational_shift<double, LedgerAllocator<double>>(shard.particles.values(), r, dim));

    // Straddle split: the pivot's excess copies move to the first slot of the
    // right half, after the right half rotates right by one. The slot that
    // wraps to the front is always a zero.
    const Count excess = csum_pivot - half;
    if (excess > 0) {
      if (trace) ++trace->straddles;
      const int left_last = P / 2 - 1;
      const int right_first = P / 2;
      const int me = node.rank();
      if (me == left_last) {
        shard.keys[n - 1] -= excess;
        node.send_parts(right_first,
                        {std::as_bytes(std::span<const Count>(&excess, 1)), std::as_bytes(shard.particles.row(n - 1))},
                        kTagStraddle);
      } else if (me >= right_first) {
        Count carry_key = shard.keys[n - 1];
        std::vector<double> carry_row(shard.particles.row(n - 1).begin(), shard.particles.row(n - 1).end());
        if (right_first < P - 1) {
          const int next = me == P - 1 ? right_first : me + 1;
          const int prev = me == right_first ? P - 1 : me - 1;
          node.send_parts(next,
                          {std::as_bytes(std::span<const Count>(&carry_key, 1)),
                           std::as_bytes(std::span<const double>(carry_row))},
                          kTagCarry);
          auto bytes = node.recv_bytes(prev, kTagCarry);
          if (bytes.size() != sizeof(Count) + dim * sizeof(double)) throw CommError("distribute: carry size mismatch");
          std::memcpy(&carry_key, bytes.data(), sizeof(Count));
          std::memcpy(carry_row.data(), bytes.data() + sizeof(Count), dim * sizeof(double));
        }
        for (std::size_t i = n - 1; i > 0; --i) {
          shard.keys[i] = shard.keys[i - 1];
          std::copy_n(shard.particles.row(i - 1).begin(), dim, shard.particles.row(i).begin());
        }
        shard.keys[0] = carry_key;
        std::copy(carry_row.begin(), carry_row.end(), shard.particles.row(0).begin());
        if (me == right_first) {
          if (shard.keys[0] != 0) throw MassInvariantError("distribute: straddle slot is occupied");
          auto bytes = node.recv_bytes(left_last, kTagStraddle);
          if (bytes.size() != sizeof(Count) + dim * sizeof(double)) throw CommError("distribute: straddle size mismatch");
          std::memcpy(&shard.keys[0], bytes.data(), sizeof(Count));
          std::memcpy(shard.particles.row(0).data(), bytes.data() + sizeof(Count), dim * sizeof(double));
        }
      }
    }
    if (trace && trace->record_keys) trace->level_keys.push_back(shard.keys);
    node = node.split_half();
  }
}

ParticleShard redistribute_bitonic(Communicator& comm, KeyedShard shard, LocalSort kind, DistributeTrace* trace) {
  if (comm.size() > 1) shard = bitonic_sort(comm, std::move(shard), Direction::ascending, kind);
  return distribute(comm, std::move(shard), trace);
}

ParticleShard redistribute_nearly(Communicator& comm, KeyedShard shard, DistributeTrace* trace) {
  if (comm.size() > 1) shard = parallel_nearly_sort(comm, std::move(shard));
  return distribute(comm, std::move(shard), trace);
}

ParticleShard redistribute(Communicator& comm, const ResampleConfig& cfg, KeyedShard shard, DistributeTrace* trace) {
  switch (cfg.algo) {
    case RedistributeAlgo::SR:
      if (comm.size() != 1) throw std::invalid_argument("sequential redistribute runs on a single rank");
      return redistribute_sequential(shard.keys, shard.particles);
    case RedistributeAlgo::CR: return redistribute_centralised(comm, std::move(shard), cfg.centralised_capacity);
    case RedistributeAlgo::BR: return redistribute_bitonic(comm, std::move(shard), cfg.local_sort, trace);
    case RedistributeAlgo::NR: return redistribute_nearly(comm, std::move(shard), trace);
  }
  throw std::invalid_argument("unknown redistribute algorithm");
}

WeightShard reset_weights(std::size_t n_local, std::size_t N) {
  if (N == 0) throw std::invalid_argument("reset_weights: N must be positive");
  WeightShard out;
  out.values_.assign(n_local, 1.0 / static_cast<double>(N));
  out.normalised_ = true;
  return out;
}

}  // namespace smcpar
