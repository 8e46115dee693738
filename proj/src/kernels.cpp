#include "smcpar/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

namespace smcpar {

namespace {

constexpr int kTagKernel = Communicator::kUserTag + 1;

// Rows of `in` reordered so that row i of the result is row perm[i] of `in`.
KeyedShard permute(const KeyedShard& in, std::span<const std::size_t> perm) {
  KeyedShard out{std::vector<Count>(in.size()), ParticleShard(in.size(), in.dim())};
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.keys[i] = in.keys[perm[i]];
    std::copy_n(in.particles.row(perm[i]).begin(), in.dim(), out.particles.row(i).begin());
  }
  return out;
}

void merge_sort(std::vector<std::size_t>& idx, std::span<const Count> keys) {
  std::vector<std::size_t> buf(idx.size());
  for (std::size_t width = 1; width < idx.size(); width *= 2) {
    for (std::size_t lo = 0; lo < idx.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, idx.size());
      const std::size_t hi = std::min(lo + 2 * width, idx.size());
      std::size_t a = lo, b = mid, o = lo;
      while (a < mid && b < hi) buf[o++] = keys[idx[b]] < keys[idx[a]] ? idx[b++] : idx[a++];
      while (a < mid) buf[o++] = idx[a++];
      while (b < hi) buf[o++] = idx[b++];
    }
    idx.swap(buf);
  }
}

// Sorts idx[lo, lo+len) by keys with a bitonic merge; the range must be bitonic.
void bitonic_merge(std::vector<std::size_t>& idx, std::span<const Count> keys, std::size_t lo, std::size_t len,
                   bool ascending) {
  for (std::size_t half = len / 2; half >= 1; half /= 2) {
    for (std::size_t i = lo; i < lo + len; ++i) {
      if ((i - lo) & half) continue;
      const bool out_of_order = keys[idx[i]] > keys[idx[i + half]];
      if (out_of_order == ascending) std::swap(idx[i], idx[i + half]);
    }
  }
}

void bitonic_network(std::vector<std::size_t>& idx, std::span<const Count> keys) {
  const std::size_t n = idx.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("local bitonic sort needs a power-of-two block");
  for (std::size_t size = 2; size <= n; size *= 2) {
    for (std::size_t lo = 0; lo < n; lo += size) bitonic_merge(idx, keys, lo, size, (lo / size) % 2 == 0);
  }
}

void send_shard(Communicator& comm, int dest, const KeyedShard& shard) {
  comm.send_parts(dest, {std::as_bytes(std::span<const Count>(shard.keys)), std::as_bytes(shard.particles.values())},
                  kTagKernel);
}

KeyedShard recv_shard(Communicator& comm, int source, std::size_t n, std::size_t dim) {
  auto bytes = comm.recv_bytes(source, kTagKernel);
  const std::size_t key_bytes = n * sizeof(Count);
  if (bytes.size() != key_bytes + n * dim * sizeof(double)) throw CommError("kernel exchange: shard size mismatch");
  KeyedShard out{std::vector<Count>(n), ParticleShard(n, dim)};
  if (n == 0) return out;
  std::memcpy(out.keys.data(), bytes.data(), key_bytes);
  std::memcpy(out.particles.values().data(), bytes.data() + key_bytes, bytes.size() - key_bytes);
  return out;
}

void copy_pair(const KeyedShard& from, std::size_t i, KeyedShard& to, std::size_t j) {
  to.keys[j] = from.keys[i];
  std::copy_n(from.particles.row(i).begin(), from.dim(), to.particles.row(j).begin());
}

// Keeps the n smallest (keep_low) or n largest pairs of lower ++ upper, both
// ascending. Both partners evaluate the same ordering, so they keep
// complementary halves.
KeyedShard compare_split(const KeyedShard& lower, const KeyedShard& upper, bool keep_low, LocalSort kind) {
  const std::size_t n = lower.size();
  KeyedShard out{std::vector<Count>(n), ParticleShard(n, lower.dim())};
  if (kind == LocalSort::merge) {
    if (keep_low) {
      std::size_t a = 0, b = 0;
      for (std::size_t o = 0; o < n; ++o) {
        if (b < n && (a >= n || upper.keys[b] < lower.keys[a])) {
          copy_pair(upper, b++, out, o);
        } else {
          copy_pair(lower, a++, out, o);
        }
      }
    } else {
      std::size_t a = n, b = n;
      for (std::size_t o = n; o-- > 0;) {
        if (a > 0 && (b == 0 || lower.keys[a - 1] > upper.keys[b - 1])) {
          copy_pair(lower, --a, out, o);
        } else {
          copy_pair(upper, --b, out, o);
        }
      }
    }
    return out;
  }

  // Half-cleaner of the bitonic sequence lower ++ reverse(upper), then a
  // bitonic merge of the kept half.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;
    const bool upper_smaller = upper.keys[j] < lower.keys[i];
    if (upper_smaller == keep_low) {
      copy_pair(upper, j, out, i);
    } else {
      copy_pair(lower, i, out, i);
    }
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  bitonic_merge(idx, out.keys, 0, n, true);
  return permute(out, idx);
}

}  // namespace

bool is_nearly_sorted_ascending(std::span<const Count> keys) noexcept {
  bool seen_positive = false;
  for (Count k : keys) {
    if (k > 0) {
      seen_positive = true;
    } else if (seen_positive) {
      return false;
    }
  }
  return true;
}

KeyedShard local_sort(KeyedShard shard, Direction direction, LocalSort kind) {
  shard.check();
  std::vector<std::size_t> idx(shard.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (kind == LocalSort::merge) {
    merge_sort(idx, shard.keys);
  } else {
    bitonic_network(idx, shard.keys);
  }
  if (direction == Direction::descending) std::reverse(idx.begin(), idx.end());
  return permute(shard, idx);
}

KeyedShard bitonic_sort(Communicator& comm, KeyedShard shard, Direction direction, LocalSort kind) {
  shard.check();
  shard = local_sort(std::move(shard), Direction::ascending, kind);
  const int stages = log2_exact(static_cast<std::uint64_t>(comm.size()));
  const int me = comm.rank();
  for (int k = 1; k <= stages; ++k) {
    for (int j = k - 1; j >= 0; --j) {
      const int partner = me ^ (1 << j);
      bool block_ascending = ((me >> k) & 1) == 0;
      if (direction == Direction::descending) block_ascending = !block_ascending;
      const bool lower = me < partner;
      send_shard(comm, partner, shard);
      KeyedShard theirs = recv_shard(comm, partner, shard.size(), shard.dim());
      shard = lower ? compare_split(shard, theirs, lower == block_ascending, kind)
                    : compare_split(theirs, shard, lower == block_ascending, kind);
    }
  }
  if (direction == Direction::descending) {
    std::vector<std::size_t> idx(shard.size());
    std::iota(idx.rbegin(), idx.rend(), std::size_t{0});
    shard = permute(shard, idx);
  }
  return shard;
}

KeyedShard sequential_nearly_sort(const KeyedShard& shard, KernelStats* stats) {
  shard.check();
  const std::size_t n = shard.size();
  KeyedShard out{std::vector<Count>(n), ParticleShard(n, shard.dim())};
  std::size_t l = 0;
  std::size_t r = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (shard.keys[i] > 0) {
      copy_pair(shard, i, out, --r);
    } else {
      copy_pair(shard, i, out, l++);
    }
  }
  if (stats) stats->writes += n;
  return out;
}

KeyedShard nearly_merge(Communicator& comm, const KeyedShard& shard, int partner, MergeRole role, KernelStats* stats) {
  shard.check();
  const std::size_t n = shard.size();
  send_shard(comm, partner, shard);
  const KeyedShard theirs = recv_shard(comm, partner, n, shard.dim());
  const bool lower = comm.rank() < partner;
  const KeyedShard& first = lower ? shard : theirs;
  const KeyedShard& second = lower ? theirs : shard;
  auto key_at = [&](std::size_t i) { return i < n ? first.keys[i] : second.keys[i - n]; };
  auto emit = [&](std::size_t i, KeyedShard& out, std::size_t o) {
    if (i < n) {
      copy_pair(first, i, out, o);
    } else {
      copy_pair(second, i - n, out, o);
    }
  };

  std::size_t zeros = 0;
  for (std::size_t i = 0; i < 2 * n; ++i) zeros += key_at(i) == 0 ? 1 : 0;
  // The zeros_first rank takes this many zeros and then this many positives.
  const std::size_t zeros_taken = std::min(n, zeros);
  const std::size_t positives_taken = n - zeros_taken;

  KeyedShard out{std::vector<Count>(n), ParticleShard(n, shard.dim())};
  std::size_t o = 0;
  std::size_t z_seen = 0;
  std::size_t p_seen = 0;
  if (role == MergeRole::zeros_first) {
    for (std::size_t i = 0; i < 2 * n && o < zeros_taken; ++i) {
      if (key_at(i) == 0) emit(i, out, o++);
    }
    for (std::size_t i = 0; i < 2 * n && o < n; ++i) {
      if (key_at(i) > 0) emit(i, out, o++);
    }
  } else {
    for (std::size_t i = 0; i < 2 * n; ++i) {
      if (key_at(i) > 0 && p_seen++ >= positives_taken) emit(i, out, o++);
    }
    for (std::size_t i = 0; i < 2 * n; ++i) {
      if (key_at(i) == 0 && z_seen++ >= zeros_taken) emit(i, out, o++);
    }
  }
  if (o != n) throw std::logic_error("nearly_merge: output size mismatch");
  if (stats) stats->writes += n;
  return out;
}

KeyedShard parallel_nearly_sort(Communicator& comm, KeyedShard shard, KernelStats* stats) {
  shard = sequential_nearly_sort(shard, stats);
  const int stages = log2_exact(static_cast<std::uint64_t>(comm.size()));
  const int me = comm.rank();
  for (int k = 1; k <= stages; ++k) {
    for (int j = k - 1; j >= 0; --j) {
      const int partner = me ^ (1 << j);
      const bool block_ascending = ((me >> k) & 1) == 0;
      const bool lower = me < partner;
      const MergeRole role = lower == block_ascending ? MergeRole::zeros_first : MergeRole::positives_first;
      shard = nearly_merge(comm, shard, partner, role, stats);
      // The last comparator leaves the upper rank positives-first; a boundary
      // block there would break the global predicate.
      if (k == stages && j == 0 && role == MergeRole::positives_first) shard = sequential_nearly_sort(shard, stats);
    }
  }
  return shard;
}

}  // namespace smcpar
