#pragma once

// Rank-addressed SPMD communicator.
//
// spawn_group() launches P workers (threads) running the same entry point,
// each with its own Communicator. Workers exchange owned, copied payloads only.
// Collectives follow MPI semantics: every rank of a (sub)group must issue the
// same sequence of collective calls. Sends are buffered and never block, so
// any matched schedule terminates.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace smcpar {

/// Precondition violations, unmatched calls, timeouts and collective mismatches.
class CommError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by spawn_group when a worker fails; carries the failing rank.
class GroupError : public std::runtime_error {
 public:
  GroupError(int rank, const std::string& what)
      : std::runtime_error("rank " + std::to_string(rank) + ": " + what), rank_(rank) {}
  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

constexpr bool is_power_of_two(std::uint64_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

constexpr int log2_exact(std::uint64_t x) noexcept {
  int k = 0;
  while (x > 1) {
    x >>= 1;
    ++k;
  }
  return k;
}

struct GroupOptions {
  // Bound on any single blocking receive. Overridden by SMCPAR_RECV_TIMEOUT_MS.
  std::chrono::milliseconds recv_timeout{std::chrono::minutes(10)};
};

class Communicator;

namespace detail {
class World;

// Runs entry(comm) on P threads; rethrows the first primary failure as
// GroupError.
void run_group(int P, const std::function<void(Communicator&)>& entry, GroupOptions options);
}  // namespace detail

class Communicator {
 public:
  // Reserved tags. User point-to-point traffic should use tags >= kUserTag.
  enum Tag : int {
    kTagSendrecv = 1,
    kTagScan,
    kTagReduce,
    kTagBroadcast,
    kTagGather,
    kTagScatter,
    kTagBarrier,
    kTagShift,
    kUserTag = 100,
  };

  int rank() const noexcept { return rank_; }
  int size() const noexcept { return size_; }

  /// World rank of the first member of this (sub)group.
  int base() const noexcept { return base_; }

  /// The sub-communicator for the half of this group that contains this rank.
  /// Requires size() >= 2.
  Communicator split_half() const;

  // -- point to point (ranks are group-relative) -----------------------------

  void send_bytes(int dest, std::span<const std::byte> bytes, int tag);
  /// Sends the concatenation of `parts` as one message.
  void send_parts(int dest, std::initializer_list<std::span<const std::byte>> parts, int tag);
  std::vector<std::byte> recv_bytes(int source, int tag);

  template <class T>
  void send(int dest, std::span<const T> data, int tag = kUserTag) {
    static_assert(std::is_trivially_copyable_v<T>);
    send_bytes(dest, std::as_bytes(data), tag);
  }

  template <class T>
  std::vector<T> recv(int source, int tag = kUserTag) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto bytes = recv_bytes(source, tag);
    if (bytes.size() % sizeof(T) != 0) throw CommError("recv: payload is not a whole number of elements");
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
  }

  /// Receives exactly dst.size() elements; a length mismatch is an error.
  template <class T>
  void recv_into(int source, std::span<T> dst, int tag = kUserTag) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto bytes = recv_bytes(source, tag);
    if (bytes.size() != dst.size_bytes()) throw CommError("recv: payload length mismatch");
    if (!dst.empty()) std::memcpy(dst.data(), bytes.data(), bytes.size());
  }

  /// Symmetric exchange with peer; peer must call sendrecv with this rank.
  template <class T>
  std::vector<T> sendrecv(int peer, std::span<const T> out) {
    check_peer(peer);
    send(peer, out, kTagSendrecv);
    return recv<T>(peer, kTagSendrecv);
  }

  /// MPI_Sendrecv with distinct destination and source.
  template <class T>
  std::vector<T> sendrecv(int dest, std::span<const T> out, int source, int tag) {
    send(dest, out, tag);
    return recv<T>(source, tag);
  }

  // -- collectives -----------------------------------------------------------

  /// Inclusive prefix sum over ranks (recursive doubling, fixed order).
  std::int64_t scan_sum(std::int64_t local);
  double scan_sum(double local);

  /// Sum over ranks, reduced along a fixed binary tree then broadcast from
  /// rank 0, so every rank holds bit-identical results.
  std::int64_t allreduce_sum(std::int64_t local);
  double allreduce_sum(double local);
  void allreduce_sum(std::span<double> values);
  void allreduce_sum(std::span<std::int64_t> values);
  double allreduce_max(double local);

  void barrier();

  template <class T>
  T broadcast(T value, int root = 0) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::vector<std::byte> bytes(sizeof(T));
    std::memcpy(bytes.data(), &value, sizeof(T));
    broadcast_bytes(bytes, root);
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }

  /// Concatenation of every rank's local block, in rank order, at rank 0.
  /// Other ranks get an empty container. Local lengths must agree.
  template <class T, class Alloc = std::allocator<T>>
  std::vector<T, Alloc> gather(std::span<const T> local) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::vector<T, Alloc> full;
    if (rank_ == 0) {
      full.resize(local.size() * static_cast<std::size_t>(size_));
      std::copy(local.begin(), local.end(), full.begin());
      for (int r = 1; r < size_; ++r) {
        recv_into<T>(r, std::span<T>(full.data() + local.size() * r, local.size()), kTagGather);
      }
    } else {
      send(0, local, kTagGather);
    }
    return full;
  }

  /// Rank r receives slice [r*n, (r+1)*n) of `full` (only read at rank 0).
  template <class T, class Alloc = std::allocator<T>>
  std::vector<T, Alloc> scatter(std::span<const T> full, std::size_t n) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::vector<T, Alloc> local(n);
    if (rank_ == 0) {
      if (full.size() != n * static_cast<std::size_t>(size_)) throw CommError("scatter: input length is not n*P");
      for (int r = 1; r < size_; ++r) send(r, full.subspan(n * r, n), kTagScatter);
      std::copy(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n), local.begin());
    } else {
      recv_into<T>(0, std::span<T>(local), kTagScatter);
    }
    return local;
  }

  /// Circular left shift of the group-wide array by r elements. Each element
  /// is `width` consecutive values of `shard`; every rank holds the same
  /// number of elements. Uses one exchange per set bit of the whole-block
  /// part of r plus one exchange for the remainder.
  template <class T, class Alloc = std::allocator<T>>
  std::vector<T, Alloc> rotational_shift(std::span<const T> shard, std::size_t r, std::size_t width = 1);

  /// Number of point-to-point messages this rank has sent (for tests).
  std::uint64_t messages_sent() const;

 private:
  friend void detail::run_group(int, const std::function<void(Communicator&)>&, GroupOptions);

  Communicator(std::shared_ptr<detail::World> world, int base, int size, int rank)
      : world_(std::move(world)), base_(base), size_(size), rank_(rank) {}

  void check_peer(int peer) const;
  void broadcast_bytes(std::vector<std::byte>& bytes, int root);
  int world_rank(int group_rank) const;

  std::shared_ptr<detail::World> world_;
  int base_ = 0;
  int size_ = 1;
  int rank_ = 0;
};

/// Launches P workers running `entry(Communicator&)` and returns per-rank
/// results in rank order (nothing for void entries).
template <class Entry>
auto spawn_group(int P, Entry&& entry, GroupOptions options = {}) {
  using R = std::invoke_result_t<Entry&, Communicator&>;
  if constexpr (std::is_void_v<R>) {
    detail::run_group(
        P, [&](Communicator& c) { entry(c); }, options);
  } else {
    std::vector<std::optional<R>> slots(P > 0 ? static_cast<std::size_t>(P) : 0);
    detail::run_group(
        P, [&](Communicator& c) { slots[static_cast<std::size_t>(c.rank())].emplace(entry(c)); }, options);
    std::vector<R> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }
}

template <class T, class Alloc>
std::vector<T, Alloc> Communicator::rotational_shift(std::span<const T> shard, std::size_t r, std::size_t width) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (width == 0 || shard.size() % width != 0) throw CommError("rotational_shift: shard is not a whole number of elements");
  const std::size_t n = shard.size() / width;
  const std::size_t total = n * static_cast<std::size_t>(size_);
  if (r >= total && !(total == 0 && r == 0)) throw CommError("rotational_shift: r out of range");

  std::vector<T, Alloc> cur(shard.begin(), shard.end());
  if (r == 0 || size_ == 0) return cur;

  // Whole-block moves: rank k must end up with the block of rank k + blocks.
  const std::size_t blocks = n == 0 ? 0 : r / n;
  const std::size_t rem = n == 0 ? 0 : r % n;
  const int P = size_;
  for (int bit = 0; (std::size_t{1} << bit) <= blocks; ++bit) {
    if (!(blocks & (std::size_t{1} << bit))) continue;
    const int step = 1 << bit;
    const int dest = ((rank_ - step) % P + P) % P;
    const int src = (rank_ + step) % P;
    if (dest == rank_) continue;
    send(dest, std::span<const T>(cur), kTagShift);
    std::vector<T, Alloc> next(cur.size());
    recv_into<T>(src, std::span<T>(next), kTagShift);
    cur.swap(next);
  }
  if (rem == 0) return cur;

  // Remainder: new block = own[rem..n) ++ right neighbour's first rem.
  const std::size_t head = rem * width;
  std::vector<T, Alloc> out(cur.size());
  std::copy(cur.begin() + static_cast<std::ptrdiff_t>(head), cur.end(), out.begin());
  if (P == 1) {
    std::copy(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(head), out.end() - static_cast<std::ptrdiff_t>(head));
  } else {
    const int left = (rank_ - 1 + P) % P;
    const int right = (rank_ + 1) % P;
    send(left, std::span<const T>(cur.data(), head), kTagShift);
    recv_into<T>(right, std::span<T>(out.data() + (cur.size() - head), head), kTagShift);
  }
  return out;
}

}  // namespace smcpar
