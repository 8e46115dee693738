#include "smcpar/comm.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

namespace smcpar {
namespace detail {

namespace {

struct Envelope {
  int tag;
  std::vector<std::byte> bytes;
};

// Ordered queue of messages from one world rank to another.
struct Channel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<Envelope> queue;
};

// Thrown into ranks blocked on a receive after another rank has failed. Never
// reported as the group's primary failure.
class Aborted : public std::runtime_error {
 public:
  Aborted() : std::runtime_error("group aborted") {}
};

std::chrono::milliseconds resolve_timeout(std::chrono::milliseconds fallback) {
  if (const char* env = std::getenv("SMCPAR_RECV_TIMEOUT_MS")) {
    char* end = nullptr;
    const long long ms = std::strtoll(env, &end, 10);
    if (end != env && ms > 0) return std::chrono::milliseconds(ms);
  }
  return fallback;
}

}  // namespace

class World {
 public:
  World(int P, GroupOptions options)
      : size_(P), timeout_(resolve_timeout(options.recv_timeout)),
        channels_(static_cast<std::size_t>(P) * static_cast<std::size_t>(P)),
        finished_(static_cast<std::size_t>(P)), sent_(static_cast<std::size_t>(P)) {
    for (auto& f : finished_) f.store(false);
    for (auto& s : sent_) s.store(0);
  }

  void post(int from, int to, int tag, std::vector<std::byte> bytes) {
    Channel& ch = channel(from, to);
    {
      std::lock_guard lock(ch.mutex);
      ch.queue.push_back(Envelope{tag, std::move(bytes)});
    }
    ch.ready.notify_all();
    sent_[static_cast<std::size_t>(from)].fetch_add(1, std::memory_order_relaxed);
  }

  std::vector<std::byte> take(int from, int to, int tag) {
    Channel& ch = channel(from, to);
    std::unique_lock lock(ch.mutex);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      if (!ch.queue.empty()) break;
      if (aborted_.load()) throw Aborted();
      if (finished_[static_cast<std::size_t>(from)].load()) {
        throw CommError("unmatched receive: rank " + std::to_string(from) + " exited without sending to rank " +
                        std::to_string(to));
      }
      if (ch.ready.wait_until(lock, deadline) == std::cv_status::timeout && ch.queue.empty()) {
        if (aborted_.load()) throw Aborted();
        throw CommError("receive timed out waiting for rank " + std::to_string(from));
      }
    }
    Envelope env = std::move(ch.queue.front());
    ch.queue.pop_front();
    if (env.tag != tag) {
      throw CommError("collective mismatch: rank " + std::to_string(to) + " expected tag " + std::to_string(tag) +
                      " from rank " + std::to_string(from) + ", got " + std::to_string(env.tag));
    }
    return std::move(env.bytes);
  }

  // Wakes every waiter so blocked ranks can observe abort/finish.
  void wake_all() {
    for (auto& ch : channels_) {
      { std::lock_guard lock(ch.mutex); }
      ch.ready.notify_all();
    }
  }

  void mark_finished(int rank) {
    finished_[static_cast<std::size_t>(rank)].store(true);
    wake_all();
  }

  void abort() {
    aborted_.store(true);
    wake_all();
  }

  std::uint64_t sent(int rank) const { return sent_[static_cast<std::size_t>(rank)].load(); }
  int size() const { return size_; }

 private:
  Channel& channel(int from, int to) {
    return channels_[static_cast<std::size_t>(from) * static_cast<std::size_t>(size_) + static_cast<std::size_t>(to)];
  }

  int size_;
  std::chrono::milliseconds timeout_;
  std::vector<Channel> channels_;
  std::vector<std::atomic<bool>> finished_;
  std::vector<std::atomic<std::uint64_t>> sent_;
  std::atomic<bool> aborted_{false};
};

void run_group(int P, const std::function<void(Communicator&)>& entry, GroupOptions options) {
  if (P < 1 || !is_power_of_two(static_cast<std::uint64_t>(P))) {
    throw CommError("P not power of two: " + std::to_string(P));
  }
  if (const char* cap = std::getenv("SMCPAR_MAX_WORKERS")) {
    const long limit = std::strtol(cap, nullptr, 10);
    if (limit > 0 && P > limit) {
      throw CommError("P=" + std::to_string(P) + " exceeds SMCPAR_MAX_WORKERS=" + std::to_string(limit));
    }
  }

  auto world = std::make_shared<World>(P, options);
  std::mutex failure_mutex;
  int failed_rank = -1;
  std::string failure;

  auto body = [&](int rank) {
    Communicator comm(world, 0, P, rank);
    try {
      entry(comm);
    } catch (const Aborted&) {
      // secondary: another rank failed first
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(failure_mutex);
        if (failed_rank < 0) {
          failed_rank = rank;
          failure = e.what();
        }
      }
      world->abort();
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (failed_rank < 0) {
          failed_rank = rank;
          failure = "unknown exception";
        }
      }
      world->abort();
    }
    world->mark_finished(rank);
  };

  if (P == 1) {
    body(0);
  } else {
    std::vector<std::jthread> workers;
    workers.reserve(static_cast<std::size_t>(P));
    for (int r = 0; r < P; ++r) workers.emplace_back(body, r);
  }
  if (failed_rank >= 0) throw GroupError(failed_rank, failure);
}

}  // namespace detail

int Communicator::world_rank(int group_rank) const {
  if (group_rank < 0 || group_rank >= size_) {
    throw CommError("rank " + std::to_string(group_rank) + " outside group of size " + std::to_string(size_));
  }
  return base_ + group_rank;
}

void Communicator::check_peer(int peer) const {
  if (peer == rank_) throw CommError("sendrecv: peer equals own rank");
  (void)world_rank(peer);
}

Communicator Communicator::split_half() const {
  if (size_ < 2) throw CommError("split_half: group of size 1");
  const int half = size_ / 2;
  const bool upper = rank_ >= half;
  return Communicator(world_, base_ + (upper ? half : 0), half, upper ? rank_ - half : rank_);
}

void Communicator::send_bytes(int dest, std::span<const std::byte> bytes, int tag) {
  world_->post(base_ + rank_, world_rank(dest), tag, std::vector<std::byte>(bytes.begin(), bytes.end()));
}

void Communicator::send_parts(int dest, std::initializer_list<std::span<const std::byte>> parts, int tag) {
  std::size_t total = 0;
  for (auto p : parts) total += p.size();
  std::vector<std::byte> bytes;
  bytes.reserve(total);
  for (auto p : parts) bytes.insert(bytes.end(), p.begin(), p.end());
  world_->post(base_ + rank_, world_rank(dest), tag, std::move(bytes));
}

std::vector<std::byte> Communicator::recv_bytes(int source, int tag) {
  return world_->take(world_rank(source), base_ + rank_, tag);
}

std::uint64_t Communicator::messages_sent() const { return world_->sent(base_ + rank_); }

namespace {

// Hillis-Steele inclusive scan: log2(P) rounds, fixed combination order.
template <class T>
T scan_impl(Communicator& c, T local) {
  T acc = local;
  for (int d = 1; d < c.size(); d <<= 1) {
    if (c.rank() + d < c.size()) c.send(c.rank() + d, std::span<const T>(&acc, 1), Communicator::kTagScan);
    if (c.rank() - d >= 0) {
      const auto got = c.recv<T>(c.rank() - d, Communicator::kTagScan);
      if (got.size() != 1) throw CommError("collective mismatch in scan_sum");
      acc = got[0] + acc;
    }
  }
  return acc;
}

// Binomial-tree reduction to rank 0 followed by broadcast.
template <class T, class Op>
void allreduce_impl(Communicator& c, std::span<T> values, Op op) {
  const int P = c.size();
  const int me = c.rank();
  for (int d = 1; d < P; d <<= 1) {
    if (me & d) {
      c.send(me - d, std::span<const T>(values), Communicator::kTagReduce);
      break;
    }
    if (me + d < P) {
      const auto got = c.recv<T>(me + d, Communicator::kTagReduce);
      if (got.size() != values.size()) throw CommError("collective mismatch in allreduce: length differs");
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = op(values[i], got[i]);
    }
  }
  // Broadcast down the same tree.
  int mask = 1;
  while (mask < P) mask <<= 1;
  for (int d = mask >> 1; d >= 1; d >>= 1) {
    if (me % (2 * d) == 0 && me + d < P) {
      c.send(me + d, std::span<const T>(values), Communicator::kTagBroadcast);
    } else if (me % (2 * d) == d) {
      c.recv_into<T>(me - d, values, Communicator::kTagBroadcast);
    }
  }
}

}  // namespace

std::int64_t Communicator::scan_sum(std::int64_t local) { return scan_impl(*this, local); }
double Communicator::scan_sum(double local) { return scan_impl(*this, local); }

std::int64_t Communicator::allreduce_sum(std::int64_t local) {
  allreduce_impl<std::int64_t>(*this, std::span<std::int64_t>(&local, 1), std::plus<>{});
  return local;
}

double Communicator::allreduce_sum(double local) {
  allreduce_impl<double>(*this, std::span<double>(&local, 1), std::plus<>{});
  return local;
}

void Communicator::allreduce_sum(std::span<double> values) { allreduce_impl<double>(*this, values, std::plus<>{}); }

void Communicator::allreduce_sum(std::span<std::int64_t> values) {
  allreduce_impl<std::int64_t>(*this, values, std::plus<>{});
}

double Communicator::allreduce_max(double local) {
  allreduce_impl<double>(*this, std::span<double>(&local, 1), [](double a, double b) { return a < b ? b : a; });
  return local;
}

void Communicator::barrier() {
  std::int64_t token = 0;
  allreduce_impl<std::int64_t>(*this, std::span<std::int64_t>(&token, 1), std::plus<>{});
}

void Communicator::broadcast_bytes(std::vector<std::byte>& bytes, int root) {
  (void)world_rank(root);
  // Relabel so the root is virtual rank 0, then fan out along a binomial tree.
  const int P = size_;
  const int vme = (rank_ - root + P) % P;
  int mask = 1;
  while (mask < P) mask <<= 1;
  for (int d = mask >> 1; d >= 1; d >>= 1) {
    if (vme % (2 * d) == 0 && vme + d < P) {
      send_bytes((vme + d + root) % P, bytes, kTagBroadcast);
    } else if (vme % (2 * d) == d) {
      auto got = recv_bytes((vme - d + root) % P, kTagBroadcast);
      if (got.size() != bytes.size()) throw CommError("collective mismatch in broadcast: length differs");
      bytes = std::move(got);
    }
  }
}

}  // namespace smcpar
