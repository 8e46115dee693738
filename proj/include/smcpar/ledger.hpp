#pragma once

// Per-worker accounting of particle-payload scalars.
//
// Every rank runs on its own thread, so the counters are thread-local. Buffers
// that hold particle data use TrackedVector, whose allocator charges the
// calling thread's ledger. Transit copies held by the communicator are not
// charged: they model the network, not rank memory.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace smcpar {

struct LedgerSnapshot {
  std::int64_t live = 0;     // scalars currently allocated
  std::int64_t peak = 0;     // max of live since last reset
  std::int64_t largest = 0;  // largest single buffer since last reset
};

namespace ledger {

inline LedgerSnapshot& state() {
  thread_local LedgerSnapshot s;
  return s;
}

inline void charge(std::int64_t scalars) {
  auto& s = state();
  s.live += scalars;
  s.peak = std::max(s.peak, s.live);
  s.largest = std::max(s.largest, scalars);
}

inline void release(std::int64_t scalars) { state().live -= scalars; }

inline LedgerSnapshot snapshot() { return state(); }

/// Restart peak/largest tracking from the current live count.
inline void reset_peak() {
  auto& s = state();
  s.peak = s.live;
  s.largest = 0;
}

}  // namespace ledger

template <class T>
struct LedgerAllocator {
  using value_type = T;

  LedgerAllocator() noexcept = default;
  template <class U>
  LedgerAllocator(const LedgerAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    ledger::charge(static_cast<std::int64_t>(n));
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    ledger::release(static_cast<std::int64_t>(n));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const LedgerAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using TrackedVector = std::vector<T, LedgerAllocator<T>>;

}  // namespace smcpar
