#pragma once

// Sorting-network kernels over (ncopies, particle) pairs.
//
// The parallel kernels are collective over the communicator: every rank holds
// n = N/P pairs and n is the same on all ranks.

#include <cstddef>

#include "smcpar/comm.hpp"
#include "smcpar/shard.hpp"

namespace smcpar {

enum class Direction { ascending, descending };

/// Local sort used by the bitonic network: mergesort (BS+MS) or a local
/// bitonic network with bitonic merges (BS).
enum class LocalSort { merge, bitonic };

/// Which half of a pair's combined keys a rank keeps in nearly_merge.
enum class MergeRole { zeros_first, positives_first };

/// Memory writes of (key, row) pairs, used to check data independence.
struct KernelStats {
  std::size_t writes = 0;
};

/// True iff no positive key precedes a zero key.
bool is_nearly_sorted_ascending(std::span<const Count> keys) noexcept;

/// Stable sort of the pairs by key. The bitonic variant requires a power-of-two
/// size and is not stable.
KeyedShard local_sort(KeyedShard shard, Direction direction, LocalSort kind = LocalSort::merge);

/// Block bitonic sort across the group. On return rank 0 holds the smallest
/// block for ascending order and each block is internally ordered.
KeyedShard bitonic_sort(Communicator& comm, KeyedShard shard, Direction direction, LocalSort kind = LocalSort::merge);

/// Two-cursor pass: zeros are written left to right from the front, positives
/// right to left from the back. Exactly n writes.
KeyedShard sequential_nearly_sort(const KeyedShard& shard, KernelStats* stats = nullptr);

/// Pairwise exchange with `partner`. The two ranks scan the lower rank's pairs
/// then the higher rank's. The zeros_first rank keeps zeros in encounter order,
/// then positives, until it has n; the positives_first rank keeps the
/// complement, positives before zeros.
KeyedShard nearly_merge(Communicator& comm, const KeyedShard& shard, int partner, MergeRole role,
                        KernelStats* stats = nullptr);

/// Sequential nearly sort locally, then the bitonic network schedule with
/// nearly_merge as the comparator. The output is nearly sorted ascending
/// across the group.
KeyedShard parallel_nearly_sort(Communicator& comm, KeyedShard shard, KernelStats* stats = nullptr);

}  // namespace smcpar
