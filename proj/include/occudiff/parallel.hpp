#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace occudiff {

// Deterministic data-parallel helper. Work is cut into fixed-size blocks that
// do not depend on the thread count, and every output element is written by
// exactly one block, so results are bit-identical for any --threads value.

void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) over [0, total) in blocks of block_size.
/// Blocks must write disjoint outputs. Nested calls run serially.
void parallel_for_blocks(size_t total, size_t block_size,
                         const std::function<void(size_t, size_t)>& fn);

}  // namespace occudiff
