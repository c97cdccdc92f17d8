#pragma once

#include <cstdint>
#include <functional>

namespace lamnet {

// Worker cap for data-parallel loops. Resolution order:
// explicit set_num_threads() > LAMNET_THREADS env var > hardware concurrency.
int num_threads();
void set_num_threads(int n);

// Splits [begin, end) into contiguous chunks, one std::thread per extra chunk.
// Runs inline when the range is small or only one worker is available.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body);

}  // namespace lamnet
