#pragma once

#include <cstddef>
#include <functional>

namespace sactext {

/// Split [0, n) into `chunks` contiguous ranges and call fn(chunk, begin, end) for each, using up
/// to `threads` worker threads. Chunk boundaries depend only on (n, chunks), so reductions done
/// per chunk and merged in chunk order are identical for every thread count.
void for_each_chunk(std::size_t n, std::size_t chunks, std::size_t threads,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace sactext
