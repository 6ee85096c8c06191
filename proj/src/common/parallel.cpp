#include "sactext/common/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace sactext {

void for_each_chunk(std::size_t n, std::size_t chunks, std::size_t threads,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  chunks = std::max<std::size_t>(1, std::min(chunks, n));
  auto bounds = [&](std::size_t c) { return std::pair{c * n / chunks, (c + 1) * n / chunks}; };
  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      const auto [b, e] = bounds(c);
      fn(c, b, e);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = next++; c < chunks; c = next++) {
          const auto [b, e] = bounds(c);
          fn(c, b, e);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace sactext
