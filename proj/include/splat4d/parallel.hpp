#pragma once

#include <cstddef>

#ifdef SPLAT4D_HAVE_TBB
#include <algorithm>
#include <execution>
#include <numeric>
#include <vector>
#endif

namespace splat4d {

// Index-space parallel loop. Work items must be independent; anything that
// needs a deterministic combination order must reduce after the loop.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
#ifdef SPLAT4D_HAVE_TBB
  if (n > 1) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::for_each(std::execution::par, idx.begin(), idx.end(),
                  [&](size_t i) { fn(i); });
    return;
  }
#endif
  for (size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace splat4d
