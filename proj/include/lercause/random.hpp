#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace lercause {

using Rng = std::mt19937_64;

/// Fisher-Yates shuffle; reproducible for a given generator state.
template <class T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(items[i - 1], items[pick(rng)]);
  }
}

}  // namespace lercause
