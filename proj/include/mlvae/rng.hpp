#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

// Counter-based generator: the n-th 64-bit output is splitmix64(key + n*golden),
// so (key, counter) is the complete state and streams can be forked by name.
//
// Normal variates use the Box-Muller cosine branch on two consecutive
// uniforms; one normal consumes exactly two counter values.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n). Rejection sampling, so unbiased.
  std::size_t uniform_index(std::size_t n);
  double normal();
  Tensor normal_tensor(Shape shape);

  // Independent generator whose key derives from this key and `name`.
  // Does not advance this generator.
  CounterRng fork(std::string_view name) const;
  CounterRng fork(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& items, CounterRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(items[i - 1], items[j]);
  }
}

// `count` distinct draws from [0, n) in random order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, CounterRng& rng);

}  // namespace mlvae
