// Copyright 2026 The tarl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TARL_RANDOM_H_
#define TARL_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace tarl {

// SplitMix64 finalizer, used to derive independent stream seeds.
uint64_t Mix64(uint64_t x);

// Derives a stream seed from a base seed and a list of stream ids, e.g.
// (global seed, task id) for per-task sampling.
uint64_t StreamSeed(uint64_t seed, std::initializer_list<uint64_t> ids);

// Seeded engine with distribution helpers whose output does not depend on
// the standard library's distribution implementations.
class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform();
  // Uniform integer in [0, n). n must be positive.
  size_t Below(size_t n);
  // Uniform integer in [lo, hi].
  int64_t Between(int64_t lo, int64_t hi);
  double Normal();

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tarl

#endif  // TARL_RANDOM_H_
