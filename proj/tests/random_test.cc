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

#include "tarl/random.h"

#include <algorithm>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

namespace tarl {
namespace {

TEST(RngTest, SameSeedSameSequence) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a();
    EXPECT_EQ(x, b());
    differs |= x != c();
  }
  EXPECT_TRUE(differs);
}

TEST(RngTest, RangesHold) {
  Rng rng(1);
  std::vector<size_t> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.Uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const size_t k = rng.Below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
    const int64_t v = rng.Between(-3, 3);
    EXPECT_GE(v, -3);
    EXPECT_LE(v, 3);
  }
  for (size_t c : counts) EXPECT_NEAR(static_cast<double>(c), 10000.0, 400.0);
}

TEST(RngTest, ShuffleIsPermutation) {
  Rng rng(2);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  rng.Shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(StreamSeedTest, DependsOnEveryIdAndOrder) {
  const uint64_t base = StreamSeed(7, {1, 2, 3});
  EXPECT_EQ(base, StreamSeed(7, {1, 2, 3}));
  EXPECT_NE(base, StreamSeed(8, {1, 2, 3}));
  EXPECT_NE(base, StreamSeed(7, {1, 2, 4}));
  EXPECT_NE(base, StreamSeed(7, {2, 1, 3}));
  EXPECT_NE(base, StreamSeed(7, {1, 2}));
}

}  // namespace
}  // namespace tarl
