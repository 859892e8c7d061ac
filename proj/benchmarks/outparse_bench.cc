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

#include <string>

#include <benchmark/benchmark.h>

#include "tarl/outparse.h"

namespace tarl {
namespace {

std::string Sample(size_t think_tokens) {
  std::string text = "<think>";
  for (size_t i = 0; i < think_tokens; ++i) text += " step";
  return text + "</think><image>2</image><answer>B. 9.18%</answer>";
}

void BM_ParseOutput(benchmark::State& state) {
  const std::string text = Sample(static_cast<size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ParseOutput(text));
  state.SetBytesProcessed(state.iterations() *
                          static_cast<int64_t>(text.size()));
}
BENCHMARK(BM_ParseOutput)->Arg(75)->Arg(450)->Arg(900);

void BM_NormalizeAnswer(benchmark::State& state) {
  const std::vector<Option> options = {
      {'A', "12"}, {'B', "9.18%"}, {'C', "0.5"}, {'D', "-3"}, {'E', "100"}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(NormalizeAnswer("\\frac{1}{2}", options));
  }
}
BENCHMARK(BM_NormalizeAnswer);

}  // namespace
}  // namespace tarl
