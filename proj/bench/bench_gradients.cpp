// Copyright 2026 The dmoe Authors.
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

// Serial reference versus batched parallel gradient kernels.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "dmoe/mixture.hpp"
#include "dmoe/parallel.hpp"

namespace {

using namespace dmoe;

struct Fixture {
  DmoeParams params;
  std::vector<data::FeaturePair> batch;
  data::Corpus corpus;
  std::vector<std::size_t> rows;

  Fixture(std::size_t m, std::size_t n) {
    const ModelDims d = dims_for(data::FeatureConfig{});
    params = init_dmoe(d, ModelShape{m, 64, 3, false}, 1);
    Rng rng(2);
    for (std::size_t t = 0; t < n; ++t) {
      data::FeaturePair f;
      f.expert_input.resize(d.expert_input);
      f.gate_input.resize(d.gate_input);
      f.label.bits.resize(d.num_bins);
      for (auto& v : f.expert_input) v = rng.normal();
      for (auto& v : f.gate_input) v = rng.normal();
      for (auto& b : f.label.bits) b = rng.uniform() < 0.5 ? 1 : 0;
      batch.push_back(std::move(f));
    }
    corpus = corpus_from_pairs(batch);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), 0);
  }
};

void BM_ReferenceJoint(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::joint_gradients(f.params, f.batch));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_BatchedJoint(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(joint_gradients(f.params, f.corpus, f.rows));
  state.SetItemsProcessed(state.iterations() * state.range(1));
  state.counters["threads"] = max_threads();
}

BENCHMARK(BM_ReferenceJoint)->Args({1, 128})->Args({2, 128})->Args({4, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchedJoint)->Args({1, 128})->Args({2, 128})->Args({4, 128})->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
