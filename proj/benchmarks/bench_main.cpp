// Copyright 2026 The edistill Authors. All Rights Reserved.
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


#include <benchmark/benchmark.h>

#include <vector>

#include "edistill/dumps.hpp"
#include "edistill/flowsim.hpp"
#include "edistill/initlab.hpp"
#include "edistill/proxytrain.hpp"
#include "edistill/spectral.hpp"
#include "edistill/widthnet.hpp"

namespace {

using namespace edistill;

Matrix bench_matrix(Index rows, Index dim) {
  std::vector<double> spec(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) spec[std::size_t(j)] = 1.0 / double(j + 1);
  return dumps::synth_matrix(rows, dim, spec, std::nullopt, 7);
}

void BM_Erank(benchmark::State& state) {
  const Matrix x = bench_matrix(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(spectral::erank(x).erank);
}
BENCHMARK(BM_Erank)->Args({256, 64})->Args({1024, 256})->Args({2048, 768});

void BM_MaxAbsCosine(benchmark::State& state) {
  const spectral::PreppedMatrix p = spectral::preprocess(bench_matrix(state.range(0), 128));
  for (auto _ : state) benchmark::DoNotOptimize(spectral::max_abs_cosine(p).value);
}
BENCHMARK(BM_MaxAbsCosine)->Arg(256)->Arg(1024);

void BM_MinTv(benchmark::State& state) {
  Rng rng(1);
  const Matrix z = gaussian_matrix(state.range(0), state.range(1), 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(spectral::min_tv(z).value);
}
BENCHMARK(BM_MinTv)->Args({128, 1000})->Args({256, 4000});

void BM_FlowStep(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix sigma = flowsim::covariance(bench_matrix(4 * d, d));
  const flowsim::ProjectionPair p =
      initlab::build_pair({initlab::Gaussian{0.1}, 3}, d, d / 2);
  const auto integ = state.range(1) ? flowsim::Integrator::kRk4
                                    : flowsim::Integrator::kEuler;
  for (auto _ : state)
    benchmark::DoNotOptimize(flowsim::flow_step(sigma, p, 1e-3, integ).q.data());
}
BENCHMARK(BM_FlowStep)->Args({32, 0})->Args({32, 1})->Args({128, 0})->Args({128, 1});

void BM_TrainEpochs(benchmark::State& state) {
  const Matrix x = bench_matrix(512, 128);
  proxytrain::TrainConfig cfg;
  cfg.epochs = state.range(0);
  const initlab::InitSpec spec{initlab::Orthogonal{}, 5};
  for (auto _ : state)
    benchmark::DoNotOptimize(proxytrain::train_autoencoder(x, spec, 64, cfg).final_loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainEpochs)->Arg(10)->Arg(100);

void BM_ImportanceQr(benchmark::State& state) {
  dumps::SynthDumpConfig cfg;
  cfg.hidden_dim = std::uint32_t(state.range(0));
  cfg.num_layers = 4;
  cfg.num_sequences = 4;
  cfg.seq_len = 128;
  const dumps::ActivationDump d = dumps::synth_dump(cfg);
  for (auto _ : state)
    benchmark::DoNotOptimize(initlab::importance_qr(d).scores.data());
}
BENCHMARK(BM_ImportanceQr)->Arg(64)->Arg(256);

void BM_TeacherBlock(benchmark::State& state) {
  Rng rng(2);
  const widthnet::TeacherLayer t = widthnet::random_teacher_layer(128, 4, 32, 256, rng);
  const Matrix x = gaussian_matrix(state.range(0), 128, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(widthnet::teacher_block(x, t).data());
}
BENCHMARK(BM_TeacherBlock)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
