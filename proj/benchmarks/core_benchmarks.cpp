// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "aerialtext/data.hpp"
#include "aerialtext/eval.hpp"
#include "aerialtext/geometry.hpp"
#include "aerialtext/model.hpp"
#include "aerialtext/trainer.hpp"

namespace aerialtext {
namespace {

void BM_Giou(benchmark::State& state) {
  Rng rng(1);
  std::vector<geometry::BBox> boxes;
  for (int i = 0; i < 1024; ++i) {
    boxes.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
                     rng.uniform(0.05, 0.4)});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(geometry::giou(boxes[i % 1024], boxes[(i + 7) % 1024]));
    ++i;
  }
}
BENCHMARK(BM_Giou);

void BM_GenerateScene(benchmark::State& state) {
  const data::GenConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(data::generate_scene(seed++, cfg));
}
BENCHMARK(BM_GenerateScene);

void BM_EncodeImage(benchmark::State& state) {
  const model::Model m(model::ModelConfig::defaults(), 1);
  const auto image = data::generate_scene(0, data::GenConfig{}).image;
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.encode_image(image));
}
BENCHMARK(BM_EncodeImage);

void BM_TrainStep(benchmark::State& state) {
  const data::GenConfig gen;
  const auto corpus = data::generate_corpus(data::split_seeds(0, 64, 0, gen, false), gen);
  trainer::TrainConfig cfg;
  cfg.batch_size = static_cast<int>(state.range(0));
  trainer::Trainer t(model::Model(model::ModelConfig::defaults(), 1), cfg, corpus);
  for (auto _ : state) benchmark::DoNotOptimize(t.step_once());
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RankGallery(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
  for (auto& s : scores) s = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(eval::rank(scores));
}
BENCHMARK(BM_RankGallery)->Arg(64)->Arg(1024);

}  // namespace
}  // namespace aerialtext

BENCHMARK_MAIN();
