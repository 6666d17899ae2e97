// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small models and batches shared by the unit and acceptance tests.

#pragma once

#include <memory>

#include "aerialtext/data.hpp"
#include "aerialtext/model.hpp"
#include "aerialtext/trainer.hpp"

namespace aerialtext::testing {

inline data::GenConfig tiny_gen_config() {
  data::GenConfig g;
  g.image_size = 16;
  return g;
}

/// 16x16 images, 2x2 patch grid, d = 4. Small enough for exhaustive
/// finite differences over every parameter.
inline model::ModelConfig tiny_model_config() {
  auto c = model::ModelConfig::defaults();
  c.image_size = 16;
  c.patch_size = 8;
  c.embed_dim = 4;
  c.cross_blocks = 2;
  c.mlp_hidden = 6;
  c.max_tokens = 24;
  return c;
}

struct TinyBatch {
  data::Corpus corpus;
  std::vector<trainer::PreparedSample> prepared;
  trainer::Batch batch;
};

/// `n` scenes from distinct classes, augmented with seeded brightness.
inline std::unique_ptr<TinyBatch> make_batch(const model::Model& model, std::uint64_t seed,
                                             std::size_t n = 2,
                                             const data::GenConfig& gen = tiny_gen_config()) {
  auto b = std::make_unique<TinyBatch>();
  std::vector<std::uint64_t> seeds;
  const auto views = static_cast<std::uint64_t>(gen.views_per_class);
  for (std::size_t i = 0; i < n; ++i) seeds.push_back((seed * 64 + i) * views + (seed + i) % views);
  b->corpus = data::generate_corpus(seeds, gen);
  b->prepared = trainer::prepare(model, b->corpus);
  Rng rng(mix_seed(seed, 0xba7c));
  for (const auto& p : b->prepared) {
    trainer::BatchItem item;
    item.sample = &p;
    item.description = rng.below(p.descriptions.size());
    item.image = trainer::augment(*p.image, rng.next(), 0.1);
    b->batch.push_back(std::move(item));
  }
  return b;
}

}  // namespace aerialtext::testing
