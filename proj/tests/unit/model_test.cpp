// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "aerialtext/text.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

namespace aerialtext::model {
namespace {

using testing::tiny_model_config;

double row_norm(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

Image checker_image(int size, std::uint64_t seed) {
  Image img(size, size);
  Rng rng(seed);
  for (auto& c : img.rgb) c = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

void set_values(Tensor& t, std::vector<double> v) {
  ASSERT_EQ(v.size(), t.numel());
  std::copy(v.begin(), v.end(), t.mutable_data().begin());
}

TEST(ModelConfig, Validation) {
  auto c = ModelConfig::defaults();
  EXPECT_NO_THROW(c.validate());
  c.image_size = 60;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig::defaults();
  c.embed_dim = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig::defaults();
  c.temperature_init = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ModelConfig, KeyValueRoundTrip) {
  const auto c = tiny_model_config();
  const auto back = ModelConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.vocab, c.vocab);
  EXPECT_EQ(back.embed_dim, c.embed_dim);
  EXPECT_EQ(back.to_kv().values(), c.to_kv().values());
}

TEST(Params, FiniteAndUniqueAfterInit) {
  const Model m(ModelConfig::defaults(), 0);
  EXPECT_TRUE(m.params().all_finite());
  EXPECT_TRUE(m.params().contains("log_tau"));
  EXPECT_NEAR(m.temperature().item(), 0.07, 1e-12);
  EXPECT_THROW(Params().get("nope"), std::out_of_range);
}

TEST(Params, OneFusionWeightSetServesBothPaths) {
  const Model m(tiny_model_config(), 0);
  std::size_t fusion = 0;
  for (const auto& [name, t] : m.params().all()) fusion += name.rfind("fuse.", 0) == 0;
  EXPECT_EQ(fusion, 4u * static_cast<std::size_t>(m.config().cross_blocks));
}

TEST(EncodeImage, UnitNormAndDeterministic) {
  const Model m(ModelConfig::defaults(), 1);
  const auto a = m.encode_image(checker_image(64, 1));
  EXPECT_NEAR(row_norm(a.embedding), 1.0, 1e-9);
  EXPECT_EQ(a.map.grid_rows, 8);
  EXPECT_EQ(a.map.features.rows(), 64u);
  const auto again = m.encode_image(checker_image(64, 1));
  EXPECT_TRUE(std::equal(a.embedding.data().begin(), a.embedding.data().end(), again.embedding.data().begin()));
  const auto b = m.encode_image(checker_image(64, 2));
  EXPECT_LT(similarity(a.embedding.data(), b.embedding.data()), 1.0 - 1e-9);
}

TEST(EncodeImage, UniformImageGivesEqualPatchEmbeddings) {
  const Model m(ModelConfig::defaults(), 1);
  const auto e = m.patch_embeddings(m.patches(Image(64, 64, {10, 200, 40})));
  for (std::size_t r = 1; r < e.rows(); ++r) {
    for (std::size_t c = 0; c < e.cols(); ++c) EXPECT_DOUBLE_EQ(e.at(r, c), e.at(0, c));
  }
}

TEST(EncodeImage, WrongSizeNamesDivisibility) {
  const Model m(ModelConfig::defaults(), 1);
  try {
    m.encode_image(Image(60, 60));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by patch size 8"), std::string::npos) << e.what();
  }
}

TEST(EncodeText, UnitNormDeterministicAndSingleToken) {
  const Model m(ModelConfig::defaults(), 1);
  const auto ids = m.tokenize("red tower upper left");
  const auto a = m.encode_text(ids);
  EXPECT_NEAR(row_norm(a.embedding), 1.0, 1e-9);
  EXPECT_EQ(a.tokens.rows(), ids.size() + 1);
  const auto again = m.encode_text(ids);
  EXPECT_TRUE(std::equal(a.embedding.data().begin(), a.embedding.data().end(), again.embedding.data().begin()));
  const std::vector<std::size_t> one = {ids[0]};
  EXPECT_NEAR(row_norm(m.encode_text(one).embedding), 1.0, 1e-9);
  EXPECT_THROW(m.encode_text({}), std::invalid_argument);
}

TEST(TokenIds, UnknownAndTruncation) {
  const Model m(tiny_model_config(), 1);
  const std::vector<std::string> words = {"red", "zyzzyva"};
  const auto ids = m.token_ids(words);
  EXPECT_NE(ids[0], 0u);
  EXPECT_EQ(ids[1], 0u);
  const std::vector<std::string> many(100, "red");
  EXPECT_EQ(m.token_ids(many).size(), static_cast<std::size_t>(m.config().max_tokens - 1));
}

TEST(Similarity, Examples) {
  const std::vector<double> v = {0.6, 0.8}, w = {-0.8, 0.6}, v2 = {1.2, 1.6}, t = {0.3, -0.1};
  EXPECT_NEAR(similarity(v, v), 1.0, 1e-15);
  EXPECT_NEAR(similarity(v, w), 0.0, 1e-15);
  EXPECT_NEAR(similarity(v2, t), similarity(v, t), 1e-15);
  const std::vector<double> zero = {0, 0};
  EXPECT_THROW(similarity(zero, v), std::invalid_argument);
}

TEST(Fuse, NoBlocksGivesMeanTokenFeature) {
  auto cfg = tiny_model_config();
  cfg.cross_blocks = 0;
  const Model m(cfg, 3);
  const auto map = m.encode_image(checker_image(16, 3)).map;
  const auto tokens = m.encode_text(m.tokenize("blue dome")).tokens;
  const auto fused = m.fuse(m.prepare_memory(map), tokens);
  for (std::size_t c = 0; c < tokens.cols(); ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < tokens.rows(); ++r) mean += tokens.at(r, c);
    EXPECT_NEAR(fused.pooled.at(0, c), mean / static_cast<double>(tokens.rows()), 1e-15);
    EXPECT_DOUBLE_EQ(fused.query.at(0, c), tokens.at(0, c));
  }
}

// Text rows attend over image rows: x += softmax(x Wq (F Wk)^T / sqrt(d)) F Wv Wo.
TEST(Fuse, MatchesHandUnrolledAttention) {
  auto cfg = tiny_model_config();
  cfg.embed_dim = 2;
  cfg.cross_blocks = 1;
  Model m(cfg, 4);
  set_values(m.params().get("fuse.0.q"), {1.0, 0.5, -0.5, 2.0});
  set_values(m.params().get("fuse.0.k"), {0.3, -1.0, 0.8, 0.2});
  set_values(m.params().get("fuse.0.v"), {1.5, 0.0, -0.4, 0.7});
  set_values(m.params().get("fuse.0.o"), {0.9, 0.1, 0.2, 1.1});
  const double F[2][2] = {{0.2, -0.7}, {1.0, 0.4}};
  const double X[2][2] = {{0.5, 0.1}, {-0.3, 0.8}};
  FeatureMap map{Tensor({2, 2}, {F[0][0], F[0][1], F[1][0], F[1][1]}), 1, 2};
  const auto fused = m.fuse(m.prepare_memory(map), Tensor({2, 2}, {X[0][0], X[0][1], X[1][0], X[1][1]}));

  auto mat = [&](const char* name, int r, int c) { return m.params().get(name).at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)); };
  // Inputs to every projection are rescaled to norm sqrt(2).
  auto unit = [](const double (&row)[2], int j) {
    return row[j] / std::sqrt(row[0] * row[0] + row[1] * row[1] + ad::kNormalizeEpsilon) * std::sqrt(2.0);
  };
  for (int t = 0; t < 2; ++t) {
    double q[2], k[2][2], v[2][2], logits[2];
    for (int j = 0; j < 2; ++j) q[j] = unit(X[t], 0) * mat("fuse.0.q", 0, j) + unit(X[t], 1) * mat("fuse.0.q", 1, j);
    for (int p = 0; p < 2; ++p) {
      for (int j = 0; j < 2; ++j) {
        k[p][j] = unit(F[p], 0) * mat("fuse.0.k", 0, j) + unit(F[p], 1) * mat("fuse.0.k", 1, j);
        v[p][j] = unit(F[p], 0) * mat("fuse.0.v", 0, j) + unit(F[p], 1) * mat("fuse.0.v", 1, j);
      }
      logits[p] = (q[0] * k[p][0] + q[1] * k[p][1]) / std::sqrt(2.0);
    }
    const double z = std::exp(logits[0]) + std::exp(logits[1]);
    const double a0 = std::exp(logits[0]) / z, a1 = std::exp(logits[1]) / z;
    const double mixed[2] = {a0 * v[0][0] + a1 * v[1][0], a0 * v[0][1] + a1 * v[1][1]};
    for (int j = 0; j < 2; ++j) {
      const double expected = X[t][j] + mixed[0] * mat("fuse.0.o", 0, j) + mixed[1] * mat("fuse.0.o", 1, j);
      EXPECT_NEAR(fused.tokens.at(static_cast<std::size_t>(t), static_cast<std::size_t>(j)), expected, 1e-14);
    }
  }
  EXPECT_NEAR(fused.pooled.at(0, 0), (fused.tokens.at(0, 0) + fused.tokens.at(1, 0)) / 2, 1e-15);
}

TEST(Fuse, WrongWidthThrows) {
  const Model m(tiny_model_config(), 1);
  const auto map = m.encode_image(checker_image(16, 1)).map;
  EXPECT_THROW(m.fuse(m.prepare_memory(map), Tensor::zeros({2, 3})), ad::ShapeError);
}

TEST(GroundHead, ZeroWeightsGiveCenteredHalfBox) {
  Model m(tiny_model_config(), 1);
  for (auto& [name, t] : m.params().all()) {
    if (name.rfind("ground.", 0) == 0) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  }
  const auto b = m.ground_head(Tensor::filled({1, 4}, 0.7));
  for (double v : b.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(GroundHead, OutputsInsideUnitInterval) {
  const Model m(tiny_model_config(), 1);
  Rng rng(2);
  std::vector<double> v(50 * 4);
  for (auto& x : v) x = rng.uniform(-3, 3);
  const auto boxes = m.ground_head(Tensor({50, 4}, v));
  for (double x : boxes.data()) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(GroundHead, GiouLossGradientMatchesFiniteDifferences) {
  Model m(tiny_model_config(), 5);
  std::map<std::string, Tensor> params;
  for (auto& [name, t] : m.params().all()) {
    if (name.rfind("ground.", 0) == 0) params[name] = t;
  }
  Rng rng(6);
  std::vector<double> q(3 * 4);
  for (auto& x : q) x = rng.uniform(-1, 1);
  const Tensor queries({3, 4}, q);
  const Tensor target({3, 4}, {0.3, 0.4, 0.2, 0.3, 0.7, 0.6, 0.4, 0.1, 0.5, 0.5, 0.9, 0.9});
  const auto rep = testing::check_gradients(
      [&] { return losses::grounding_loss(target, m.ground_head(queries)); }, params);
  EXPECT_TRUE(rep.ok()) << rep.worst;
}

TEST(RoiPool, FullImageIsMeanOfAllCells) {
  const Model m(tiny_model_config(), 1);
  const auto map = m.encode_image(checker_image(16, 4)).map;
  const auto r = m.roi_pool(map, {0.5, 0.5, 1.0, 1.0});
  const auto mean = ad::mean_rows(map.features);
  for (std::size_t c = 0; c < r.cols(); ++c) EXPECT_DOUBLE_EQ(r.at(0, c), mean.at(0, c));
}

TEST(RoiPool, BoxInsideOneCellIsThatCell) {
  const Model m(ModelConfig::defaults(), 1);
  const auto map = m.encode_image(checker_image(64, 4)).map;
  // Cell (row 2, col 5) spans x in [5/8, 6/8), y in [2/8, 3/8).
  const auto r = m.roi_pool(map, {0.66, 0.3, 0.02, 0.02});
  for (std::size_t c = 0; c < r.cols(); ++c) EXPECT_DOUBLE_EQ(r.at(0, c), map.features.at(2 * 8 + 5, c));
  EXPECT_EQ(roi_cells(8, 8, {0.66, 0.3, 0.02, 0.02}), (std::vector<std::size_t>{21}));
}

TEST(RoiCells, CentersInsideClosedBox) {
  // Centers at 1/16 + k/8; box [0.0625, 0.3125] x [0.0625, 0.0625] hits columns 0..2.
  EXPECT_EQ(roi_cells(8, 8, {0.1875, 0.0625, 0.25, 0.0 + 1e-9}), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Heads, ShapesAndRanges) {
  const Model m(tiny_model_config(), 1);
  const auto a = Tensor::filled({3, 4}, 0.2), b = Tensor::filled({3, 4}, -0.4);
  EXPECT_EQ(m.spatial_head(a, b).shape(), (ad::Shape{3, 9}));
  const auto p = m.itm_head(a);
  EXPECT_EQ(p.shape(), (ad::Shape{3, 1}));
  for (double v : p.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Temperature, ClampedAtMinimum) {
  Model m(tiny_model_config(), 1);
  m.params().get("log_tau").mutable_data()[0] = -50.0;
  EXPECT_NEAR(m.temperature().item(), kMinTemperature, 1e-15);
}

TEST(ModelCheckpoint, RoundTripIsExact) {
  const Model m(tiny_model_config(), 9);
  const auto bytes = checkpoint::serialize(m.to_container());
  const auto back = Model::from_container(checkpoint::deserialize(bytes));
  EXPECT_EQ(checkpoint::serialize(back.to_container()), bytes);
  EXPECT_EQ(back.config().vocab, m.config().vocab);
}

TEST(ModelCheckpoint, MissingOrMisshapedParameterFails) {
  const Model m(tiny_model_config(), 9);
  auto c = m.to_container();
  c.records.pop_back();
  EXPECT_THROW(Model::from_container(c), std::invalid_argument);
  auto d = m.to_container();
  d.records[0].shape.push_back(1);
  EXPECT_THROW(Model::from_container(d), std::invalid_argument);
}

TEST(ModelProperty, FullObjectiveGradientsMatchFiniteDifferences) {
  Model m(tiny_model_config(), 21);
  auto batch = testing::make_batch(m, 3);
  trainer::TrainConfig cfg;
  const auto rep = testing::check_gradients(
      [&] { return trainer::compute_losses(m, batch->batch, cfg).total; }, m.params().all());
  EXPECT_TRUE(rep.ok()) << rep.worst << " checked " << rep.checked << " skipped " << rep.skipped;
  EXPECT_GT(rep.checked, rep.skipped);
}

}  // namespace
}  // namespace aerialtext::model
