// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "fixtures.hpp"

namespace aerialtext::trainer {
namespace {

using testing::tiny_gen_config;
using testing::tiny_model_config;

std::string bytes_of(const model::Model& m) { return checkpoint::serialize(m.to_container()); }

data::Corpus tiny_corpus(std::size_t n) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < n; ++s) seeds.push_back(s);
  return data::generate_corpus(seeds, tiny_gen_config());
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 5;
  return c;
}

TEST(TrainConfig, DefaultsAndRoundTrip) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda, 0.1);
  EXPECT_EQ(c.weight_decay, 0.01);
  EXPECT_EQ(c.brightness_delta, 0.1);
  EXPECT_EQ(TrainConfig::kPaperLearningRate, 3e-5);
  auto kv = tiny_train_config().to_kv();
  EXPECT_EQ(TrainConfig::from_kv(kv).to_kv().values(), kv.values());
  kv.set("learning_rate_typo", "1");
  EXPECT_THROW(TrainConfig::from_kv(kv), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.lambda = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  model::Model m(tiny_model_config(), 1);
  auto batch = testing::make_batch(m, 1, 3);
  TrainConfig cfg;
  cfg.lr = 0;
  AdamState state;
  const auto before = bytes_of(m);
  const auto metrics = train_step(m, state, batch->batch, cfg);
  EXPECT_EQ(bytes_of(m), before);
  EXPECT_GT(metrics.itc, 0.0);
  EXPECT_GT(metrics.itm, 0.0);
  EXPECT_GT(metrics.grounding, 0.0);
  EXPECT_GT(metrics.spatial, 0.0);
  EXPECT_DOUBLE_EQ(metrics.total, losses::total_loss(metrics.itc, metrics.itm, metrics.grounding,
                                                     metrics.spatial, cfg.lambda));
}

TEST(TrainStep, BitReproducible) {
  model::Model a(tiny_model_config(), 2), b(tiny_model_config(), 2);
  auto batch = testing::make_batch(a, 2, 3);
  AdamState sa, sb;
  const TrainConfig cfg;
  const auto ma = train_step(a, sa, batch->batch, cfg);
  const auto mb = train_step(b, sb, batch->batch, cfg);
  EXPECT_EQ(ma.total, mb.total);
  EXPECT_EQ(bytes_of(a), bytes_of(b));
  EXPECT_NE(bytes_of(a), bytes_of(model::Model(tiny_model_config(), 2)));
}

TEST(TrainStep, NonFiniteLossNamesComponentsAndKeepsParameters) {
  model::Model m(tiny_model_config(), 3);
  auto batch = testing::make_batch(m, 3, 2);
  m.params().get("ground.fc2.bias").mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  const auto before = bytes_of(m);
  AdamState state;
  try {
    train_step(m, state, batch->batch, TrainConfig{});
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    EXPECT_EQ(what.rfind("non-finite loss at step 0: itc=", 0), 0u) << what;
    EXPECT_NE(what.find("grounding=nan"), std::string::npos) << what;
  }
  EXPECT_EQ(bytes_of(m), before);
  EXPECT_EQ(state.step, 0u);
}

TEST(AdamW, ScalarHandFormula) {
  model::Params params;
  const double theta0 = 0.8;
  params.add("w", Tensor::scalar(theta0, true));
  params.add("log_tau", Tensor::scalar(theta0, true));
  for (auto* name : {"w", "log_tau"}) params.get(name).mutable_grad()[0] = 1.0;
  TrainConfig cfg;
  cfg.lr = 0.01;
  AdamState state;
  adamw_update(params, state, cfg);
  const double step = cfg.lr * (1.0 / (1.0 + cfg.eps));
  EXPECT_NEAR(params.get("w").item(), theta0 - step - cfg.lr * cfg.weight_decay * theta0, 1e-15);
  EXPECT_NEAR(params.get("log_tau").item(), theta0 - step, 1e-15);  // not decayed
  EXPECT_EQ(state.step, 1u);
}

TEST(Augment, ZeroDeltaIsIdentity) {
  const auto img = data::generate_scene(1, tiny_gen_config()).image;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(augment(img, s, 0.0), img);
}

TEST(Augment, IdentityOrUniformBrightness) {
  Image img(4, 4, {200, 100, 250});
  std::size_t identity = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto out = augment(img, s, 0.1);
    EXPECT_EQ(out, augment(img, s, 0.1));
    EXPECT_EQ(out.width, img.width);
    if (out == img) {
      ++identity;
      continue;
    }
    const double f = out.rgb[1] / 100.0;
    EXPECT_GE(f, 0.895);
    EXPECT_LE(f, 1.105);
    for (std::size_t i = 0; i < out.rgb.size(); i += 3) EXPECT_EQ(out.rgb[i + 1], out.rgb[1]);
  }
  EXPECT_NEAR(static_cast<double>(identity) / 400.0, 0.5, 0.1);
}

TEST(Metrics, CsvFormat) {
  EXPECT_EQ(metrics_csv_header(), "step,itc,itm,grounding,spatial,total,lr");
  StepMetrics m{3, 1.5, 0.5, 0.25, 2, 2.225, 0.001};
  EXPECT_EQ(to_csv_row(m), "3,1.5,0.5,0.25,2,2.225,0.001");
}

TEST(Trainer, BatchesAreDropLastAndDeterministic) {
  const auto corpus = tiny_corpus(10);
  const Trainer t(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  EXPECT_EQ(t.steps_per_epoch(), 2u);
  EXPECT_EQ(t.total_steps(), 4u);
  const auto a = t.batch_for(3), b = t.batch_for(3);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sample, b[i].sample);
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].description, b[i].description);
  }
}

TEST(Trainer, FullRunDeterministic) {
  const auto corpus = tiny_corpus(10);
  Trainer a(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  Trainer b(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  const auto ma = a.train(), mb = b.train();
  ASSERT_EQ(ma.size(), 4u);
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(to_csv_row(ma[i]), to_csv_row(mb[i]));
  EXPECT_EQ(checkpoint::serialize(a.to_container()), checkpoint::serialize(b.to_container()));
}

TEST(Trainer, CheckpointRoundTripBytes) {
  const auto corpus = tiny_corpus(10);
  Trainer t(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  t.step_once();
  const auto path = std::filesystem::temp_directory_path() / "aerialtext_trainer_test.bin";
  t.save(path);
  const auto back = Trainer::load(path, corpus);
  EXPECT_EQ(checkpoint::serialize(back.to_container()), read_file(path));
  EXPECT_EQ(back.step(), 1u);
  EXPECT_EQ(back.config().seed, 5u);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto corpus = tiny_corpus(10);
  Trainer full(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  const auto reference = full.train();

  Trainer first(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  first.set_epochs(1);
  auto trace = first.train();
  const auto bytes = checkpoint::serialize(first.to_container());
  Trainer resumed = Trainer::from_container(checkpoint::deserialize(bytes), corpus);
  resumed.set_epochs(2);
  const auto rest = resumed.train();
  trace.insert(trace.end(), rest.begin(), rest.end());
  ASSERT_EQ(trace.size(), reference.size());
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(to_csv_row(trace[i]), to_csv_row(reference[i]));
  EXPECT_EQ(checkpoint::serialize(resumed.to_container()), checkpoint::serialize(full.to_container()));
}

TEST(Trainer, CorruptCheckpointFails) {
  const auto corpus = tiny_corpus(10);
  const Trainer t(model::Model(tiny_model_config(), 1), tiny_train_config(), corpus);
  auto bytes = checkpoint::serialize(t.to_container());
  EXPECT_THROW(checkpoint::deserialize(bytes.substr(0, 20)), std::runtime_error);
  auto c = checkpoint::deserialize(bytes);
  c.header = KeyValueConfig::parse("garbage=1\n");
  EXPECT_THROW(Trainer::from_container(c, corpus), std::exception);
}

TEST(TrainerProperty, LossHalvesWithinTenEpochs) {
  const data::GenConfig gen;
  const auto seeds = data::split_seeds(0, 512, 64, gen, false);
  const auto corpus = data::generate_corpus(seeds, gen);
  TrainConfig cfg;
  cfg.epochs = 10;
  Trainer t(model::Model(model::ModelConfig::defaults(), 0), cfg, corpus);
  const auto trace = t.train();
  const std::size_t spe = t.steps_per_epoch();
  double first = 0, last = 0;
  for (std::size_t i = 0; i < spe; ++i) {
    first += trace[i].total;
    last += trace[trace.size() - spe + i].total;
  }
  EXPECT_LE(last, 0.5 * first) << "first epoch " << first / spe << ", tenth " << last / spe;
}

}  // namespace
}  // namespace aerialtext::trainer
