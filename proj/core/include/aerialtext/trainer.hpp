// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded training loop. Every random choice of step s (batch order, caption
// choice, brightness) is a function of (seed, s) alone, so a run resumed from
// a checkpoint replays the uninterrupted run exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aerialtext/checkpoint.hpp"
#include "aerialtext/data.hpp"
#include "aerialtext/losses.hpp"
#include "aerialtext/model.hpp"

namespace aerialtext::trainer {

using ad::Tensor;

struct TrainConfig {
  // Desk-scale default; the large-backbone value is kPaperLearningRate.
  static constexpr double kPaperLearningRate = 3e-5;

  double lambda = 0.1;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int epochs = 50;
  std::uint64_t seed = 0;
  double brightness_delta = 0.1;
  bool use_grounding = true;
  bool use_spatial = true;

  static TrainConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  void validate() const;
};

/// Token ids and geometry of one sample, computed once per corpus.
struct PreparedSample {
  const data::Sample* sample = nullptr;
  const Image* image = nullptr;
  std::vector<std::vector<std::size_t>> descriptions;
  std::vector<std::vector<std::size_t>> regions;
  std::vector<geometry::BBox> boxes;
  std::vector<losses::SpatialPair> pairs;
};

/// Texts pass through stop-word removal before tokenization. The corpus must
/// outlive the result.
std::vector<PreparedSample> prepare(const model::Model& model, const data::Corpus& corpus);

struct BatchItem {
  const PreparedSample* sample = nullptr;
  Image image;  // after augmentation
  std::size_t description = 0;
};
using Batch = std::vector<BatchItem>;

/// Identity with probability 1/2, otherwise one brightness factor drawn from
/// [1 - delta, 1 + delta] for the whole image. Geometry is never changed.
Image augment(const Image& image, std::uint64_t seed, double delta);

struct LossTerms {
  Tensor itc, itm, grounding, spatial, total;
};
/// Disabled terms (toggle off, or lambda = 0) are constant zeros and are not
/// computed.
LossTerms compute_losses(const model::Model& model, const Batch& batch, const TrainConfig& cfg);

struct StepMetrics {
  std::uint64_t step = 0;
  double itc = 0, itm = 0, grounding = 0, spatial = 0, total = 0, lr = 0;
};
std::string metrics_csv_header();
std::string to_csv_row(const StepMetrics& m);

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// AdamW with decoupled decay; the temperature parameter is not decayed.
void adamw_update(model::Params& params, AdamState& state, const TrainConfig& cfg);

/// One forward/backward/update. Throws std::runtime_error with the loss
/// breakdown when the loss is not finite; parameters are then untouched.
StepMetrics train_step(model::Model& model, AdamState& state, const Batch& batch,
                       const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(model::Model model, TrainConfig cfg, const data::Corpus& corpus);

  const model::Model& model() const { return model_; }
  model::Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const AdamState& optimizer() const { return adam_; }
  std::uint64_t step() const { return adam_.step; }
  std::size_t steps_per_epoch() const;
  std::uint64_t total_steps() const;
  /// Changes the run length, e.g. to continue a resumed run further.
  void set_epochs(int epochs);

  Batch batch_for(std::uint64_t step) const;
  StepMetrics step_once();
  /// Runs until total_steps(), calling `on_step` after each step.
  std::vector<StepMetrics> train(const std::function<void(const StepMetrics&)>& on_step = {});

  checkpoint::Container to_container() const;
  void save(const std::filesystem::path& path) const;
  /// Restores parameters, moments, step counter, and config.
  static Trainer from_container(const checkpoint::Container& c, const data::Corpus& corpus);
  static Trainer load(const std::filesystem::path& path, const data::Corpus& corpus);

 private:
  model::Model model_;
  TrainConfig cfg_;
  AdamState adam_;
  const data::Corpus* corpus_;
  std::vector<PreparedSample> prepared_;
};

}  // namespace aerialtext::trainer
