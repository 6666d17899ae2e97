// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bidirectional Recall@K retrieval, grounding and spatial-relation accuracy,
// image rotation, and the loss / lambda / rotation ablation harness.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aerialtext/data.hpp"
#include "aerialtext/model.hpp"
#include "aerialtext/trainer.hpp"

namespace aerialtext::eval {

using geometry::BBox;

enum class Direction { TextToImage, ImageToText };
std::string_view to_string(Direction d);

/// Gallery indices by descending score; equal scores keep the lower index
/// first.
std::vector<std::size_t> rank(std::span<const double> scores);

/// Fraction of queries whose top `k` contains an item of the query's class.
/// Throws when k is 0 or exceeds the gallery size.
double recall_at_k(std::span<const std::vector<std::size_t>> rankings,
                   std::span<const std::int64_t> query_classes,
                   std::span<const std::int64_t> gallery_classes, std::size_t k);

struct Ranking {
  Direction direction = Direction::TextToImage;
  std::size_t query = 0;
  std::int64_t query_class = 0;
  std::vector<std::size_t> ids;  // full gallery order
  std::vector<double> scores;    // aligned with ids, non-increasing
};

struct RecallSet {
  double r1 = 0, r5 = 0, r10 = 0;
};

struct RetrievalReport {
  RecallSet text_to_image;
  RecallSet image_to_text;
  std::vector<Ranking> rankings;  // filled only when requested
};

/// Unit embeddings of every gallery image and every global description.
struct EmbeddedGallery {
  std::vector<std::vector<double>> images;
  std::vector<std::int64_t> image_classes;
  std::vector<std::vector<double>> texts;
  std::vector<std::int64_t> text_classes;
};

/// Images are rotated by `rotation` degrees before encoding. Work is split
/// over `jobs` threads; the result does not depend on `jobs`.
EmbeddedGallery embed_gallery(const model::Model& model, const data::Corpus& gallery,
                              int rotation = 0, int jobs = 1);

/// Recall at K in {1, 5, 10}; K is capped at the gallery size.
RetrievalReport evaluate_retrieval(const EmbeddedGallery& g, bool keep_rankings = false);
RetrievalReport evaluate_retrieval(const model::Model& model, const data::Corpus& gallery,
                                   int rotation = 0, int jobs = 1);

struct GroundingResult {
  double mean_iou = 0;
  double accuracy = 0;  // fraction with IoU >= 0.5
  std::size_t count = 0;
};
/// Throws on empty input or mismatched lengths.
GroundingResult grounding_eval(std::span<const BBox> truth, std::span<const BBox> predicted);
std::vector<BBox> predict_boxes(const model::Model& model, const data::Corpus& corpus,
                                int jobs = 1);
GroundingResult grounding_eval(const model::Model& model, const data::Corpus& corpus, int jobs = 1);

struct SpatialResult {
  double accuracy = 0;
  std::array<std::array<std::size_t, 9>, 9> confusion{};  // [truth][predicted]
  std::size_t count = 0;
};
SpatialResult spatial_eval(std::span<const int> truth, std::span<const int> predicted);
/// Region features are pooled from ground-truth boxes; every ordered pair
/// of regions is classified.
SpatialResult spatial_eval(const model::Model& model, const data::Corpus& corpus, int jobs = 1);

/// Square images only. 90/180/270 are exact clockwise permutations; 15 uses
/// nearest-neighbour sampling about the center with background fill; 0 is the
/// identity. Other angles throw.
Image rotate_image(const Image& image, int degrees);
data::Corpus rotate_corpus(const data::Corpus& corpus, int degrees);

inline constexpr std::array<int, 5> kRotationGrid = {0, 15, 90, 180, 270};
inline constexpr std::array<double, 4> kLambdaGrid = {1.0, 0.5, 0.1, 0.05};

struct Variant {
  std::string name;
  double lambda = 0.1;
  bool grounding = true;
  bool spatial = true;
};
/// baseline (lambda 0), +grounding, +spatial, full.
std::vector<Variant> loss_variants(double lambda);
/// Full objective at every lambda in kLambdaGrid.
std::vector<Variant> lambda_variants();

struct AblationSetup {
  model::ModelConfig model;
  trainer::TrainConfig train;  // seed is overridden per run
  const data::Corpus* train_corpus = nullptr;
  const data::Corpus* gallery = nullptr;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  std::function<void(const std::string&)> log;
  /// Called with each trained model before it is evaluated.
  std::function<void(const std::string& variant, std::uint64_t seed, const model::Model&)>
      on_trained;
};

struct AblationRow {
  std::string name;
  RetrievalReport mean;
  std::vector<RetrievalReport> per_seed;
};

struct AblationReport {
  std::string title;
  std::vector<AblationRow> rows;
};

/// Trains and evaluates each variant for each seed. A failing run aborts
/// with the variant and seed named.
AblationReport run_ablation(std::span<const Variant> variants, const AblationSetup& setup);
/// Trains the full objective once per seed and evaluates it with the gallery
/// rotated by each angle.
AblationReport run_rotation(std::span<const int> degrees, const AblationSetup& setup);
/// Same table for one already-trained model.
AblationReport rotation_table(const model::Model& m, const data::Corpus& gallery,
                              std::span<const int> degrees, int jobs = 1);

std::string to_csv(const AblationReport& report);
std::string to_text_table(const AblationReport& report);
std::string rankings_jsonl(std::span<const Ranking> rankings, std::size_t top = 10);

}  // namespace aerialtext::eval
