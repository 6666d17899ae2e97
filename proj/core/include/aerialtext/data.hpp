// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic aerial scenes: a place ("class") is a fixed layout of colored
// structures; each scene is one platform view of a place, paired with three
// global descriptions and two or three region (bbox, text) annotations.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aerialtext/geometry.hpp"
#include "aerialtext/image.hpp"
#include "aerialtext/util.hpp"

namespace aerialtext::data {

using geometry::BBox;

enum class ObjectShape { Block, Tower, Dome, Lot, Road };
enum class Color { Red, Green, Blue, Yellow, Orange, Purple, White, Black };
enum class Platform { Drone, Satellite, Ground };

inline constexpr int kNumShapes = 5;
inline constexpr int kNumColors = 8;

std::string_view to_string(ObjectShape s);
std::string_view to_string(Color c);
std::string_view to_string(Platform p);
std::optional<Platform> parse_platform(std::string_view s);
Rgb color_rgb(Color c);

struct SceneObject {
  ObjectShape shape = ObjectShape::Block;
  Color color = Color::Red;
  BBox bbox;
  int salience = 1;  // 1 = most salient (largest)
};

struct Region {
  BBox bbox;
  std::string text;
  friend bool operator==(const Region&, const Region&) = default;
};

struct Sample {
  std::string image_id;
  std::int64_t class_id = 0;
  Platform platform = Platform::Drone;
  std::string image_path;
  std::vector<std::string> global_descriptions;
  std::vector<Region> regions;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct GenConfig {
  int image_size = 64;
  int min_objects = 3;
  int max_objects = 4;
  double p_three_regions = 0.62;
  int views_per_class = 2;
  double max_pair_iou = 0.1;
  int max_retries = 200;
  double view_jitter = 0.02;

  static GenConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  void validate() const;
};

struct Scene {
  Sample sample;
  std::vector<SceneObject> objects;   // sorted by salience
  std::vector<int> region_objects;    // object index per region
  std::vector<int> region_reference;  // reference object per region, -1 = frame
  Image image;
};

/// Pure function of (seed, cfg). Throws std::runtime_error naming the seed
/// when the layout cannot be placed within the retry budget.
Scene generate_scene(std::uint64_t seed, const GenConfig& cfg);

Image render(std::span<const SceneObject> objects, int size);

struct Corpus {
  std::vector<Sample> samples;
  std::vector<Image> images;
};

/// Scene seeds for a split: train seeds start at base_seed * 2^24 aligned to
/// the class stride; gallery seeds start at the next class boundary after the
/// train range, so the splits never share a class.
std::vector<std::uint64_t> split_seeds(std::uint64_t base_seed, std::size_t n_train,
                                       std::size_t n_gallery, const GenConfig& cfg,
                                       bool gallery);
Corpus generate_corpus(std::span<const std::uint64_t> seeds, const GenConfig& cfg);

/// Writes `<dir>/<name>.jsonl` plus `<dir>/images/*.ppm`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir, const std::string& name);
/// Loads samples and decodes their PPM images relative to the file's directory.
Corpus load_corpus(const std::filesystem::path& jsonl_path);

std::string to_json_line(const Sample& s);
void write_jsonl(std::span<const Sample> samples, const std::filesystem::path& path);
std::vector<Sample> parse_jsonl(std::string_view contents);  // errors carry line numbers
std::vector<Sample> read_jsonl(const std::filesystem::path& path);

struct DatasetStats {
  std::size_t images = 0;
  std::size_t descriptions = 0;
  std::size_t bbox_texts = 0;
  std::size_t classes = 0;
  double mean_words_per_description = 0;
  double mean_words_per_region_text = 0;
  double mean_regions_per_image = 0;
};

struct Violation {
  std::size_t line = 0;  // 1-based JSONL line
  std::string image_id;
  std::string reason;
};

struct StatBands {
  double regions_lo = 2.57;
  double regions_hi = 2.67;
  double description_words_lo = 35.0;
  double description_words_hi = 105.0;
  double region_words_lo = 10.8;
  double region_words_hi = 32.4;
};

struct ValidationReport {
  DatasetStats stats;
  std::vector<Violation> violations;
  std::vector<std::string> drift_flags;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(std::span<const Sample> samples, const StatBands& bands = {});

/// Every word the caption templates can emit.
const std::vector<std::string>& vocabulary();

}  // namespace aerialtext::data
