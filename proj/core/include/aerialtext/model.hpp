// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale dual encoder with shared-weight cross-attention fusion and the
// grounding, spatial-relation, and matching heads. All attention is
// single-head; attention inputs are row-normalized to norm sqrt(d).

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aerialtext/autodiff.hpp"
#include "aerialtext/checkpoint.hpp"
#include "aerialtext/geometry.hpp"
#include "aerialtext/image.hpp"
#include "aerialtext/util.hpp"

namespace aerialtext::model {

using ad::Tensor;
using geometry::BBox;

struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int cross_blocks = 2;  // 6 in the full-scale architecture
  int mlp_hidden = 128;
  int max_tokens = 96;
  double temperature_init = 0.07;
  std::vector<std::string> vocab;  // index 0 is reserved for unknown words

  static ModelConfig defaults();  // vocab from the caption templates
  static ModelConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  void validate() const;
  int grid() const { return image_size / patch_size; }
};

inline constexpr const char* kUnknownToken = "<unk>";
inline constexpr double kMinTemperature = 1e-3;

/// Named parameter store; iteration order is the sorted name order.
class Params {
 public:
  void add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const std::map<std::string, Tensor>& all() const { return tensors_; }
  std::map<std::string, Tensor>& all() { return tensors_; }
  std::size_t element_count() const;
  void zero_grad();
  bool all_finite() const;

 private:
  std::map<std::string, Tensor> tensors_;
};

struct FeatureMap {
  Tensor features;  // [grid_rows * grid_cols, d], row-major over cells
  int grid_rows = 0;
  int grid_cols = 0;
};

struct ImageEncoding {
  Tensor embedding;  // [1, d], unit norm
  FeatureMap map;
};

struct TextEncoding {
  Tensor embedding;  // [1, d], unit norm
  Tensor tokens;     // [L + 1, d]; row 0 is the learned query slot
};

/// Image-side keys and values for every fusion block, computed once per image
/// and shared by every text fused against it.
struct FusionMemory {
  std::vector<Tensor> keys_t;  // [d, G] per block
  std::vector<Tensor> values;  // [G, d] per block
};

struct Fused {
  Tensor tokens;  // [L + 1, d]
  Tensor pooled;  // [1, d], mean over text positions
  Tensor query;   // [1, d], fused query slot
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);
  Model(ModelConfig cfg, Params params);

  const ModelConfig& config() const { return cfg_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  /// Vocabulary ids, unknown words mapped to 0, truncated to max_tokens - 1.
  std::vector<std::size_t> token_ids(std::span<const std::string> words) const;
  std::vector<std::size_t> tokenize(std::string_view text) const;

  /// Rows of flattened patches scaled to [-0.5, 0.5]; throws when the image
  /// size does not match the configured, patch-divisible size.
  Tensor patches(const Image& image) const;
  /// Patch projection before positional embedding and attention.
  Tensor patch_embeddings(const Tensor& patches) const;
  ImageEncoding encode_image(const Image& image) const;
  ImageEncoding encode_patches(const Tensor& patches) const;

  /// A learned query row is prepended to the token embeddings.
  TextEncoding encode_text(std::span<const std::size_t> ids) const;

  FusionMemory prepare_memory(const FeatureMap& map) const;
  Fused fuse(const FusionMemory& memory, const Tensor& text_tokens) const;

  /// Rows of query embeddings -> rows of (cx, cy, w, h) in (0, 1).
  Tensor ground_head(const Tensor& queries) const;
  Tensor roi_pool(const FeatureMap& map, const BBox& box) const;
  /// Rows of ordered pairs -> [P, 9] logits.
  Tensor spatial_head(const Tensor& first, const Tensor& second) const;
  /// Rows of pooled cross embeddings -> [M, 1] match probabilities.
  Tensor itm_head(const Tensor& pooled) const;
  /// exp(log tau), with log tau clamped so tau >= kMinTemperature.
  Tensor temperature() const;

  checkpoint::Container to_container() const;
  static Model from_container(const checkpoint::Container& c);

 private:
  Tensor linear(const Tensor& x, const std::string& prefix) const;
  Tensor rms(const Tensor& x) const;
  Tensor self_attention(const Tensor& x, const std::string& prefix) const;
  Tensor mlp(const Tensor& x, const std::string& prefix) const;

  ModelConfig cfg_;
  Params params_;
  std::map<std::string, std::size_t> vocab_index_;
};

/// Cosine similarity of two rows; throws on a zero vector.
double similarity(std::span<const double> v, std::span<const double> t);

/// Indices of grid cells pooled for `box` (cell centers inside the closed box,
/// else the single cell containing its center).
std::vector<std::size_t> roi_cells(int grid_rows, int grid_cols, const BBox& box);

}  // namespace aerialtext::model
