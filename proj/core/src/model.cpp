// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aerialtext/data.hpp"
#include "aerialtext/text.hpp"

namespace aerialtext::model {

namespace {

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

struct ParamSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  double bound;
};

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto h = static_cast<std::size_t>(cfg.mlp_hidden);
  const auto p = static_cast<std::size_t>(cfg.patch_size);
  const auto g = static_cast<std::size_t>(cfg.grid());
  const std::size_t patch_dim = 3 * p * p;
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  std::vector<ParamSpec> s;
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    s.push_back({prefix + ".weight", in, out, bound(in)});
    s.push_back({prefix + ".bias", 1, out, bound(in)});
  };
  auto attention = [&](const std::string& prefix) {
    for (const char* m : {"q", "k", "v", "o"}) s.push_back({prefix + "." + m, d, d, bound(d)});
  };
  linear("image.patch1", patch_dim, d);
  linear("image.patch2", d, d);
  s.push_back({"image.pos", g * g, d, bound(d)});
  attention("image.attn");
  s.push_back({"image.proj", d, d, bound(d)});
  s.push_back({"text.embed", cfg.vocab.size() + 1, d, bound(d)});
  s.push_back({"text.query", 1, d, bound(d)});
  s.push_back({"text.pos", static_cast<std::size_t>(cfg.max_tokens), d, bound(d)});
  linear("text.conv", 2 * d, d);
  attention("text.attn");
  s.push_back({"text.proj", d, d, bound(d)});
  for (int b = 0; b < cfg.cross_blocks; ++b) attention("fuse." + std::to_string(b));
  linear("ground.fc1", d, h);
  linear("ground.fc2", h, 4);
  linear("spatial.fc1", 2 * d, h);
  linear("spatial.fc2", h, 9);
  linear("itm.fc1", d, h);
  linear("itm.fc2", h, 1);
  return s;
}

}  // namespace

// ---- config -----------------------------------------------------------------

ModelConfig ModelConfig::defaults() {
  ModelConfig c;
  c.vocab = data::vocabulary();
  return c;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) {
  ModelConfig c = defaults();
  c.image_size = static_cast<int>(kv.get_int("image_size", c.image_size));
  c.patch_size = static_cast<int>(kv.get_int("patch_size", c.patch_size));
  c.embed_dim = static_cast<int>(kv.get_int("embed_dim", c.embed_dim));
  c.cross_blocks = static_cast<int>(kv.get_int("cross_blocks", c.cross_blocks));
  c.mlp_hidden = static_cast<int>(kv.get_int("mlp_hidden", c.mlp_hidden));
  c.max_tokens = static_cast<int>(kv.get_int("max_tokens", c.max_tokens));
  c.temperature_init = kv.get_double("temperature_init", c.temperature_init);
  if (kv.has("vocab")) c.vocab = kv.get_list("vocab", {});
  c.validate();
  return c;
}

KeyValueConfig ModelConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("image_size", std::to_string(image_size));
  kv.set("patch_size", std::to_string(patch_size));
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("cross_blocks", std::to_string(cross_blocks));
  kv.set("mlp_hidden", std::to_string(mlp_hidden));
  kv.set("max_tokens", std::to_string(max_tokens));
  kv.set("temperature_init", format_double(temperature_init));
  kv.set("vocab", join(vocab, ','));
  return kv;
}

void ModelConfig::validate() const {
  if (patch_size < 1 || image_size < patch_size || image_size % patch_size != 0) {
    throw std::invalid_argument("model config: image_size " + std::to_string(image_size) +
                                " must be divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim < 2 || embed_dim % 2 != 0) {
    throw std::invalid_argument("model config: embed_dim must be even and >= 2");
  }
  if (cross_blocks < 0) throw std::invalid_argument("model config: cross_blocks must be >= 0");
  if (mlp_hidden < 1) throw std::invalid_argument("model config: mlp_hidden must be >= 1");
  if (max_tokens < 2) throw std::invalid_argument("model config: max_tokens must be >= 2");
  if (!(temperature_init >= kMinTemperature)) {
    throw std::invalid_argument("model config: temperature_init must be >= 1e-3");
  }
}

// ---- params -------------------------------------------------------------------

void Params::add(const std::string& name, Tensor t) {
  if (!tensors_.emplace(name, std::move(t)).second) {
    throw std::invalid_argument("params: duplicate name " + name);
  }
}

const Tensor& Params::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("params: no parameter " + name);
  return it->second;
}

Tensor& Params::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("params: no parameter " + name);
  return it->second;
}

std::size_t Params::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void Params::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

bool Params::all_finite() const {
  for (const auto& [name, t] : tensors_) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---- model --------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(mix_seed(init_seed, 0x9a7a));
  for (const auto& spec : param_specs(cfg_)) {
    std::vector<double> v(spec.rows * spec.cols);
    for (auto& x : v) x = rng.uniform(-spec.bound, spec.bound);
    params_.add(spec.name, Tensor({spec.rows, spec.cols}, std::move(v), true));
  }
  params_.add("log_tau", Tensor::scalar(std::log(cfg_.temperature_init), true));
  for (std::size_t i = 0; i < cfg_.vocab.size(); ++i) vocab_index_.emplace(cfg_.vocab[i], i + 1);
}

Model::Model(ModelConfig cfg, Params params) : Model(std::move(cfg), 0) {
  for (auto& [name, t] : params_.all()) {
    if (!params.contains(name)) throw std::invalid_argument("model: missing parameter " + name);
    const Tensor& src = params.get(name);
    if (src.shape() != t.shape()) {
      throw std::invalid_argument("model: parameter " + name + " has shape " +
                                  ad::shape_str(src.shape()) + ", expected " +
                                  ad::shape_str(t.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
  if (params.all().size() != params_.all().size()) {
    throw std::invalid_argument("model: unexpected extra parameters");
  }
}

std::vector<std::size_t> Model::token_ids(std::span<const std::string> words) const {
  std::vector<std::size_t> ids;
  const auto limit = static_cast<std::size_t>(cfg_.max_tokens - 1);
  for (const auto& w : words) {
    if (ids.size() == limit) break;
    auto it = vocab_index_.find(w);
    ids.push_back(it == vocab_index_.end() ? 0 : it->second);
  }
  return ids;
}

std::vector<std::size_t> Model::tokenize(std::string_view text) const {
  return token_ids(text::tokenize_words(text));
}

Tensor Model::linear(const Tensor& x, const std::string& prefix) const {
  return ad::add(ad::matmul(x, params_.get(prefix + ".weight")), params_.get(prefix + ".bias"));
}

Tensor Model::mlp(const Tensor& x, const std::string& prefix) const {
  return linear(ad::relu(linear(x, prefix + ".fc1")), prefix + ".fc2");
}

// Rows rescaled to norm sqrt(d) before any projection that feeds attention.
// Without it the fused query drifts in scale and the grounding head stalls.
Tensor Model::rms(const Tensor& x) const {
  return ad::scale(ad::l2_normalize_rows(x), std::sqrt(static_cast<double>(cfg_.embed_dim)));
}

Tensor Model::self_attention(const Tensor& x, const std::string& prefix) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
  const Tensor n = rms(x);
  const Tensor q = ad::matmul(n, params_.get(prefix + ".q"));
  const Tensor k = ad::matmul(n, params_.get(prefix + ".k"));
  const Tensor v = ad::matmul(n, params_.get(prefix + ".v"));
  const Tensor attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d));
  return ad::add(x, ad::matmul(ad::matmul(attn, v), params_.get(prefix + ".o")));
}

Tensor Model::patches(const Image& image) const {
  const int size = cfg_.image_size;
  const int p = cfg_.patch_size;
  if (image.width != size || image.height != size) {
    throw std::invalid_argument("encode_image: expected a " + std::to_string(size) + "x" +
                                std::to_string(size) + " image (side divisible by patch size " +
                                std::to_string(p) + "), got " + std::to_string(image.width) +
                                "x" + std::to_string(image.height));
  }
  const int g = size / p;
  const auto patch_dim = static_cast<std::size_t>(3 * p * p);
  std::vector<double> out(static_cast<std::size_t>(g * g) * patch_dim);
  std::size_t k = 0;
  for (int gr = 0; gr < g; ++gr) {
    for (int gc = 0; gc < g; ++gc) {
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          const auto* px = image.pixel(gc * p + x, gr * p + y);
          for (int ch = 0; ch < 3; ++ch) out[k++] = px[ch] / 255.0 - 0.5;
        }
      }
    }
  }
  return Tensor({static_cast<std::size_t>(g * g), patch_dim}, std::move(out));
}

Tensor Model::patch_embeddings(const Tensor& patches) const {
  return linear(ad::relu(linear(patches, "image.patch1")), "image.patch2");
}

ImageEncoding Model::encode_image(const Image& image) const { return encode_patches(patches(image)); }

ImageEncoding Model::encode_patches(const Tensor& patch_rows) const {
  const Tensor x = ad::add(patch_embeddings(patch_rows), params_.get("image.pos"));
  ImageEncoding enc;
  enc.map.features = self_attention(x, "image.attn");
  enc.map.grid_rows = cfg_.grid();
  enc.map.grid_cols = cfg_.grid();
  enc.embedding = ad::l2_normalize_rows(
      ad::matmul(ad::mean_rows(enc.map.features), params_.get("image.proj")));
  return enc;
}

TextEncoding Model::encode_text(std::span<const std::size_t> ids) const {
  if (ids.empty()) throw std::invalid_argument("encode_text: empty token list");
  if (ids.size() >= static_cast<std::size_t>(cfg_.max_tokens)) {
    throw std::invalid_argument("encode_text: more than max_tokens - 1 tokens");
  }
  const std::size_t len = ids.size() + 1;
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const std::vector<Tensor> rows = {params_.get("text.query"),
                                    ad::gather_rows(params_.get("text.embed"), ids)};
  const Tensor emb = ad::add(ad::concat(rows, 0), ad::slice_rows(params_.get("text.pos"), 0, len));
  // Each position also sees its left neighbour (zero before the first token).
  std::vector<Tensor> shifted_parts = {Tensor::zeros({1, d})};
  if (len > 1) shifted_parts.push_back(ad::slice_rows(emb, 0, len - 1));
  const Tensor shifted = ad::concat(shifted_parts, 0);
  const std::vector<Tensor> pair = {emb, shifted};
  const Tensor local = ad::relu(linear(ad::concat(pair, 1), "text.conv"));
  TextEncoding enc;
  enc.tokens = self_attention(ad::add(emb, local), "text.attn");
  enc.embedding =
      ad::l2_normalize_rows(ad::matmul(ad::mean_rows(enc.tokens), params_.get("text.proj")));
  return enc;
}

FusionMemory Model::prepare_memory(const FeatureMap& map) const {
  FusionMemory mem;
  for (int b = 0; b < cfg_.cross_blocks; ++b) {
    const std::string prefix = "fuse." + std::to_string(b);
    const Tensor n = rms(map.features);
    mem.keys_t.push_back(ad::transpose(ad::matmul(n, params_.get(prefix + ".k"))));
    mem.values.push_back(ad::matmul(n, params_.get(prefix + ".v")));
  }
  return mem;
}

Fused Model::fuse(const FusionMemory& memory, const Tensor& text_tokens) const {
  if (text_tokens.cols() != static_cast<std::size_t>(cfg_.embed_dim)) {
    throw ad::ShapeError("fuse: token features have width " + std::to_string(text_tokens.cols()) +
                         ", expected " + std::to_string(cfg_.embed_dim));
  }
  if (memory.keys_t.size() != static_cast<std::size_t>(cfg_.cross_blocks)) {
    throw ad::ShapeError("fuse: memory was prepared for a different block count");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
  Tensor x = text_tokens;
  for (int b = 0; b < cfg_.cross_blocks; ++b) {
    const std::string prefix = "fuse." + std::to_string(b);
    const Tensor q = ad::matmul(rms(x), params_.get(prefix + ".q"));
    const Tensor attn =
        ad::softmax_rows(ad::scale(ad::matmul(q, memory.keys_t[static_cast<std::size_t>(b)]), inv_sqrt_d));
    x = ad::add(x, ad::matmul(ad::matmul(attn, memory.values[static_cast<std::size_t>(b)]),
                              params_.get(prefix + ".o")));
  }
  return {x, ad::mean_rows(x), ad::slice_rows(x, 0, 1)};
}

Tensor Model::ground_head(const Tensor& queries) const { return ad::sigmoid(mlp(queries, "ground")); }

Tensor Model::roi_pool(const FeatureMap& map, const BBox& box) const {
  geometry::require_valid(box);
  const auto cells = roi_cells(map.grid_rows, map.grid_cols, box);
  return ad::mean_rows(ad::gather_rows(map.features, cells));
}

Tensor Model::spatial_head(const Tensor& first, const Tensor& second) const {
  const std::vector<Tensor> pair = {first, second};
  return mlp(ad::concat(pair, 1), "spatial");
}

Tensor Model::itm_head(const Tensor& pooled) const { return ad::sigmoid(mlp(pooled, "itm")); }

Tensor Model::temperature() const {
  return ad::exp(ad::maximum(params_.get("log_tau"), Tensor::scalar(std::log(kMinTemperature))));
}

checkpoint::Container Model::to_container() const {
  checkpoint::Container c;
  c.header = cfg_.to_kv();
  for (const auto& [name, t] : params_.all()) {
    checkpoint::Record r;
    r.name = name;
    for (auto d : t.shape()) r.shape.push_back(d);
    r.data.assign(t.data().begin(), t.data().end());
    c.records.push_back(std::move(r));
  }
  return c;
}

Model Model::from_container(const checkpoint::Container& c) {
  KeyValueConfig kv;
  for (const auto& key : {"image_size", "patch_size", "embed_dim", "cross_blocks", "mlp_hidden",
                          "max_tokens", "temperature_init", "vocab"}) {
    kv.set(key, c.header.get(key));
  }
  ModelConfig cfg = ModelConfig::from_kv(kv);
  Params params;
  const auto expected = param_specs(cfg);
  for (const auto& r : c.records) {
    if (r.name.rfind("adam.", 0) == 0) continue;
    ad::Shape shape(r.shape.begin(), r.shape.end());
    params.add(r.name, Tensor(shape, r.data, true));
  }
  (void)expected;
  return Model(std::move(cfg), std::move(params));
}

double similarity(std::span<const double> v, std::span<const double> t) {
  if (v.size() != t.size()) throw std::invalid_argument("similarity: length mismatch");
  double dot = 0, nv = 0, nt = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * t[i];
    nv += v[i] * v[i];
    nt += t[i] * t[i];
  }
  if (nv == 0.0 || nt == 0.0) throw std::invalid_argument("similarity: zero vector");
  return dot / (std::sqrt(nv) * std::sqrt(nt));
}

std::vector<std::size_t> roi_cells(int grid_rows, int grid_cols, const BBox& box) {
  std::vector<std::size_t> cells;
  for (int r = 0; r < grid_rows; ++r) {
    const double y = (r + 0.5) / grid_rows;
    if (std::fabs(y - box.cy) > box.h / 2) continue;
    for (int c = 0; c < grid_cols; ++c) {
      const double x = (c + 0.5) / grid_cols;
      if (std::fabs(x - box.cx) <= box.w / 2) {
        cells.push_back(static_cast<std::size_t>(r * grid_cols + c));
      }
    }
  }
  if (cells.empty()) {
    const int c = std::min(static_cast<int>(box.cx * grid_cols), grid_cols - 1);
    const int r = std::min(static_cast<int>(box.cy * grid_rows), grid_rows - 1);
    cells.push_back(static_cast<std::size_t>(r * grid_cols + c));
  }
  return cells;
}

}  // namespace aerialtext::model
