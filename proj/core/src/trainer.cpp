// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "aerialtext/text.hpp"

namespace aerialtext::trainer {

namespace {

constexpr const char* kTemperatureParam = "log_tau";
constexpr const char* kTrainPrefix = "train.";
constexpr const char* kStepKey = "trainer.step";
constexpr const char* kMomentPrefix = "adam.m.";
constexpr const char* kVariancePrefix = "adam.v.";

std::vector<std::size_t> query_ids(const model::Model& model, std::string_view text) {
  const auto words = text::prepare_text_query(text);
  auto ids = model.token_ids(words);
  if (ids.empty()) throw std::invalid_argument("empty text after preprocessing");
  return ids;
}

checkpoint::Record to_record(const std::string& name, const ad::Shape& shape,
                             std::span<const double> values) {
  checkpoint::Record r;
  r.name = name;
  r.shape.assign(shape.begin(), shape.end());
  r.data.assign(values.begin(), values.end());
  return r;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  kv.require_known({"lambda", "lr", "weight_decay", "beta1", "beta2", "eps", "batch_size",
                    "epochs", "seed", "brightness_delta", "use_grounding", "use_spatial"});
  TrainConfig c;
  c.lambda = kv.get_double("lambda", c.lambda);
  c.lr = kv.get_double("lr", c.lr);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.eps = kv.get_double("eps", c.eps);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.brightness_delta = kv.get_double("brightness_delta", c.brightness_delta);
  c.use_grounding = kv.get_bool("use_grounding", c.use_grounding);
  c.use_spatial = kv.get_bool("use_spatial", c.use_spatial);
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("lambda", format_double(lambda));
  kv.set("lr", format_double(lr));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("eps", format_double(eps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("brightness_delta", format_double(brightness_delta));
  kv.set("use_grounding", use_grounding ? "true" : "false");
  kv.set("use_spatial", use_spatial ? "true" : "false");
  return kv;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("train config: lambda must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train config: betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be > 0");
  if (!(brightness_delta >= 0.0 && brightness_delta < 1.0)) {
    throw std::invalid_argument("train config: brightness_delta must lie in [0,1)");
  }
}

std::vector<PreparedSample> prepare(const model::Model& model, const data::Corpus& corpus) {
  if (corpus.samples.size() != corpus.images.size()) {
    throw std::invalid_argument("prepare: corpus has mismatched sample and image counts");
  }
  std::vector<PreparedSample> out;
  out.reserve(corpus.samples.size());
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    PreparedSample p;
    p.sample = &s;
    p.image = &corpus.images[i];
    try {
      for (const auto& d : s.global_descriptions) p.descriptions.push_back(query_ids(model, d));
      for (const auto& r : s.regions) {
        p.regions.push_back(query_ids(model, r.text));
        p.boxes.push_back(r.bbox);
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sample " + s.image_id + ": " + e.what());
    }
    if (p.descriptions.empty()) {
      throw std::invalid_argument("sample " + s.image_id + ": no global descriptions");
    }
    p.pairs = losses::spatial_pairs(p.boxes);
    out.push_back(std::move(p));
  }
  return out;
}

Image augment(const Image& image, std::uint64_t seed, double delta) {
  Rng rng(seed);
  if (delta == 0.0 || rng.bernoulli(0.5)) return image;
  const double factor = rng.uniform(1.0 - delta, 1.0 + delta);
  Image out = image;
  for (auto& v : out.rgb) {
    const double scaled = std::round(static_cast<double>(v) * factor);
    v = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return out;
}

LossTerms compute_losses(const model::Model& model, const Batch& batch, const TrainConfig& cfg) {
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("compute_losses: batch needs at least 2 samples");

  std::vector<model::ImageEncoding> images;
  std::vector<model::TextEncoding> texts;
  std::vector<Tensor> v_rows, t_rows;
  for (const auto& item : batch) {
    images.push_back(model.encode_image(item.image));
    texts.push_back(model.encode_text(item.sample->descriptions.at(item.description)));
    v_rows.push_back(images.back().embedding);
    t_rows.push_back(texts.back().embedding);
  }
  const Tensor v = ad::concat(v_rows, 0);
  const Tensor t = ad::concat(t_rows, 0);
  const Tensor s = ad::matmul(v, ad::transpose(t));

  LossTerms out;
  out.itc = losses::itc_loss(s, model.temperature());

  std::vector<model::FusionMemory> memory;
  for (const auto& img : images) memory.push_back(model.prepare_memory(img.map));

  const auto hard = losses::sample_hard_negatives(s);
  std::vector<Tensor> pooled;
  std::vector<double> labels;
  for (std::size_t i = 0; i < n; ++i) {
    pooled.push_back(model.fuse(memory[i], texts[i].tokens).pooled);
    pooled.push_back(model.fuse(memory[i], texts[hard.text_for_image[i]].tokens).pooled);
    pooled.push_back(model.fuse(memory[hard.image_for_text[i]], texts[i].tokens).pooled);
    labels.insert(labels.end(), {1.0, 0.0, 0.0});
  }
  out.itm = losses::itm_loss(model.itm_head(ad::concat(pooled, 0)), labels);

  out.grounding = Tensor::scalar(0.0);
  out.spatial = Tensor::scalar(0.0);
  if (cfg.lambda > 0.0 && cfg.use_grounding) {
    std::vector<Tensor> queries;
    std::vector<double> targets;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = *batch[i].sample;
      for (std::size_t r = 0; r < p.regions.size(); ++r) {
        const auto region = model.encode_text(p.regions[r]);
        queries.push_back(model.fuse(memory[i], region.tokens).query);
        const auto& b = p.boxes[r];
        targets.insert(targets.end(), {b.cx, b.cy, b.w, b.h});
      }
    }
    if (!queries.empty()) {
      const Tensor target({queries.size(), 4}, std::move(targets));
      out.grounding = losses::grounding_loss(target, model.ground_head(ad::concat(queries, 0)));
    }
  }
  if (cfg.lambda > 0.0 && cfg.use_spatial) {
    std::vector<Tensor> first, second;
    std::vector<int> labels9;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = *batch[i].sample;
      if (p.pairs.empty()) continue;
      std::vector<Tensor> rois;
      for (const auto& b : p.boxes) rois.push_back(model.roi_pool(images[i].map, b));
      for (const auto& pair : p.pairs) {
        first.push_back(rois[pair.first]);
        second.push_back(rois[pair.second]);
        labels9.push_back(pair.label);
      }
    }
    if (!labels9.empty()) {
      out.spatial = losses::spatial_loss(
          model.spatial_head(ad::concat(first, 0), ad::concat(second, 0)), labels9);
    }
  }
  out.total = losses::total_loss(out.itc, out.itm, out.grounding, out.spatial, cfg.lambda);
  return out;
}

std::string metrics_csv_header() { return "step,itc,itm,grounding,spatial,total,lr"; }

std::string to_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os << m.step << ',' << format_double(m.itc) << ',' << format_double(m.itm) << ','
     << format_double(m.grounding) << ',' << format_double(m.spatial) << ','
     << format_double(m.total) << ',' << format_double(m.lr);
  return os.str();
}

void adamw_update(model::Params& params, AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params.all()) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    const std::size_t n = p.numel();
    if (m.size() != n) m.assign(n, 0.0);
    if (v.size() != n) v.assign(n, 0.0);
    auto theta = p.mutable_data();
    const auto g = p.grad();
    const double decay = name == kTemperatureParam ? 0.0 : cfg.weight_decay;
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps)) + cfg.lr * decay * theta[i];
    }
  }
}

StepMetrics train_step(model::Model& model, AdamState& state, const Batch& batch,
                       const TrainConfig& cfg) {
  model.params().zero_grad();
  const LossTerms terms = compute_losses(model, batch, cfg);
  StepMetrics m;
  m.itc = terms.itc.item();
  m.itm = terms.itm.item();
  m.grounding = terms.grounding.item();
  m.spatial = terms.spatial.item();
  m.total = terms.total.item();
  m.lr = cfg.lr;
  if (!std::isfinite(m.total)) {
    throw std::runtime_error("non-finite loss at step " + std::to_string(state.step) +
                             ": itc=" + format_double(m.itc) + " itm=" + format_double(m.itm) +
                             " grounding=" + format_double(m.grounding) +
                             " spatial=" + format_double(m.spatial));
  }
  ad::backward(terms.total);
  m.step = state.step;
  adamw_update(model.params(), state, cfg);
  return m;
}

// ---- Trainer ----------------------------------------------------------------

Trainer::Trainer(model::Model model, TrainConfig cfg, const data::Corpus& corpus)
    : model_(std::move(model)), cfg_(cfg), corpus_(&corpus) {
  cfg_.validate();
  if (corpus.samples.size() < 2) throw std::invalid_argument("trainer: corpus needs >= 2 samples");
  prepared_ = prepare(model_, corpus);
}

std::size_t Trainer::steps_per_epoch() const {
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size),
                                              prepared_.size());
  return prepared_.size() / b;
}

std::uint64_t Trainer::total_steps() const {
  return static_cast<std::uint64_t>(cfg_.epochs) * steps_per_epoch();
}

void Trainer::set_epochs(int epochs) {
  if (epochs < 0) throw std::invalid_argument("trainer: epochs must be >= 0");
  cfg_.epochs = epochs;
}

Batch Trainer::batch_for(std::uint64_t step) const {
  const std::size_t spe = steps_per_epoch();
  const std::size_t b = prepared_.size() / spe;
  const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), b);
  const std::uint64_t epoch = step / spe;
  const std::size_t k = static_cast<std::size_t>(step % spe);
  std::vector<std::size_t> order(prepared_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(mix_seed(cfg_.seed, mix_seed(epoch, 0x5eed)));
  shuffle_rng.shuffle(order);
  Batch batch;
  for (std::size_t j = 0; j < bsz; ++j) {
    const auto& p = prepared_[order[k * bsz + j]];
    Rng item_rng(mix_seed(mix_seed(cfg_.seed, step), j));
    BatchItem item;
    item.sample = &p;
    item.description = item_rng.below(p.descriptions.size());
    item.image = augment(*p.image, item_rng.next(), cfg_.brightness_delta);
    batch.push_back(std::move(item));
  }
  return batch;
}

StepMetrics Trainer::step_once() { return train_step(model_, adam_, batch_for(adam_.step), cfg_); }

std::vector<StepMetrics> Trainer::train(const std::function<void(const StepMetrics&)>& on_step) {
  std::vector<StepMetrics> out;
  while (adam_.step < total_steps()) {
    out.push_back(step_once());
    if (on_step) on_step(out.back());
  }
  return out;
}

checkpoint::Container Trainer::to_container() const {
  checkpoint::Container c = model_.to_container();
  const auto train_kv = cfg_.to_kv();
  for (const auto& [key, value] : train_kv.values()) c.header.set(kTrainPrefix + key, value);
  c.header.set(kStepKey, std::to_string(adam_.step));
  for (const auto& [name, p] : model_.params().all()) {
    const auto m = adam_.m.find(name);
    const auto v = adam_.v.find(name);
    std::vector<double> zeros(p.numel(), 0.0);
    c.records.push_back(to_record(kMomentPrefix + name, p.shape(),
                                  m == adam_.m.end() ? zeros : m->second));
    c.records.push_back(to_record(kVariancePrefix + name, p.shape(),
                                  v == adam_.v.end() ? zeros : v->second));
  }
  return c;
}

void Trainer::save(const std::filesystem::path& path) const { checkpoint::save(to_container(), path); }

Trainer Trainer::from_container(const checkpoint::Container& c, const data::Corpus& corpus) {
  KeyValueConfig train_kv;
  const std::string prefix = kTrainPrefix;
  for (const auto& [key, value] : c.header.values()) {
    if (key.rfind(prefix, 0) == 0) train_kv.set(key.substr(prefix.size()), value);
  }
  Trainer t(model::Model::from_container(c), TrainConfig::from_kv(train_kv), corpus);
  t.adam_.step = static_cast<std::uint64_t>(c.header.get_int(kStepKey, 0));
  for (const auto& [name, p] : t.model_.params().all()) {
    const auto& m = c.find(kMomentPrefix + name);
    const auto& v = c.find(kVariancePrefix + name);
    if (m.data.size() != p.numel() || v.data.size() != p.numel()) {
      throw std::runtime_error("checkpoint: optimizer state for " + name + " has wrong size");
    }
    t.adam_.m[name] = m.data;
    t.adam_.v[name] = v.data;
  }
  return t;
}

Trainer Trainer::load(const std::filesystem::path& path, const data::Corpus& corpus) {
  return from_container(checkpoint::load(path), corpus);
}

}  // namespace aerialtext::trainer
