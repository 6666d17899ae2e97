// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "aerialtext/text.hpp"

namespace aerialtext::eval {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads with grad recording
// off. The first exception is rethrown on the caller's thread.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1,
                                                      std::max<std::size_t>(n, 1));
  if (workers == 1) {
    ad::NoGradGuard guard;
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      ad::NoGradGuard guard;
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<double> row_of(const ad::Tensor& t) { return {t.data().begin(), t.data().end()}; }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

RecallSet recall_set(const std::vector<std::vector<std::size_t>>& rankings,
                     const std::vector<std::int64_t>& query_classes,
                     const std::vector<std::int64_t>& gallery_classes) {
  const std::size_t cap = gallery_classes.size();
  RecallSet r;
  r.r1 = recall_at_k(rankings, query_classes, gallery_classes, std::min<std::size_t>(1, cap));
  r.r5 = recall_at_k(rankings, query_classes, gallery_classes, std::min<std::size_t>(5, cap));
  r.r10 = recall_at_k(rankings, query_classes, gallery_classes, std::min<std::size_t>(10, cap));
  return r;
}

void add_into(RecallSet& acc, const RecallSet& r, double w) {
  acc.r1 += w * r.r1;
  acc.r5 += w * r.r5;
  acc.r10 += w * r.r10;
}

std::vector<std::size_t> query_ids(const model::Model& model, std::string_view text) {
  return model.token_ids(text::prepare_text_query(text));
}

AblationRow train_and_average(const std::string& name, const trainer::TrainConfig& base,
                              const AblationSetup& setup,
                              const std::function<std::vector<std::pair<std::string, RetrievalReport>>(
                                  const model::Model&)>& evaluate,
                              std::vector<AblationRow>* extra_rows) {
  AblationRow row;
  row.name = name;
  for (std::uint64_t seed : setup.seeds) {
    trainer::TrainConfig cfg = base;
    cfg.seed = seed;
    try {
      trainer::Trainer t(model::Model(setup.model, seed), cfg, *setup.train_corpus);
      t.train();
      if (setup.on_trained) setup.on_trained(name, seed, t.model());
      auto results = evaluate(t.model());
      for (std::size_t i = 0; i < results.size(); ++i) {
        auto& target = extra_rows ? (*extra_rows)[i] : row;
        target.per_seed.push_back(results[i].second);
      }
      if (setup.log) setup.log(name + " seed " + std::to_string(seed) + " done");
    } catch (const std::exception& e) {
      throw std::runtime_error("ablation run '" + name + "' seed " + std::to_string(seed) +
                               " failed: " + e.what());
    }
  }
  auto finish = [](AblationRow& r) {
    const double w = 1.0 / static_cast<double>(r.per_seed.size());
    for (const auto& rep : r.per_seed) {
      add_into(r.mean.text_to_image, rep.text_to_image, w);
      add_into(r.mean.image_to_text, rep.image_to_text, w);
    }
  };
  if (extra_rows) {
    for (auto& r : *extra_rows) finish(r);
  } else {
    finish(row);
  }
  return row;
}

void check_setup(const AblationSetup& setup) {
  if (setup.seeds.empty()) throw std::invalid_argument("ablation: at least one seed required");
  if (!setup.train_corpus || !setup.gallery) {
    throw std::invalid_argument("ablation: train corpus and gallery are required");
  }
}

}  // namespace

std::string_view to_string(Direction d) {
  return d == Direction::TextToImage ? "text_to_image" : "image_to_text";
}

std::vector<std::size_t> rank(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double recall_at_k(std::span<const std::vector<std::size_t>> rankings,
                   std::span<const std::int64_t> query_classes,
                   std::span<const std::int64_t> gallery_classes, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be >= 1");
  if (k > gallery_classes.size()) {
    throw std::invalid_argument("recall_at_k: K=" + std::to_string(k) + " exceeds gallery size " +
                                std::to_string(gallery_classes.size()));
  }
  if (rankings.size() != query_classes.size() || rankings.empty()) {
    throw std::invalid_argument("recall_at_k: need one non-empty ranking per query");
  }
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    const std::size_t top = std::min(k, r.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (gallery_classes[r[i]] == query_classes[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

EmbeddedGallery embed_gallery(const model::Model& model, const data::Corpus& gallery, int rotation,
                              int jobs) {
  const std::size_t n = gallery.samples.size();
  if (n == 0 || gallery.images.size() != n) {
    throw std::invalid_argument("embed_gallery: empty or inconsistent gallery");
  }
  EmbeddedGallery g;
  g.images.resize(n);
  std::vector<std::vector<std::vector<double>>> per_sample(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const Image img = rotate_image(gallery.images[i], rotation);
    g.images[i] = row_of(model.encode_image(img).embedding);
    for (const auto& d : gallery.samples[i].global_descriptions) {
      per_sample[i].push_back(row_of(model.encode_text(query_ids(model, d)).embedding));
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    g.image_classes.push_back(gallery.samples[i].class_id);
    for (auto& t : per_sample[i]) {
      g.texts.push_back(std::move(t));
      g.text_classes.push_back(gallery.samples[i].class_id);
    }
  }
  return g;
}

RetrievalReport evaluate_retrieval(const EmbeddedGallery& g, bool keep_rankings) {
  RetrievalReport report;
  auto run = [&](const std::vector<std::vector<double>>& queries,
                 const std::vector<std::int64_t>& qclasses,
                 const std::vector<std::vector<double>>& items,
                 const std::vector<std::int64_t>& iclasses, Direction dir) {
    std::vector<std::vector<std::size_t>> rankings;
    std::vector<double> scores(items.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (std::size_t j = 0; j < items.size(); ++j) scores[j] = dot(queries[q], items[j]);
      rankings.push_back(rank(scores));
      if (keep_rankings) {
        Ranking r{dir, q, qclasses[q], rankings.back(), {}};
        for (auto id : r.ids) r.scores.push_back(scores[id]);
        report.rankings.push_back(std::move(r));
      }
    }
    return recall_set(rankings, qclasses, iclasses);
  };
  report.text_to_image = run(g.texts, g.text_classes, g.images, g.image_classes, Direction::TextToImage);
  report.image_to_text = run(g.images, g.image_classes, g.texts, g.text_classes, Direction::ImageToText);
  return report;
}

RetrievalReport evaluate_retrieval(const model::Model& model, const data::Corpus& gallery,
                                   int rotation, int jobs) {
  return evaluate_retrieval(embed_gallery(model, gallery, rotation, jobs));
}

GroundingResult grounding_eval(std::span<const BBox> truth, std::span<const BBox> predicted) {
  if (truth.empty()) throw std::invalid_argument("grounding_eval: empty region set");
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("grounding_eval: truth and prediction counts differ");
  }
  GroundingResult r;
  r.count = truth.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double v = geometry::iou(truth[i], predicted[i]);
    r.mean_iou += v;
    if (v >= 0.5) ++hits;
  }
  r.mean_iou /= static_cast<double>(r.count);
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.count);
  return r;
}

std::vector<BBox> predict_boxes(const model::Model& model, const data::Corpus& corpus, int jobs) {
  const std::size_t n = corpus.samples.size();
  std::vector<std::vector<BBox>> per_sample(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& s = corpus.samples[i];
    if (s.regions.empty()) return;
    const auto enc = model.encode_image(corpus.images[i]);
    const auto memory = model.prepare_memory(enc.map);
    std::vector<ad::Tensor> queries;
    for (const auto& r : s.regions) {
      const auto text = model.encode_text(query_ids(model, r.text));
      queries.push_back(model.fuse(memory, text.tokens).query);
    }
    const auto boxes = model.ground_head(ad::concat(queries, 0));
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
      per_sample[i].push_back({boxes.at(r, 0), boxes.at(r, 1), boxes.at(r, 2), boxes.at(r, 3)});
    }
  });
  std::vector<BBox> out;
  for (auto& v : per_sample) out.insert(out.end(), v.begin(), v.end());
  return out;
}

GroundingResult grounding_eval(const model::Model& model, const data::Corpus& corpus, int jobs) {
  std::vector<BBox> truth;
  for (const auto& s : corpus.samples) {
    for (const auto& r : s.regions) truth.push_back(r.bbox);
  }
  const auto predicted = predict_boxes(model, corpus, jobs);
  return grounding_eval(truth, predicted);
}

SpatialResult spatial_eval(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("spatial_eval: truth and prediction counts differ");
  }
  if (truth.empty()) throw std::invalid_argument("spatial_eval: no region pairs");
  SpatialResult r;
  r.count = truth.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > 8 || predicted[i] < 0 || predicted[i] > 8) {
      throw std::invalid_argument("spatial_eval: class index out of range");
    }
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    if (truth[i] == predicted[i]) ++hits;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.count);
  return r;
}

SpatialResult spatial_eval(const model::Model& model, const data::Corpus& corpus, int jobs) {
  const std::size_t n = corpus.samples.size();
  std::vector<std::vector<int>> truth(n), predicted(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& s = corpus.samples[i];
    if (s.regions.size() < 2) return;
    std::vector<BBox> boxes;
    for (const auto& r : s.regions) boxes.push_back(r.bbox);
    const auto pairs = losses::spatial_pairs(boxes);
    const auto enc = model.encode_image(corpus.images[i]);
    std::vector<ad::Tensor> rois, first, second;
    for (const auto& b : boxes) rois.push_back(model.roi_pool(enc.map, b));
    for (const auto& p : pairs) {
      first.push_back(rois[p.first]);
      second.push_back(rois[p.second]);
      truth[i].push_back(p.label);
    }
    const auto logits = model.spatial_head(ad::concat(first, 0), ad::concat(second, 0));
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      int best = 0;
      for (int c = 1; c < 9; ++c) {
        if (logits.at(r, static_cast<std::size_t>(c)) > logits.at(r, static_cast<std::size_t>(best))) best = c;
      }
      predicted[i].push_back(best);
    }
  });
  std::vector<int> t, p;
  for (std::size_t i = 0; i < n; ++i) {
    t.insert(t.end(), truth[i].begin(), truth[i].end());
    p.insert(p.end(), predicted[i].begin(), predicted[i].end());
  }
  return spatial_eval(t, p);
}

Image rotate_image(const Image& image, int degrees) {
  if (image.width != image.height) throw std::invalid_argument("rotate_image: image must be square");
  const int n = image.width;
  Image out(n, n);
  auto copy_px = [&](int x, int y, int sx, int sy) {
    std::copy_n(image.pixel(sx, sy), 3, out.pixel(x, y));
  };
  switch (degrees) {
    case 0:
      return image;
    case 90:
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) copy_px(x, y, y, n - 1 - x);
      return out;
    case 180:
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) copy_px(x, y, n - 1 - x, n - 1 - y);
      return out;
    case 270:
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) copy_px(x, y, n - 1 - y, x);
      return out;
    case 15: {
      const double theta = 15.0 * std::numbers::pi / 180.0;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double mid = (n - 1) / 2.0;
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const double dx = x - mid;
          const double dy = y - mid;
          const auto sx = static_cast<int>(std::lround(mid + c * dx + s * dy));
          const auto sy = static_cast<int>(std::lround(mid - s * dx + c * dy));
          if (sx >= 0 && sx < n && sy >= 0 && sy < n) copy_px(x, y, sx, sy);
        }
      }
      return out;
    }
    default:
      throw std::invalid_argument("rotate_image: unsupported angle " + std::to_string(degrees) +
                                  " (expected 0, 15, 90, 180 or 270)");
  }
}

data::Corpus rotate_corpus(const data::Corpus& corpus, int degrees) {
  data::Corpus out = corpus;
  for (auto& img : out.images) img = rotate_image(img, degrees);
  return out;
}

std::vector<Variant> loss_variants(double lambda) {
  return {{"baseline", 0.0, false, false},
          {"+grounding", lambda, true, false},
          {"+spatial", lambda, false, true},
          {"full", lambda, true, true}};
}

std::vector<Variant> lambda_variants() {
  std::vector<Variant> out;
  for (double l : kLambdaGrid) out.push_back({"lambda=" + format_double(l), l, true, true});
  return out;
}

AblationReport run_ablation(std::span<const Variant> variants, const AblationSetup& setup) {
  check_setup(setup);
  AblationReport report;
  report.title = "loss ablation";
  for (const auto& v : variants) {
    trainer::TrainConfig cfg = setup.train;
    cfg.lambda = v.lambda;
    cfg.use_grounding = v.grounding;
    cfg.use_spatial = v.spatial;
    report.rows.push_back(train_and_average(
        v.name, cfg, setup,
        [&](const model::Model& m) {
          return std::vector<std::pair<std::string, RetrievalReport>>{
              {v.name, evaluate_retrieval(m, *setup.gallery, 0, setup.jobs)}};
        },
        nullptr));
  }
  return report;
}

AblationReport run_rotation(std::span<const int> degrees, const AblationSetup& setup) {
  check_setup(setup);
  AblationReport report;
  report.title = "rotation";
  for (int d : degrees) {
    AblationRow row;
    row.name = std::to_string(d);
    report.rows.push_back(std::move(row));
  }
  train_and_average(
      "full", setup.train, setup,
      [&](const model::Model& m) {
        std::vector<std::pair<std::string, RetrievalReport>> out;
        for (int d : degrees) {
          out.emplace_back(std::to_string(d), evaluate_retrieval(m, *setup.gallery, d, setup.jobs));
        }
        return out;
      },
      &report.rows);
  return report;
}

AblationReport rotation_table(const model::Model& m, const data::Corpus& gallery,
                              std::span<const int> degrees, int jobs) {
  AblationReport report;
  report.title = "rotation";
  for (int d : degrees) {
    AblationRow row;
    row.name = std::to_string(d);
    row.mean = evaluate_retrieval(m, gallery, d, jobs);
    row.per_seed.push_back(row.mean);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string to_csv(const AblationReport& report) {
  std::ostringstream os;
  os << "config,t2i_r1,t2i_r5,t2i_r10,i2t_r1,i2t_r5,i2t_r10,seeds\n";
  for (const auto& r : report.rows) {
    const auto& t = r.mean.text_to_image;
    const auto& i = r.mean.image_to_text;
    os << r.name << ',' << format_double(t.r1) << ',' << format_double(t.r5) << ','
       << format_double(t.r10) << ',' << format_double(i.r1) << ',' << format_double(i.r5) << ','
       << format_double(i.r10) << ',' << r.per_seed.size() << '\n';
  }
  return os.str();
}

std::string to_text_table(const AblationReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << report.title << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "config" << std::right
     << "  |  text->image R@1   R@5  R@10  |  image->text R@1   R@5  R@10\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : report.rows) {
    const auto& t = r.mean.text_to_image;
    const auto& i = r.mean.image_to_text;
    os << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << "  |  "
       << std::setw(15) << t.r1 << std::setw(6) << t.r5 << std::setw(6) << t.r10 << "  |  "
       << std::setw(15) << i.r1 << std::setw(6) << i.r5 << std::setw(6) << i.r10 << '\n';
  }
  return os.str();
}

std::string rankings_jsonl(std::span<const Ranking> rankings, std::size_t top) {
  std::string out;
  for (const auto& r : rankings) {
    nlohmann::ordered_json j;
    j["direction"] = std::string(to_string(r.direction));
    j["query"] = r.query;
    j["query_class"] = r.query_class;
    const std::size_t n = std::min(top, r.ids.size());
    j["ids"] = std::vector<std::size_t>(r.ids.begin(), r.ids.begin() + static_cast<std::ptrdiff_t>(n));
    j["scores"] = std::vector<double>(r.scores.begin(), r.scores.begin() + static_cast<std::ptrdiff_t>(n));
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace aerialtext::eval
