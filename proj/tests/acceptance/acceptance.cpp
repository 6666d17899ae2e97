// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. `--only 2,3` restricts the run to those criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aerialtext/annotate.hpp"
#include "aerialtext/data.hpp"
#include "aerialtext/eval.hpp"
#include "aerialtext/geometry.hpp"
#include "aerialtext/losses.hpp"
#include "aerialtext/model.hpp"
#include "aerialtext/trainer.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tree.hpp"

namespace aerialtext {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

// ---- 1: gradient integrity ---------------------------------------------------

Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = Clock::now();
  trainer::TrainConfig cfg;
  cfg.lambda = 0.1;
  std::size_t checked = 0, skipped = 0, failures = 0;
  double max_rel = 0, max_abs = 0;
  std::string worst;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    model::Model m(testing::tiny_model_config(), 1000 + trial);
    auto batch = testing::make_batch(m, trial, 2);
    const auto rep = testing::check_gradients(
        [&] { return trainer::compute_losses(m, batch->batch, cfg).total; }, m.params().all());
    checked += rep.checked;
    skipped += rep.skipped;
    failures += rep.failures;
    max_rel = std::max(max_rel, rep.max_rel_error);
    max_abs = std::max(max_abs, rep.max_abs_error_near_zero);
    if (rep.failures > 0 && worst.empty()) worst = "batch " + std::to_string(trial) + ": " + rep.worst;
  }
  const double secs = seconds_since(t0);
  o.require(failures == 0, std::to_string(checked) + " elements checked, " +
                               std::to_string(failures) + " mismatches, " +
                               std::to_string(skipped) + " on kinks, max rel " + fmt(max_rel, 8) +
                               ", max abs near zero " + fmt(max_abs, 10) +
                               (worst.empty() ? "" : " (" + worst + ")"));
  o.require(checked > 10 * skipped, "kink skips below 10%");
  o.require(secs < 120, fmt(secs, 1) + " s < 120 s");
  return o;
}

// ---- 2: geometry oracles -----------------------------------------------------

Outcome geometry_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(2026);
  double worst_iou = 0, worst_giou = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = testing::lattice_box(rng);
    const auto b = testing::lattice_box(rng);
    const auto counts = testing::raster_counts(a, b);
    const double r_iou = static_cast<double>(counts.inter) / static_cast<double>(counts.uni);
    const double r_giou =
        r_iou - static_cast<double>(counts.enclosing - counts.uni) / static_cast<double>(counts.enclosing);
    worst_iou = std::max(worst_iou, std::fabs(geometry::iou(a, b) - r_iou));
    worst_giou = std::max(worst_giou, std::fabs(geometry::giou(a, b) - r_giou));
  }
  o.require(worst_iou <= 2e-3 && worst_giou <= 2e-3,
            "1000 raster pairs, max |iou err| " + fmt(worst_iou, 6) + ", max |giou err| " +
                fmt(worst_giou, 6));

  std::set<int> classes;
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    geometry::BBox a{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.02, 0.5),
                     rng.uniform(0.02, 0.5)};
    geometry::BBox b{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.02, 0.5),
                     rng.uniform(0.02, 0.5)};
    const int expected = testing::enumerated_label(a, b);
    const int got = geometry::spatial_label(a, b).class_index();
    mismatches += expected != got;
    classes.insert(got);
  }
  o.require(mismatches == 0, "10000 spatial pairs, " + std::to_string(mismatches) + " mismatches");
  o.require(classes.size() == 9, std::to_string(classes.size()) + "/9 classes observed");
  const double secs = seconds_since(t0);
  o.require(secs < 60, fmt(secs, 1) + " s < 60 s");
  return o;
}

// ---- 3: closed forms ---------------------------------------------------------

Outcome closed_forms() {
  Outcome o;
  const double itc = losses::itc_loss(ad::Tensor({2, 2}, {1, 0, 0, 1}), 1.0).item();
  o.require(std::fabs(itc - 0.3133) <= 1e-4, "itc " + fmt(itc, 6) + " vs 0.3133");
  const double sp =
      losses::spatial_loss(ad::Tensor({1, 9}, std::vector<double>(9, 0.0)), std::vector<int>{4}).item();
  o.require(std::fabs(sp - std::log(9.0)) <= 1e-9, "spatial " + fmt(sp, 12) + " vs ln 9");
  const double itm = losses::itm_loss(ad::Tensor({1, 1}, {0.5}), std::vector<double>{1.0}).item();
  o.require(std::fabs(itm - std::log(2.0)) <= 1e-9, "itm " + fmt(itm, 12) + " vs ln 2");
  const double g = losses::grounding_loss(geometry::BBox{0.5, 0.5, 0.2, 0.2},
                                          geometry::BBox{0.5, 0.5, 0.4, 0.4});
  o.require(std::fabs(g - 1.15) <= 1e-9, "grounding " + fmt(g, 12) + " vs 1.15");
  return o;
}

// ---- 4, 5, 6: trained models -------------------------------------------------

struct Corpora {
  data::Corpus train;
  data::Corpus gallery;
};

const Corpora& corpora() {
  static const Corpora c = [] {
    const data::GenConfig gen;
    Corpora out;
    out.train = data::generate_corpus(data::split_seeds(0, 512, 64, gen, false), gen);
    out.gallery = data::generate_corpus(data::split_seeds(0, 512, 64, gen, true), gen);
    return out;
  }();
  return c;
}

struct Training {
  std::optional<model::Model> full;  // first seed, full objective
  double full_seconds = 0;
  std::optional<eval::AblationReport> ablation;
};

// With `ablation` set, trains every variant for seeds 1..3; otherwise only
// the full objective for seed 1.
Training train_models(bool ablation) {
  Training out;
  const auto& c = corpora();
  eval::AblationSetup setup;
  setup.model = model::ModelConfig::defaults();
  setup.train = trainer::TrainConfig{};
  setup.train_corpus = &c.train;
  setup.gallery = &c.gallery;
  setup.seeds = ablation ? std::vector<std::uint64_t>{1, 2, 3} : std::vector<std::uint64_t>{1};
  setup.log = [](const std::string& line) { std::cerr << "  [train] " << line << std::endl; };
  auto t0 = Clock::now();
  setup.on_trained = [&](const std::string& variant, std::uint64_t seed, const model::Model& m) {
    if (variant == "full" && seed == 1) {
      out.full_seconds = seconds_since(t0);
      out.full = model::Model::from_container(m.to_container());
    }
  };
  std::vector<eval::Variant> variants;
  for (const auto& v : eval::loss_variants(setup.train.lambda)) {
    if (v.name == "full" || (ablation && (v.name == "+grounding" || v.name == "baseline"))) {
      variants.push_back(v);
    }
  }
  // Full first so its timing starts at the beginning of the run.
  std::stable_sort(variants.begin(), variants.end(),
                   [](const eval::Variant& a, const eval::Variant& b) {
                     return a.name == "full" && b.name != "full";
                   });
  auto report = eval::run_ablation(variants, setup);
  if (ablation) out.ablation = std::move(report);
  return out;
}

Outcome end_to_end(const Training& t) {
  Outcome o;
  const auto& g = corpora().gallery;
  const auto& m = *t.full;
  const auto r = eval::evaluate_retrieval(m, g);
  o.require(r.text_to_image.r1 >= 0.8, "text->image R@1 " + fmt(r.text_to_image.r1) + " >= 0.8");
  const auto gr = eval::grounding_eval(m, g);
  o.require(gr.mean_iou >= 0.5, "grounding mean IoU " + fmt(gr.mean_iou) + " >= 0.5");
  const auto sp = eval::spatial_eval(m, g);
  o.require(sp.accuracy >= 0.8, "spatial accuracy " + fmt(sp.accuracy) + " >= 0.8");
  o.require(t.full_seconds < 900, "50 epochs in " + fmt(t.full_seconds, 1) + " s < 900 s");
  return o;
}

Outcome ablation_ordering(const Training& t) {
  Outcome o;
  const auto& rows = t.ablation->rows;
  auto find = [&](const std::string& name) -> const eval::RetrievalReport& {
    for (const auto& r : rows) {
      if (r.name == name) return r.mean;
    }
    throw std::logic_error("missing ablation row " + name);
  };
  const auto& full = find("full");
  const auto& ground = find("+grounding");
  const auto& base = find("baseline");
  for (auto [label, f, gr, b] :
       {std::tuple{"text->image", full.text_to_image.r10, ground.text_to_image.r10, base.text_to_image.r10},
        std::tuple{"image->text", full.image_to_text.r10, ground.image_to_text.r10, base.image_to_text.r10}}) {
    o.require(f >= gr && gr >= b, std::string(label) + " R@10 full " + fmt(f) + " >= +grounding " +
                                      fmt(gr) + " >= baseline " + fmt(b));
    o.require(f - b >= 0.02, std::string(label) + " full - baseline " + fmt(f - b) + " >= 0.02");
  }
  std::cerr << eval::to_text_table(*t.ablation);
  return o;
}

Outcome rotation_harness(const Training& t) {
  Outcome o;
  const auto& g = corpora().gallery;
  bool exact = true;
  for (const auto& img : g.images) {
    Image r90 = img, r180 = img, r270 = img;
    for (int i = 0; i < 4; ++i) r90 = eval::rotate_image(r90, 90);
    for (int i = 0; i < 2; ++i) r180 = eval::rotate_image(r180, 180);
    for (int i = 0; i < 4; ++i) r270 = eval::rotate_image(r270, 270);
    exact = exact && r90 == img && r180 == img && r270 == img &&
            eval::rotate_image(eval::rotate_image(img, 90), 270) == img;
  }
  o.require(exact, "90x4, 180x2, 270x4 restore all " + std::to_string(g.images.size()) +
                       " gallery images bit-exactly");
  const auto table = eval::rotation_table(*t.full, g, eval::kRotationGrid);
  std::cerr << eval::to_text_table(table);
  o.require(table.rows.size() == 5, std::to_string(table.rows.size()) + "-row table");
  const auto& at0 = table.rows.at(0).mean;
  const auto& at90 = table.rows.at(2).mean;
  o.require(table.rows.at(2).name == "90" && at0.text_to_image.r10 >= at90.text_to_image.r10,
            "text->image R@10 at 0 deg " + fmt(at0.text_to_image.r10) + " >= at 90 deg " +
                fmt(at90.text_to_image.r10));
  o.require(at0.image_to_text.r10 >= at90.image_to_text.r10,
            "image->text R@10 at 0 deg " + fmt(at0.image_to_text.r10) + " >= at 90 deg " +
                fmt(at90.image_to_text.r10));
  return o;
}

// ---- 7: pipeline determinism and filters -------------------------------------

std::vector<std::string> planted_captions() {
  const std::vector<std::string> bases = {
      "the red block on the left side of the blue tower, a square flat roof building",
      "the green road in the upper side, a long straight road",
      "the white dome in the center, a round domed hall",
      "the purple lot on the lower right of the red tower, a wide open parking lot",
      "the yellow tower in the right side, a tall narrow building"};
  const std::vector<std::string> terms = {"img src", "[IMAGE]", "Sorry", "I cannot", "http://",
                                          "https://", "SORRY", "Img Src", "[image]", "i CANNOT"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& base = bases[i % bases.size()];
    const auto& term = terms[i % terms.size()];
    switch (i % 3) {
      case 0: out.push_back(term + " " + base); break;
      case 1: out.push_back(base + " " + term); break;
      default: {
        const auto mid = base.find(' ', base.size() / 2);
        out.push_back(base.substr(0, mid) + " " + term + base.substr(mid));
      }
    }
  }
  return out;
}

Outcome pipeline() {
  Outcome o;
  const annotate::RefereeConfig referee;
  const auto planted = planted_captions();
  std::size_t rejected = 0;
  for (const auto& c : planted) {
    rejected += annotate::referee_filter(c, referee).kind == annotate::RefereeVerdict::Kind::NegativeTerm;
  }
  o.require(rejected == planted.size(), std::to_string(rejected) + "/" +
                                            std::to_string(planted.size()) +
                                            " planted captions rejected");

  const data::GenConfig gen;
  std::vector<data::Sample> samples;
  samples.reserve(10000);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) samples.push_back(data::generate_scene(seed, gen).sample);
  std::size_t texts = 0, accepted = 0;
  for (const auto& s : samples) {
    for (const auto& r : s.regions) {
      ++texts;
      accepted += annotate::referee_filter(r.text, referee).accepted();
    }
  }
  o.require(accepted == texts, std::to_string(accepted) + "/" + std::to_string(texts) +
                                   " generated region texts accepted");
  const auto report = data::validate(samples);
  const double mean = report.stats.mean_regions_per_image;
  o.require(mean >= 2.57 && mean <= 2.67, "mean regions/image " + fmt(mean) + " in [2.57, 2.67]");

  testing::ScratchDir dir("acceptance_replay");
  const auto corpus = (dir / "corpus").string();
  write_file(dir / "train.cfg", "epochs=2\nbatch_size=8\n");
  const std::vector<std::vector<std::string>> runs = {
      {"gen-data", "--seed", "11", "--scenes", "24", "--gallery", "8", "--out", corpus},
      {"validate", corpus + "/train.jsonl", "--out", (dir / "validate").string()},
      {"train", "--data", corpus + "/train.jsonl", "--config", (dir / "train.cfg").string(),
       "--seed", "4", "--out", (dir / "train").string()}};
  for (const auto& args : runs) {
    const auto first = testing::run_cli(args);
    const fs::path out = args.back();
    const fs::path again = out.string() + "_replay";
    const auto second = testing::replay(out, again);
    auto a = testing::snapshot(out);
    auto b = testing::snapshot(again);
    const bool recorded = a.erase("manifest.json") == 1 && b.erase("manifest.json") == 1;
    o.require(first.code == 0 && second.code == 0 && recorded && !a.empty() && a == b,
              args[0] + " replays bit-exactly from its manifest (" + std::to_string(a.size()) +
                  " files)");
  }
  return o;
}

// ---- 8: recall correctness ---------------------------------------------------

Outcome recall_correctness() {
  Outcome o;
  Rng rng(8);
  std::size_t ranking_mismatch = 0, recall_mismatch = 0, monotone_breaks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(32), nq = 1 + rng.below(32), dim = 1 + rng.below(4);
    const std::size_t classes = 1 + rng.below(8);
    eval::EmbeddedGallery g;
    // Small integers keep every dot product exact, and ties frequent.
    auto vec = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = static_cast<double>(rng.below(4));
      return v;
    };
    for (std::size_t i = 0; i < n; ++i) {
      g.images.push_back(vec());
      g.image_classes.push_back(static_cast<std::int64_t>(rng.below(classes)));
    }
    for (std::size_t i = 0; i < nq; ++i) {
      g.texts.push_back(vec());
      g.text_classes.push_back(static_cast<std::int64_t>(rng.below(classes)));
    }
    const auto rep = eval::evaluate_retrieval(g, true);
    auto check = [&](const std::vector<std::vector<double>>& queries,
                     const std::vector<std::int64_t>& qc, const std::vector<std::vector<double>>& items,
                     const std::vector<std::int64_t>& ic, eval::Direction dir, const eval::RecallSet& got) {
      std::vector<std::vector<double>> scores;
      for (const auto& q : queries) {
        std::vector<double> row;
        for (const auto& it : items) {
          double s = 0;
          for (std::size_t k = 0; k < dim; ++k) s += q[k] * it[k];
          row.push_back(s);
        }
        scores.push_back(row);
      }
      for (const auto& r : rep.rankings) {
        if (r.direction == dir && r.ids != testing::brute_force_rank(scores[r.query])) ++ranking_mismatch;
      }
      const std::size_t cap = items.size();
      const double want[3] = {testing::brute_force_recall(scores, qc, ic, std::min<std::size_t>(1, cap)),
                              testing::brute_force_recall(scores, qc, ic, std::min<std::size_t>(5, cap)),
                              testing::brute_force_recall(scores, qc, ic, std::min<std::size_t>(10, cap))};
      recall_mismatch += (got.r1 != want[0]) + (got.r5 != want[1]) + (got.r10 != want[2]);
      monotone_breaks += !(got.r1 <= got.r5 && got.r5 <= got.r10);
    };
    check(g.texts, g.text_classes, g.images, g.image_classes, eval::Direction::TextToImage,
          rep.text_to_image);
    check(g.images, g.image_classes, g.texts, g.text_classes, eval::Direction::ImageToText,
          rep.image_to_text);
  }
  o.require(ranking_mismatch == 0, std::to_string(ranking_mismatch) + " ranking mismatches");
  o.require(recall_mismatch == 0, std::to_string(recall_mismatch) + " recall mismatches");
  o.require(monotone_breaks == 0, std::to_string(monotone_breaks) + " monotonicity breaks");
  return o;
}

std::set<int> parse_only(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string part;
      while (std::getline(ss, part, ',')) only.insert(std::stoi(part));
    } else {
      throw std::invalid_argument(std::string("unknown argument ") + argv[i]);
    }
  }
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8};
  return only;
}

int run(int argc, char** argv) {
  const auto only = parse_only(argc, argv);
  std::optional<Training> training;
  auto trained = [&]() -> const Training& {
    if (!training) training = train_models(only.count(5) > 0);
    return *training;
  };
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"geometry oracles", geometry_oracles},
      {"closed-form losses", closed_forms},
      {"end-to-end learning", [&] { return end_to_end(trained()); }},
      {"ablation ordering", [&] { return ablation_ordering(trained()); }},
      {"rotation harness", [&] { return rotation_harness(trained()); }},
      {"pipeline determinism and filters", pipeline},
      {"recall correctness", recall_correctness},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    all = all && o.pass;
    std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL")
              << " [" << fmt(seconds_since(t0), 1) << " s] " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}

}  // namespace
}  // namespace aerialtext

int main(int argc, char** argv) {
  try {
    return aerialtext::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << "\n";
    return 2;
  }
}
