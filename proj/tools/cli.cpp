// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "aerialtext/annotate.hpp"
#include "aerialtext/checkpoint.hpp"
#include "aerialtext/data.hpp"
#include "aerialtext/eval.hpp"
#include "aerialtext/geometry.hpp"
#include "aerialtext/model.hpp"
#include "aerialtext/text.hpp"
#include "aerialtext/trainer.hpp"
#include "aerialtext/version.hpp"

namespace aerialtext::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Raised for bad flag values and malformed config files.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  int jobs = 1;
  CLI::Option* seed_opt = nullptr;
};

struct Context {
  const std::vector<std::string>* args;
  std::ostream* out;
  std::ostream* err;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  c.seed_opt = sub->add_option("--seed", c.seed, "Seed governing all randomness");
  sub->add_option("--config", c.config, "Flat key=value config file")->check(CLI::ExistingFile);
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  sub->add_option("--jobs", c.jobs, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber)
      ->default_val(1);
}

std::string config_text(const Common& c) { return c.config.empty() ? "" : read_file(c.config); }

KeyValueConfig parse_config(const Common& c) {
  try {
    return KeyValueConfig::parse(config_text(c));
  } catch (const std::exception& e) {
    throw UsageError("--config " + c.config + ": " + e.what());
  }
}

template <class F>
auto as_usage(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(what + ": " + e.what());
  }
}

// Keys prefixed "model." configure the network; the rest the named section.
std::pair<KeyValueConfig, KeyValueConfig> split_model_keys(const KeyValueConfig& kv) {
  KeyValueConfig rest, model;
  const std::string prefix = "model.";
  for (const auto& [k, v] : kv.values()) {
    if (k.rfind(prefix, 0) == 0) {
      model.set(k.substr(prefix.size()), v);
    } else {
      rest.set(k, v);
    }
  }
  return {rest, model};
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  fs::create_directories(out);
  return out;
}

void write_manifest(const Context& ctx, const fs::path& out, const std::string& command,
                    std::uint64_t seed, const Common& c,
                    const std::vector<std::string>& inputs = {}) {
  json m;
  m["command"] = command;
  json argv = json::array({"aerialtext"});
  for (const auto& a : *ctx.args) argv.push_back(a);
  m["argv"] = argv;
  m["seed"] = seed;
  const std::string text = config_text(c);
  m["config_path"] = c.config;
  m["config_hash"] = hex64(fnv1a(text));
  m["config"] = text;
  json in = json::object();
  for (const auto& p : inputs) in[p] = hex64(fnv1a(read_file(p)));
  m["inputs"] = in;
  m["versions"] = {{"aerialtext", kVersion},
                   {"checkpoint_format", checkpoint::kFormatVersion},
                   {"compiler", __VERSION__}};
  write_file(out / "manifest.json", m.dump(2) + "\n");
}

std::uint64_t effective_seed(const Common& c, const KeyValueConfig& kv, std::uint64_t fallback) {
  if (c.seed_opt && c.seed_opt->count() > 0) return c.seed;
  return static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(fallback)));
}

geometry::BBox parse_box(const std::string& flag, const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + part + "' is not a number");
    }
  }
  if (v.size() != 4) throw UsageError(flag + ": expected cx,cy,w,h");
  const geometry::BBox b{v[0], v[1], v[2], v[3]};
  if (auto why = geometry::check_bbox(b)) throw UsageError(flag + ": " + *why);
  return b;
}

std::string recall_line(const char* name, const eval::RecallSet& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << name << "  R@1 " << r.r1 << "  R@5 " << r.r5
     << "  R@10 " << r.r10;
  return os.str();
}

// Image paths relative to the output directory so a filtered corpus still
// resolves its images.
std::string relocated(const fs::path& source_dir, const fs::path& out, const std::string& path) {
  return fs::relative(fs::absolute(source_dir / path), fs::absolute(out)).generic_string();
}

model::Model load_model(const std::string& path) {
  return model::Model::from_container(checkpoint::load(path));
}

// ---- subcommands ------------------------------------------------------------

int cmd_gen_data(const Context& ctx, const Common& c, std::size_t scenes, std::size_t gallery) {
  const auto kv = parse_config(c);
  const auto cfg = as_usage("--config", [&] { return data::GenConfig::from_kv(kv); });
  const auto out = prepare_out(c);
  const auto train_seeds = data::split_seeds(c.seed, scenes, gallery, cfg, false);
  data::write_corpus(data::generate_corpus(train_seeds, cfg), out, "train");
  if (gallery > 0) {
    const auto gallery_seeds = data::split_seeds(c.seed, scenes, gallery, cfg, true);
    data::write_corpus(data::generate_corpus(gallery_seeds, cfg), out, "gallery");
  }
  write_file(out / "gen.cfg", cfg.to_kv().serialize());
  write_manifest(ctx, out, "gen-data", c.seed, c);
  *ctx.out << "wrote " << scenes << " train and " << gallery << " gallery scenes to "
           << out.string() << "\n";
  return kOk;
}

int cmd_validate(const Context& ctx, const Common& c, const std::string& path) {
  const auto kv = parse_config(c);
  data::StatBands bands;
  as_usage("--config", [&] {
    kv.require_known({"regions_lo", "regions_hi", "description_words_lo", "description_words_hi",
                      "region_words_lo", "region_words_hi"});
    bands.regions_lo = kv.get_double("regions_lo", bands.regions_lo);
    bands.regions_hi = kv.get_double("regions_hi", bands.regions_hi);
    bands.description_words_lo = kv.get_double("description_words_lo", bands.description_words_lo);
    bands.description_words_hi = kv.get_double("description_words_hi", bands.description_words_hi);
    bands.region_words_lo = kv.get_double("region_words_lo", bands.region_words_lo);
    bands.region_words_hi = kv.get_double("region_words_hi", bands.region_words_hi);
    return 0;
  });
  std::ostringstream report;
  int code = kOk;
  try {
    const auto samples = data::read_jsonl(path);
    const auto r = data::validate(samples, bands);
    const auto& s = r.stats;
    report << "images " << s.images << "\ndescriptions " << s.descriptions << "\nbbox_texts "
           << s.bbox_texts << "\nclasses " << s.classes << "\nmean_words_per_description "
           << format_double(s.mean_words_per_description) << "\nmean_words_per_region_text "
           << format_double(s.mean_words_per_region_text) << "\nmean_regions_per_image "
           << format_double(s.mean_regions_per_image) << "\n";
    for (const auto& f : r.drift_flags) report << "drift: " << f << "\n";
    for (const auto& v : r.violations) {
      report << "line " << v.line << ": " << v.image_id << ": " << v.reason << "\n";
    }
    report << (r.ok() ? "ok" : std::to_string(r.violations.size()) + " violation(s)") << "\n";
    if (!r.ok()) code = kFailure;
  } catch (const std::exception& e) {
    report << e.what() << "\n";
    code = kFailure;
  }
  (code == kOk ? *ctx.out : *ctx.err) << report.str();
  if (!c.out.empty()) {
    const auto out = prepare_out(c);
    write_file(out / "validation.txt", report.str());
    write_manifest(ctx, out, "validate", c.seed, c, {path});
  }
  return code;
}

int cmd_annotate_filter(const Context& ctx, const Common& c, const std::string& path, bool refine,
                        double audit_fraction, int audit_rounds) {
  const auto kv = parse_config(c);
  const auto cfg = as_usage("--config", [&] { return annotate::RefereeConfig::from_kv(kv); });
  const annotate::AuditPlan plan{audit_fraction, audit_rounds, c.seed};
  as_usage("audit plan", [&] { plan.validate(); return 0; });
  const auto samples = data::read_jsonl(path);
  const auto out = prepare_out(c);
  const fs::path source_dir = fs::path(path).parent_path();

  std::vector<data::Sample> kept;
  std::string rejected;
  std::size_t regions_in = 0, regions_kept = 0;
  auto reject = [&](const data::Sample& s, int region, const std::string& text,
                    const std::string& reason) {
    json j;
    j["image_id"] = s.image_id;
    j["region"] = region;
    j["text"] = text;
    j["reason"] = reason;
    rejected += j.dump() + "\n";
  };
  for (const auto& s : samples) {
    bool drop = false;
    for (const auto& d : s.global_descriptions) {
      const auto v = annotate::referee_filter(d, cfg);
      if (!v.accepted()) {
        reject(s, -1, d, v.reason());
        drop = true;
      }
    }
    if (drop) continue;
    data::Sample f = s;
    f.image_path = relocated(source_dir, out, s.image_path);
    f.regions.clear();
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
      ++regions_in;
      const auto& region = s.regions[r];
      const std::string text = refine ? annotate::refine_vertical(region.text, region.bbox) : region.text;
      const auto verdict = annotate::referee_filter(text, cfg);
      if (!verdict.accepted()) {
        reject(s, static_cast<int>(r), text, verdict.reason());
        continue;
      }
      const auto consistency = annotate::spatial_consistency_filter(text, region.bbox);
      if (!consistency.kept()) {
        reject(s, static_cast<int>(r), text, consistency.reason());
        continue;
      }
      f.regions.push_back({region.bbox, text});
      ++regions_kept;
    }
    kept.push_back(std::move(f));
  }
  data::write_jsonl(kept, out / "filtered.jsonl");
  write_file(out / "rejected.jsonl", rejected);

  std::ostringstream audit;
  if (!kept.empty()) {
    std::vector<std::string> ids;
    for (const auto& s : kept) ids.push_back(s.image_id);
    const auto rounds = annotate::audit_sample(ids, plan);
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      audit << "round " << i + 1 << ":";
      for (const auto& id : rounds[i]) audit << ' ' << id;
      audit << "\n";
    }
  }
  write_file(out / "audit.txt", audit.str());
  write_manifest(ctx, out, "annotate-filter", c.seed, c, {path});
  *ctx.out << "samples kept " << kept.size() << "/" << samples.size() << ", regions kept "
           << regions_kept << "/" << regions_in << "\n";
  return kOk;
}

int cmd_train(const Context& ctx, const Common& c, const std::string& data_path,
              const std::string& resume, std::optional<int> epochs) {
  const auto kv = parse_config(c);
  auto [train_kv, model_kv] = split_model_keys(kv);
  const std::uint64_t seed = effective_seed(c, train_kv, 0);
  train_kv.set("seed", std::to_string(seed));
  const auto corpus = data::load_corpus(data_path);
  const auto out = prepare_out(c);

  std::optional<trainer::Trainer> t;
  if (!resume.empty()) {
    t.emplace(trainer::Trainer::load(resume, corpus));
  } else {
    auto tcfg = as_usage("--config", [&] { return trainer::TrainConfig::from_kv(train_kv); });
    auto mcfg = as_usage("--config", [&] { return model::ModelConfig::from_kv(model_kv); });
    t.emplace(model::Model(mcfg, seed), tcfg, corpus);
  }
  if (epochs) as_usage("--epochs", [&] { t->set_epochs(*epochs); return 0; });

  std::ofstream csv(out / "metrics.csv", std::ios::binary);
  if (!csv) throw std::runtime_error((out / "metrics.csv").string() + ": cannot open for writing");
  csv << trainer::metrics_csv_header() << "\n";
  const std::size_t spe = t->steps_per_epoch();
  double epoch_total = 0;
  t->train([&](const trainer::StepMetrics& m) {
    csv << trainer::to_csv_row(m) << "\n";
    epoch_total += m.total;
    if ((m.step + 1) % spe == 0) {
      *ctx.out << "epoch " << (m.step + 1) / spe << " mean total loss "
               << format_double(epoch_total / static_cast<double>(spe)) << "\n";
      epoch_total = 0;
    }
  });
  csv.close();
  t->save(out / "checkpoint.bin");
  auto effective = t->config().to_kv();
  const auto effective_model = t->model().config().to_kv();
  for (const auto& [k, v] : effective_model.values()) effective.set("model." + k, v);
  write_file(out / "train.cfg", effective.serialize());
  std::vector<std::string> inputs = {data_path};
  if (!resume.empty()) inputs.push_back(resume);
  write_manifest(ctx, out, "train", t->config().seed, c, inputs);
  *ctx.out << "trained to step " << t->step() << "; checkpoint at "
           << (out / "checkpoint.bin").string() << "\n";
  return kOk;
}

int cmd_eval(const Context& ctx, const Common& c, const std::string& ckpt,
             const std::string& data_path, int rotation) {
  const auto model = load_model(ckpt);
  const auto corpus = data::load_corpus(data_path);
  const auto out = prepare_out(c);
  const auto g = as_usage("--rotation", [&] {
    return eval::embed_gallery(model, corpus, rotation, c.jobs);
  });
  const auto r = eval::evaluate_retrieval(g, true);
  std::ostringstream summary;
  summary << recall_line("text->image", r.text_to_image) << "\n"
          << recall_line("image->text", r.image_to_text) << "\n";
  std::ostringstream csv;
  csv << "direction,r1,r5,r10\n";
  for (auto [name, rs] : {std::pair{"text_to_image", r.text_to_image},
                          std::pair{"image_to_text", r.image_to_text}}) {
    csv << name << ',' << format_double(rs.r1) << ',' << format_double(rs.r5) << ','
        << format_double(rs.r10) << "\n";
  }
  write_file(out / "retrieval.csv", csv.str());
  write_file(out / "rankings.jsonl", eval::rankings_jsonl(r.rankings));

  std::size_t regions = 0;
  for (const auto& s : corpus.samples) regions += s.regions.size();
  if (regions > 0 && rotation == 0) {
    const auto gr = eval::grounding_eval(model, corpus, c.jobs);
    summary << "grounding mean IoU " << format_double(gr.mean_iou) << ", acc@0.5 "
            << format_double(gr.accuracy) << " over " << gr.count << " regions\n";
    try {
      const auto sp = eval::spatial_eval(model, corpus, c.jobs);
      summary << "spatial accuracy " << format_double(sp.accuracy) << " over " << sp.count
              << " ordered pairs\n";
      std::ostringstream conf;
      conf << "truth\\predicted";
      for (int k = 0; k < 9; ++k) conf << ',' << geometry::to_string(geometry::SpatialRelation::from_index(k));
      conf << "\n";
      for (int t = 0; t < 9; ++t) {
        conf << geometry::to_string(geometry::SpatialRelation::from_index(t));
        for (int p = 0; p < 9; ++p) conf << ',' << sp.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        conf << "\n";
      }
      write_file(out / "spatial_confusion.csv", conf.str());
    } catch (const std::invalid_argument&) {
      summary << "spatial accuracy n/a (no region pairs)\n";
    }
  }
  write_file(out / "summary.txt", summary.str());
  write_manifest(ctx, out, "eval", c.seed, c, {ckpt, data_path});
  *ctx.out << summary.str();
  return kOk;
}

int cmd_ground(const Context& ctx, const Common& c, const std::string& ckpt,
               const std::string& data_path, const std::string& image_path,
               const std::string& text) {
  const auto model = load_model(ckpt);
  if (!image_path.empty()) {
    if (text.empty()) throw UsageError("--image requires --text");
    ad::NoGradGuard guard;
    const auto enc = model.encode_image(read_ppm(image_path));
    const auto ids = model.token_ids(text::prepare_text_query(text));
    const auto fused = model.fuse(model.prepare_memory(enc.map), model.encode_text(ids).tokens);
    const auto b = model.ground_head(fused.query);
    *ctx.out << format_double(b.at(0, 0)) << ',' << format_double(b.at(0, 1)) << ','
             << format_double(b.at(0, 2)) << ',' << format_double(b.at(0, 3)) << "\n";
    if (!c.out.empty()) {
      const auto out = prepare_out(c);
      write_file(out / "box.txt", format_double(b.at(0, 0)) + "," + format_double(b.at(0, 1)) +
                                      "," + format_double(b.at(0, 2)) + "," +
                                      format_double(b.at(0, 3)) + "\n");
      write_manifest(ctx, out, "ground", c.seed, c, {ckpt, image_path});
    }
    return kOk;
  }
  if (data_path.empty()) throw UsageError("ground needs --data or --image/--text");
  if (c.out.empty()) throw UsageError("ground --data requires --out");
  const auto corpus = data::load_corpus(data_path);
  const auto out = prepare_out(c);
  const auto predicted = eval::predict_boxes(model, corpus, c.jobs);
  std::vector<geometry::BBox> truth;
  std::string lines;
  std::size_t k = 0;
  for (const auto& s : corpus.samples) {
    for (std::size_t r = 0; r < s.regions.size(); ++r, ++k) {
      const auto& t = s.regions[r].bbox;
      const auto& p = predicted[k];
      truth.push_back(t);
      json j;
      j["image_id"] = s.image_id;
      j["region"] = r;
      j["text"] = s.regions[r].text;
      j["bbox"] = {t.cx, t.cy, t.w, t.h};
      j["predicted"] = {p.cx, p.cy, p.w, p.h};
      j["iou"] = geometry::iou(t, p);
      lines += j.dump() + "\n";
    }
  }
  write_file(out / "predictions.jsonl", lines);
  const auto gr = eval::grounding_eval(truth, predicted);
  const std::string summary = "grounding mean IoU " + format_double(gr.mean_iou) + ", acc@0.5 " +
                              format_double(gr.accuracy) + " over " + std::to_string(gr.count) +
                              " regions\n";
  write_file(out / "summary.txt", summary);
  write_manifest(ctx, out, "ground", c.seed, c, {ckpt, data_path});
  *ctx.out << summary;
  return kOk;
}

eval::AblationSetup ablation_setup(const Common& c, const std::vector<std::uint64_t>& seeds,
                                   const data::Corpus* train, const data::Corpus* gallery,
                                   std::ostream& log) {
  const auto kv = parse_config(c);
  const auto [train_kv, model_kv] = split_model_keys(kv);
  eval::AblationSetup setup;
  setup.train = as_usage("--config", [&] { return trainer::TrainConfig::from_kv(train_kv); });
  setup.model = as_usage("--config", [&] { return model::ModelConfig::from_kv(model_kv); });
  setup.seeds = seeds;
  setup.train_corpus = train;
  setup.gallery = gallery;
  setup.jobs = c.jobs;
  setup.log = [&log](const std::string& line) { log << line << "\n"; };
  if (seeds.empty()) throw UsageError("--seeds: at least one seed required");
  return setup;
}

int cmd_ablate(const Context& ctx, const Common& c, const std::string& train_path,
               const std::string& gallery_path, const std::vector<std::uint64_t>& seeds,
               const std::string& kind) {
  const auto train = data::load_corpus(train_path);
  const auto gallery = data::load_corpus(gallery_path);
  auto setup = ablation_setup(c, seeds, &train, &gallery, *ctx.err);
  const auto out = prepare_out(c);
  const auto variants = kind == "lambda" ? eval::lambda_variants()
                                         : eval::loss_variants(setup.train.lambda);
  auto report = eval::run_ablation(variants, setup);
  if (kind == "lambda") report.title = "lambda ablation";
  write_file(out / "ablation.csv", eval::to_csv(report));
  write_file(out / "ablation.txt", eval::to_text_table(report));
  write_manifest(ctx, out, "ablate", seeds.front(), c, {train_path, gallery_path});
  *ctx.out << eval::to_text_table(report);
  return kOk;
}

int cmd_rotate_eval(const Context& ctx, const Common& c, const std::string& ckpt,
                    const std::string& train_path, const std::string& gallery_path,
                    const std::vector<std::uint64_t>& seeds) {
  const auto gallery = data::load_corpus(gallery_path);
  const auto out = prepare_out(c);
  eval::AblationReport report;
  std::vector<std::string> inputs = {gallery_path};
  if (!ckpt.empty()) {
    report = eval::rotation_table(load_model(ckpt), gallery, eval::kRotationGrid, c.jobs);
    inputs.push_back(ckpt);
  } else {
    if (train_path.empty()) throw UsageError("rotate-eval needs --checkpoint or --train");
    const auto train = data::load_corpus(train_path);
    const auto setup = ablation_setup(c, seeds, &train, &gallery, *ctx.err);
    report = eval::run_rotation(eval::kRotationGrid, setup);
    inputs.push_back(train_path);
  }
  write_file(out / "rotation.csv", eval::to_csv(report));
  write_file(out / "rotation.txt", eval::to_text_table(report));
  write_manifest(ctx, out, "rotate-eval", seeds.empty() ? c.seed : seeds.front(), c, inputs);
  *ctx.out << eval::to_text_table(report);
  return kOk;
}

int cmd_label_spatial(const Context& ctx, const Common& c, const std::string& b1,
                      const std::string& b2) {
  const auto a = parse_box("--b1", b1);
  const auto b = parse_box("--b2", b2);
  const std::string label = geometry::to_string(geometry::spatial_label(a, b));
  *ctx.out << label << "\n";
  if (!c.out.empty()) {
    const auto out = prepare_out(c);
    write_file(out / "label.txt", label + "\n");
    write_manifest(ctx, out, "label-spatial", c.seed, c);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic text-guided aerial retrieval, grounding and spatial relations",
               "aerialtext"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(kVersion));

  Common c;
  std::size_t scenes = 512, gallery = 0;
  std::string path, data_path, resume, ckpt, train_path, gallery_path, image_path, text;
  std::string b1, b2, kind = "loss";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::optional<int> epochs;
  int rotation = 0;
  bool refine = false;
  double audit_fraction = 0.2;
  int audit_rounds = 5;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  add_common(gen, c, true);
  gen->add_option("--scenes", scenes, "Training scenes")->check(CLI::PositiveNumber);
  gen->add_option("--gallery", gallery, "Held-out gallery scenes (disjoint classes)");

  auto* val = app.add_subcommand("validate", "Check a JSONL corpus and report statistics");
  add_common(val, c, false);
  val->add_option("file", path, "Corpus JSONL")->required();

  auto* ann = app.add_subcommand("annotate-filter", "Apply the referee and spatial filters");
  add_common(ann, c, true);
  ann->add_option("file", path, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  ann->add_flag("--refine", refine, "Add vertical terms to bare left/right phrases first");
  ann->add_option("--audit-fraction", audit_fraction, "Fraction sampled per audit round");
  ann->add_option("--audit-rounds", audit_rounds, "Audit rounds");

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, c, true);
  train->add_option("--data", data_path, "Training corpus JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--epochs", epochs, "Override the configured epoch count");

  auto* ev = app.add_subcommand("eval", "Retrieval, grounding and spatial evaluation");
  add_common(ev, c, true);
  ev->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_path, "Gallery corpus JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--rotation", rotation, "Rotate gallery images (0, 15, 90, 180, 270)");

  auto* gr = app.add_subcommand("ground", "Predict boxes for region texts");
  add_common(gr, c, false);
  gr->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  gr->add_option("--data", data_path, "Corpus JSONL")->check(CLI::ExistingFile);
  gr->add_option("--image", image_path, "Single PPM image")->check(CLI::ExistingFile);
  gr->add_option("--text", text, "Region text for --image");

  auto* ab = app.add_subcommand("ablate", "Loss-term or lambda ablation over seeds");
  add_common(ab, c, true);
  ab->add_option("--train", train_path, "Training corpus JSONL")->required()->check(CLI::ExistingFile);
  ab->add_option("--gallery", gallery_path, "Gallery corpus JSONL")->required()->check(CLI::ExistingFile);
  ab->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');
  ab->add_option("--kind", kind, "loss or lambda")->check(CLI::IsMember({"loss", "lambda"}));

  auto* rot = app.add_subcommand("rotate-eval", "Retrieval under gallery rotation");
  add_common(rot, c, true);
  rot->add_option("--checkpoint", ckpt, "Evaluate this model instead of training")->check(CLI::ExistingFile);
  rot->add_option("--train", train_path, "Training corpus JSONL")->check(CLI::ExistingFile);
  rot->add_option("--gallery", gallery_path, "Gallery corpus JSONL")->required()->check(CLI::ExistingFile);
  rot->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* lab = app.add_subcommand("label-spatial", "Spatial relation of box b1 relative to b2");
  add_common(lab, c, false);
  lab->add_option("--b1", b1, "cx,cy,w,h")->required();
  lab->add_option("--b2", b2, "cx,cy,w,h")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const Context ctx{&args, &out, &err};
  try {
    if (gen->parsed()) return cmd_gen_data(ctx, c, scenes, gallery);
    if (val->parsed()) return cmd_validate(ctx, c, path);
    if (ann->parsed()) return cmd_annotate_filter(ctx, c, path, refine, audit_fraction, audit_rounds);
    if (train->parsed()) return cmd_train(ctx, c, data_path, resume, epochs);
    if (ev->parsed()) return cmd_eval(ctx, c, ckpt, data_path, rotation);
    if (gr->parsed()) return cmd_ground(ctx, c, ckpt, data_path, image_path, text);
    if (ab->parsed()) return cmd_ablate(ctx, c, train_path, gallery_path, seeds, kind);
    if (rot->parsed()) return cmd_rotate_eval(ctx, c, ckpt, train_path, gallery_path, seeds);
    if (lab->parsed()) return cmd_label_spatial(ctx, c, b1, b2);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace aerialtext::cli
