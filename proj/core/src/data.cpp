// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/data.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "aerialtext/text.hpp"

namespace aerialtext::data {

using geometry::SpatialRelation;
using json = nlohmann::ordered_json;

namespace {

struct SizeRange {
  double w_lo, w_hi, h_lo, h_hi;
};

SizeRange size_range(ObjectShape s) {
  switch (s) {
    case ObjectShape::Block: return {0.22, 0.30, 0.22, 0.30};
    case ObjectShape::Tower: return {0.14, 0.18, 0.32, 0.40};
    case ObjectShape::Dome: return {0.24, 0.32, 0.24, 0.32};
    case ObjectShape::Lot: return {0.36, 0.44, 0.18, 0.24};
    case ObjectShape::Road: return {0.50, 0.60, 0.12, 0.15};
  }
  return {0.2, 0.2, 0.2, 0.2};
}

std::string_view descriptor(ObjectShape s) {
  switch (s) {
    case ObjectShape::Block: return "a square building with a flat roof";
    case ObjectShape::Tower: return "a tall narrow building";
    case ObjectShape::Dome: return "a round building with a curved roof";
    case ObjectShape::Lot: return "a wide open parking lot";
    case ObjectShape::Road: return "a long straight road";
  }
  return "";
}

constexpr std::array<std::string_view, 7> kCountWords = {"zero", "one",  "two", "three",
                                                         "four", "five", "six"};

// Literal template text; vocabulary() is derived from these fragments.
constexpr std::string_view kD1Open = "A {platform} view of a university campus with {n} main structures.";
constexpr std::string_view kD1Item = "There is a {c} {s} {locate}.";
constexpr std::string_view kD1Close =
    "Narrow paths and open ground connect the structures, and the surrounding area looks quiet "
    "and clear.";
constexpr std::string_view kD2Open = "This {platform} image shows";
constexpr std::string_view kD2Close =
    "Every structure stands apart from the others, so the layout of the site is easy to read "
    "from above.";
constexpr std::string_view kD3Open = "Seen from the {platform}, the scene holds {n} structures on gray ground.";
constexpr std::string_view kD3Item = "{Locate} we find a {c} {s}, {descriptor}.";
constexpr std::string_view kD3Close = "No people or vehicles are visible in the picture.";
constexpr std::string_view kRegionRef = "the {c} {s} on the {phrase} of the {rc} {rs}, {descriptor}";
constexpr std::string_view kRegionFrame = "the {c} {s} {locate}, {descriptor}";

std::string locate(const SpatialRelation& r) {
  const auto phrase = geometry::phrase_for(r);
  if (phrase.rfind("in ", 0) == 0) return std::string(phrase);
  return "in the " + std::string(phrase);
}

std::string object_name(const SceneObject& o) {
  return std::string(to_string(o.color)) + " " + std::string(to_string(o.shape));
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string count_word(std::size_t n) {
  return n < kCountWords.size() ? std::string(kCountWords[n]) : std::to_string(n);
}

std::vector<std::string> global_descriptions(const std::vector<SceneObject>& objects,
                                             Platform platform) {
  const std::string plat(to_string(platform));
  const std::string n = count_word(objects.size());

  std::string d1 = "A " + plat + " view of a university campus with " + n + " main structures.";
  for (const auto& o : objects) {
    d1 += " There is a " + object_name(o) + " " + locate(geometry::frame_cell(o.bbox)) + ".";
  }
  d1 += " " + std::string(kD1Close);

  std::string d2 = "This " + plat + " image shows ";
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i > 0) d2 += (i + 1 == objects.size()) ? " and " : ", ";
    d2 += "a " + object_name(objects[i]) + " " + locate(geometry::frame_cell(objects[i].bbox));
  }
  d2 += ". " + std::string(kD2Close);

  std::string d3 = "Seen from the " + plat + ", the scene holds " + n + " structures on gray ground.";
  for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
    d3 += " " + capitalize(locate(geometry::frame_cell(it->bbox))) + " we find a " +
          object_name(*it) + ", " + std::string(descriptor(it->shape)) + ".";
  }
  d3 += " " + std::string(kD3Close);
  return {d1, d2, d3};
}

// Reference object whose relation to `o` agrees with o's frame cell, so the
// relative phrase stays consistent with the frame-based filter.
int pick_reference(const std::vector<SceneObject>& objects, int index) {
  const auto& o = objects[static_cast<std::size_t>(index)];
  const auto cell = geometry::frame_cell(o.bbox);
  if (cell == SpatialRelation{}) return -1;
  for (std::size_t q = 0; q < objects.size(); ++q) {
    if (static_cast<int>(q) == index) continue;
    if (geometry::spatial_label(o.bbox, objects[q].bbox) == cell) return static_cast<int>(q);
  }
  return -1;
}

std::string region_text(const std::vector<SceneObject>& objects, int index, int reference) {
  const auto& o = objects[static_cast<std::size_t>(index)];
  const auto cell = geometry::frame_cell(o.bbox);
  if (reference >= 0) {
    const auto& r = objects[static_cast<std::size_t>(reference)];
    return "the " + object_name(o) + " on the " + std::string(geometry::phrase_for(cell)) +
           " of the " + object_name(r) + ", " + std::string(descriptor(o.shape));
  }
  return "the " + object_name(o) + " " + locate(cell) + ", " + std::string(descriptor(o.shape));
}

BBox place(Rng& rng, ObjectShape shape) {
  const auto sr = size_range(shape);
  BBox b;
  b.w = rng.uniform(sr.w_lo, sr.w_hi);
  b.h = shape == ObjectShape::Dome ? b.w * rng.uniform(0.9, 1.1) : rng.uniform(sr.h_lo, sr.h_hi);
  b.cx = rng.uniform(b.w / 2, 1 - b.w / 2);
  b.cy = rng.uniform(b.h / 2, 1 - b.h / 2);
  return b;
}

std::uint8_t shade(std::uint8_t v, double factor) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * factor), 0L, 255L));
}

Image render_colored(std::span<const SceneObject> objects, std::span<const Rgb> colors, int size) {
  Image img(size, size);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const Rgb rgb = colors[i];
    const bool ellipse = o.shape == ObjectShape::Dome;
    for (int y = 0; y < size; ++y) {
      const double py = (y + 0.5) / size;
      for (int x = 0; x < size; ++x) {
        const double px = (x + 0.5) / size;
        const double nx = (px - o.bbox.cx) / (o.bbox.w / 2);
        const double ny = (py - o.bbox.cy) / (o.bbox.h / 2);
        const bool inside = ellipse ? (nx * nx + ny * ny <= 1.0)
                                    : (std::fabs(nx) <= 1.0 && std::fabs(ny) <= 1.0);
        if (!inside) continue;
        auto* p = img.pixel(x, y);
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
      }
    }
  }
  return img;
}

std::size_t align_up(std::size_t x, std::size_t stride) { return (x + stride - 1) / stride * stride; }

std::size_t word_count(std::string_view s) { return text::tokenize_words(s).size(); }

json bbox_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

}  // namespace

std::string_view to_string(ObjectShape s) {
  switch (s) {
    case ObjectShape::Block: return "block";
    case ObjectShape::Tower: return "tower";
    case ObjectShape::Dome: return "dome";
    case ObjectShape::Lot: return "lot";
    case ObjectShape::Road: return "road";
  }
  return "?";
}

std::string_view to_string(Color c) {
  switch (c) {
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Blue: return "blue";
    case Color::Yellow: return "yellow";
    case Color::Orange: return "orange";
    case Color::Purple: return "purple";
    case Color::White: return "white";
    case Color::Black: return "black";
  }
  return "?";
}

std::string_view to_string(Platform p) {
  switch (p) {
    case Platform::Drone: return "drone";
    case Platform::Satellite: return "satellite";
    case Platform::Ground: return "ground";
  }
  return "?";
}

std::optional<Platform> parse_platform(std::string_view s) {
  if (s == "drone") return Platform::Drone;
  if (s == "satellite") return Platform::Satellite;
  if (s == "ground") return Platform::Ground;
  return std::nullopt;
}

Rgb color_rgb(Color c) {
  switch (c) {
    case Color::Red: return {200, 40, 40};
    case Color::Green: return {40, 160, 60};
    case Color::Blue: return {40, 70, 200};
    case Color::Yellow: return {230, 210, 50};
    case Color::Orange: return {240, 140, 30};
    case Color::Purple: return {140, 60, 170};
    case Color::White: return {240, 240, 240};
    case Color::Black: return {25, 25, 25};
  }
  return kBackground;
}

GenConfig GenConfig::from_kv(const KeyValueConfig& kv) {
  GenConfig c;
  c.image_size = static_cast<int>(kv.get_int("image_size", c.image_size));
  c.min_objects = static_cast<int>(kv.get_int("min_objects", c.min_objects));
  c.max_objects = static_cast<int>(kv.get_int("max_objects", c.max_objects));
  c.p_three_regions = kv.get_double("p_three_regions", c.p_three_regions);
  c.views_per_class = static_cast<int>(kv.get_int("views_per_class", c.views_per_class));
  c.max_pair_iou = kv.get_double("max_pair_iou", c.max_pair_iou);
  c.max_retries = static_cast<int>(kv.get_int("max_retries", c.max_retries));
  c.view_jitter = kv.get_double("view_jitter", c.view_jitter);
  c.validate();
  return c;
}

KeyValueConfig GenConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("image_size", std::to_string(image_size));
  kv.set("min_objects", std::to_string(min_objects));
  kv.set("max_objects", std::to_string(max_objects));
  kv.set("p_three_regions", format_double(p_three_regions));
  kv.set("views_per_class", std::to_string(views_per_class));
  kv.set("max_pair_iou", format_double(max_pair_iou));
  kv.set("max_retries", std::to_string(max_retries));
  kv.set("view_jitter", format_double(view_jitter));
  return kv;
}

void GenConfig::validate() const {
  if (image_size < 8) throw std::invalid_argument("gen config: image_size must be >= 8");
  if (min_objects < 2 || max_objects < min_objects || max_objects > 6) {
    throw std::invalid_argument("gen config: need 2 <= min_objects <= max_objects <= 6");
  }
  if (p_three_regions < 0 || p_three_regions > 1) {
    throw std::invalid_argument("gen config: p_three_regions must lie in [0,1]");
  }
  if (views_per_class < 1 || views_per_class > 3) {
    throw std::invalid_argument("gen config: views_per_class must lie in [1,3]");
  }
  if (max_retries < 1) throw std::invalid_argument("gen config: max_retries must be >= 1");
  if (view_jitter < 0 || view_jitter > 0.2) {
    throw std::invalid_argument("gen config: view_jitter must lie in [0,0.2]");
  }
}

Image render(std::span<const SceneObject> objects, int size) {
  std::vector<Rgb> colors;
  for (const auto& o : objects) colors.push_back(color_rgb(o.color));
  return render_colored(objects, colors, size);
}

Scene generate_scene(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  const auto views = static_cast<std::uint64_t>(cfg.views_per_class);
  const std::uint64_t class_id = seed / views;
  const auto view = static_cast<int>(seed % views);

  // Layout depends only on the class; the view adds jitter and shading.
  Rng layout_rng(mix_seed(class_id, 0x1a7001));
  const int span = cfg.max_objects - cfg.min_objects + 1;
  const int n_objects = cfg.min_objects + static_cast<int>(layout_rng.below(static_cast<std::size_t>(span)));
  std::vector<SceneObject> objects;
  for (int i = 0; i < n_objects; ++i) {
    SceneObject o;
    o.shape = static_cast<ObjectShape>(layout_rng.below(kNumShapes));
    o.color = static_cast<Color>(layout_rng.below(kNumColors));
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      o.bbox = place(layout_rng, o.shape);
      placed = std::all_of(objects.begin(), objects.end(), [&](const SceneObject& q) {
        return geometry::iou(o.bbox, q.bbox) <= cfg.max_pair_iou;
      });
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: cannot place " + std::to_string(n_objects) +
                               " objects without overlap for seed " + std::to_string(seed) +
                               " after " + std::to_string(cfg.max_retries) + " retries");
    }
    objects.push_back(o);
  }

  Rng view_rng(mix_seed(seed, 0x71e3));
  std::vector<double> shades;
  for (auto& o : objects) {
    if (view > 0) {
      o.bbox.cx = std::clamp(o.bbox.cx + view_rng.uniform(-cfg.view_jitter, cfg.view_jitter),
                             o.bbox.w / 2, 1 - o.bbox.w / 2);
      o.bbox.cy = std::clamp(o.bbox.cy + view_rng.uniform(-cfg.view_jitter, cfg.view_jitter),
                             o.bbox.h / 2, 1 - o.bbox.h / 2);
    }
    shades.push_back(view_rng.uniform(0.9, 1.1));
  }

  std::vector<std::size_t> order(objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return objects[a].bbox.area() > objects[b].bbox.area();
  });
  std::vector<SceneObject> sorted;
  std::vector<double> sorted_shades;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    sorted.push_back(objects[order[rank]]);
    sorted.back().salience = static_cast<int>(rank) + 1;
    sorted_shades.push_back(shades[order[rank]]);
  }

  Scene scene;
  scene.objects = std::move(sorted);
  const bool three = view_rng.bernoulli(cfg.p_three_regions);
  const int n_regions = std::min(three ? 3 : 2, n_objects);

  Sample& s = scene.sample;
  s.image_id = "scene_" + std::to_string(seed);
  s.class_id = static_cast<std::int64_t>(class_id);
  s.platform = static_cast<Platform>(view);
  s.image_path = "images/" + s.image_id + ".ppm";
  s.global_descriptions = global_descriptions(scene.objects, s.platform);
  for (int r = 0; r < n_regions; ++r) {
    const int ref = pick_reference(scene.objects, r);
    scene.region_objects.push_back(r);
    scene.region_reference.push_back(ref);
    s.regions.push_back({scene.objects[static_cast<std::size_t>(r)].bbox,
                         region_text(scene.objects, r, ref)});
  }

  std::vector<Rgb> colors;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const Rgb base = color_rgb(scene.objects[i].color);
    colors.push_back({shade(base[0], sorted_shades[i]), shade(base[1], sorted_shades[i]),
                      shade(base[2], sorted_shades[i])});
  }
  scene.image = render_colored(scene.objects, colors, cfg.image_size);
  return scene;
}

std::vector<std::uint64_t> split_seeds(std::uint64_t base_seed, std::size_t n_train,
                                       std::size_t n_gallery, const GenConfig& cfg,
                                       bool gallery) {
  const auto stride = static_cast<std::size_t>(cfg.views_per_class);
  // Each base seed owns its own block of scene ids.
  const std::size_t train0 = align_up(static_cast<std::size_t>(base_seed) << 24, stride);
  const std::size_t start = gallery ? align_up(train0 + n_train, stride) : train0;
  const std::size_t count = gallery ? n_gallery : n_train;
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = start + i;
  return seeds;
}

Corpus generate_corpus(std::span<const std::uint64_t> seeds, const GenConfig& cfg) {
  Corpus c;
  c.samples.reserve(seeds.size());
  c.images.reserve(seeds.size());
  for (auto seed : seeds) {
    auto scene = generate_scene(seed, cfg);
    c.samples.push_back(std::move(scene.sample));
    c.images.push_back(std::move(scene.image));
  }
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    write_ppm(corpus.images[i], dir / corpus.samples[i].image_path);
  }
  write_jsonl(corpus.samples, dir / (name + ".jsonl"));
}

Corpus load_corpus(const std::filesystem::path& jsonl_path) {
  Corpus c;
  c.samples = read_jsonl(jsonl_path);
  const auto base = jsonl_path.parent_path();
  for (const auto& s : c.samples) c.images.push_back(read_ppm(base / s.image_path));
  return c;
}

std::string to_json_line(const Sample& s) {
  json j;
  j["image_id"] = s.image_id;
  j["class_id"] = s.class_id;
  j["platform"] = std::string(to_string(s.platform));
  j["image_path"] = s.image_path;
  j["global_descriptions"] = s.global_descriptions;
  json regions = json::array();
  for (const auto& r : s.regions) {
    json rj;
    rj["bbox"] = bbox_json(r.bbox);
    rj["text"] = r.text;
    regions.push_back(std::move(rj));
  }
  j["regions"] = std::move(regions);
  return j.dump();
}

void write_jsonl(std::span<const Sample> samples, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : samples) out += to_json_line(s) + "\n";
  write_file(path, out);
}

std::vector<Sample> parse_jsonl(std::string_view contents) {
  std::vector<Sample> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    const auto line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      Sample s;
      s.image_id = j.at("image_id").get<std::string>();
      s.class_id = j.at("class_id").get<std::int64_t>();
      const auto plat = j.at("platform").get<std::string>();
      auto p = parse_platform(plat);
      if (!p) throw std::invalid_argument("unknown platform '" + plat + "'");
      s.platform = *p;
      s.image_path = j.at("image_path").get<std::string>();
      s.global_descriptions = j.at("global_descriptions").get<std::vector<std::string>>();
      for (const auto& rj : j.at("regions")) {
        const auto b = rj.at("bbox").get<std::vector<double>>();
        if (b.size() != 4) throw std::invalid_argument("bbox must have 4 numbers");
        s.regions.push_back({{b[0], b[1], b[2], b[3]}, rj.at("text").get<std::string>()});
      }
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return out;
}

std::vector<Sample> read_jsonl(const std::filesystem::path& path) {
  try {
    return parse_jsonl(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

ValidationReport validate(std::span<const Sample> samples, const StatBands& bands) {
  ValidationReport rep;
  std::set<std::int64_t> classes;
  std::set<std::string> ids;
  std::size_t desc_words = 0, region_words = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto flag = [&](std::string reason) { rep.violations.push_back({i + 1, s.image_id, std::move(reason)}); };
    if (s.image_id.empty()) flag("empty image_id");
    if (!ids.insert(s.image_id).second) flag("duplicate image_id");
    if (s.global_descriptions.size() != 3) {
      flag("expected 3 global descriptions, found " + std::to_string(s.global_descriptions.size()));
    }
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
      const auto& reg = s.regions[r];
      if (auto why = geometry::check_bbox(reg.bbox)) flag("region " + std::to_string(r) + ": " + *why);
      const auto lower = text::to_lower(reg.text);
      const auto& phrases = geometry::phrase_table();
      const bool has_phrase = std::any_of(phrases.begin(), phrases.end(), [&](std::string_view p) {
        return lower.find(p) != std::string::npos;
      });
      if (!has_phrase) flag("region " + std::to_string(r) + ": text lacks a spatial phrase");
      region_words += word_count(reg.text);
    }
    for (const auto& d : s.global_descriptions) desc_words += word_count(d);
    classes.insert(s.class_id);
    rep.stats.descriptions += s.global_descriptions.size();
    rep.stats.bbox_texts += s.regions.size();
  }
  rep.stats.images = samples.size();
  rep.stats.classes = classes.size();
  if (rep.stats.descriptions > 0) {
    rep.stats.mean_words_per_description =
        static_cast<double>(desc_words) / static_cast<double>(rep.stats.descriptions);
  }
  if (rep.stats.bbox_texts > 0) {
    rep.stats.mean_words_per_region_text =
        static_cast<double>(region_words) / static_cast<double>(rep.stats.bbox_texts);
  }
  if (rep.stats.images > 0) {
    rep.stats.mean_regions_per_image =
        static_cast<double>(rep.stats.bbox_texts) / static_cast<double>(rep.stats.images);
    auto band = [&](const char* name, double v, double lo, double hi) {
      if (v < lo || v > hi) {
        rep.drift_flags.push_back(std::string(name) + " " + format_double(v) + " outside [" +
                                  format_double(lo) + ", " + format_double(hi) + "]");
      }
    };
    band("mean regions per image", rep.stats.mean_regions_per_image, bands.regions_lo, bands.regions_hi);
    band("mean words per description", rep.stats.mean_words_per_description,
         bands.description_words_lo, bands.description_words_hi);
    band("mean words per region text", rep.stats.mean_words_per_region_text, bands.region_words_lo,
         bands.region_words_hi);
  }
  return rep;
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> kVocab = [] {
    std::set<std::string> words;
    auto add = [&](std::string_view s) {
      for (auto& w : text::tokenize_words(s)) words.insert(w);
    };
    for (auto frag : {kD1Open, kD1Item, kD1Close, kD2Open, kD2Close, kD3Open, kD3Item, kD3Close,
                      kRegionRef, kRegionFrame}) {
      add(frag);
    }
    for (int i = 0; i < kNumShapes; ++i) {
      add(to_string(static_cast<ObjectShape>(i)));
      add(descriptor(static_cast<ObjectShape>(i)));
    }
    for (int i = 0; i < kNumColors; ++i) add(to_string(static_cast<Color>(i)));
    for (int i = 0; i < 3; ++i) add(to_string(static_cast<Platform>(i)));
    for (auto w : kCountWords) add(w);
    for (auto p : geometry::phrase_table()) add(p);
    // Placeholders are not words.
    for (auto ph : {"platform", "n", "c", "s", "rc", "rs", "locate", "phrase", "descriptor"}) words.erase(ph);
    return std::vector<std::string>(words.begin(), words.end());
  }();
  return kVocab;
}

}  // namespace aerialtext::data
