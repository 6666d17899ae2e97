// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "aerialtext/text.hpp"

namespace aerialtext::annotate {

namespace {

struct PhraseWords {
  std::vector<std::string> words;
  SpatialRelation relation;
};

const std::vector<PhraseWords>& vocabulary_phrases() {
  static const std::vector<PhraseWords> kPhrases = [] {
    std::vector<PhraseWords> out;
    for (int i = 0; i < geometry::kNumRelations; ++i) {
      const auto rel = SpatialRelation::from_index(i);
      out.push_back({text::tokenize_words(geometry::phrase_for(rel)), rel});
    }
    // Longest first so "in the center" wins over any shorter overlap.
    std::stable_sort(out.begin(), out.end(), [](const PhraseWords& a, const PhraseWords& b) {
      return a.words.size() > b.words.size();
    });
    return out;
  }();
  return kPhrases;
}

template <class T>
void set_axis(std::optional<T>& slot, T value, bool& conflicting) {
  if (slot && *slot != value) conflicting = true;
  slot = value;
}

std::string axis_name(const ParsedSpatial& p) {
  std::string out;
  if (p.vertical) out += std::string(geometry::to_string(*p.vertical));
  if (p.horizontal) {
    if (!out.empty()) out += "-";
    out += std::string(geometry::to_string(*p.horizontal));
  }
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Position of the first whole-word, case-insensitive occurrence of `word`.
std::size_t find_word(const std::string& lower, std::string_view word) {
  std::size_t pos = 0;
  while ((pos = lower.find(word, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= lower.size() || !is_word_char(lower[end]);
    if (left_ok && right_ok) return pos;
    pos = end;
  }
  return std::string::npos;
}

}  // namespace

std::vector<std::string> RefereeConfig::default_indicators() {
  std::vector<std::string> out;
  for (auto p : geometry::phrase_table()) out.emplace_back(p);
  for (auto w : {"left", "right", "center", "top", "bottom", "upper", "down", "middle"}) {
    out.emplace_back(w);
  }
  return out;
}

RefereeConfig RefereeConfig::from_kv(const KeyValueConfig& kv) {
  kv.require_known({"blacklist", "required_indicators", "case_sensitive"});
  RefereeConfig c;
  c.blacklist = kv.get_list("blacklist", c.blacklist);
  c.required_indicators = kv.get_list("required_indicators", c.required_indicators);
  c.case_sensitive = kv.get_bool("case_sensitive", c.case_sensitive);
  c.validate();
  return c;
}

void RefereeConfig::validate() const {
  if (blacklist.empty()) throw std::invalid_argument("referee config: blacklist is empty");
  if (required_indicators.empty()) {
    throw std::invalid_argument("referee config: required_indicators is empty");
  }
}

std::string RefereeVerdict::reason() const {
  switch (kind) {
    case Kind::Accept: return "";
    case Kind::NegativeTerm: return "negative term \"" + term + "\"";
    case Kind::MissingIndicator: return "missing spatial indicator";
  }
  return "";
}

RefereeVerdict referee_filter(std::string_view caption, const RefereeConfig& cfg) {
  std::string norm = text::collapse_whitespace(caption);
  if (!cfg.case_sensitive) norm = text::to_lower(norm);
  auto contains = [&](const std::string& term) {
    const std::string t = cfg.case_sensitive ? term : text::to_lower(term);
    return !t.empty() && norm.find(t) != std::string::npos;
  };
  for (const auto& term : cfg.blacklist) {
    if (contains(term)) return {RefereeVerdict::Kind::NegativeTerm, term};
  }
  const bool has_indicator = std::any_of(cfg.required_indicators.begin(),
                                         cfg.required_indicators.end(), contains);
  if (!has_indicator) return {RefereeVerdict::Kind::MissingIndicator, ""};
  return {};
}

ParsedSpatial parse_spatial(std::string_view input) {
  const auto tokens = text::tokenize_words(input);
  ParsedSpatial p;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    for (const auto& phrase : vocabulary_phrases()) {
      const auto& w = phrase.words;
      if (i + w.size() <= tokens.size() &&
          std::equal(w.begin(), w.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        set_axis(p.vertical, phrase.relation.vertical, p.conflicting);
        set_axis(p.horizontal, phrase.relation.horizontal, p.conflicting);
        i += w.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const auto& t = tokens[i];
    if (t == "left") {
      set_axis(p.horizontal, Horizontal::Left, p.conflicting);
    } else if (t == "right") {
      set_axis(p.horizontal, Horizontal::Right, p.conflicting);
    } else if (t == "upper" || t == "top") {
      set_axis(p.vertical, Vertical::Top, p.conflicting);
    } else if (t == "down" || t == "bottom" || t == "lower") {
      set_axis(p.vertical, Vertical::Bottom, p.conflicting);
    } else if (t == "center" || t == "centre" || t == "middle") {
      set_axis(p.vertical, Vertical::Middle, p.conflicting);
      set_axis(p.horizontal, Horizontal::Middle, p.conflicting);
    }
    ++i;
  }
  return p;
}

std::optional<SpatialRelation> parse_phrase(std::string_view phrase) {
  const auto tokens = text::tokenize_words(phrase);
  for (const auto& p : vocabulary_phrases()) {
    if (p.words == tokens) return p.relation;
  }
  return std::nullopt;
}

std::string ConsistencyResult::reason() const {
  switch (kind) {
    case Kind::Keep: return "";
    case Kind::NoPhrase: return "no spatial phrase";
    case Kind::Conflicting: return "conflicting spatial terms";
    case Kind::Mismatch:
      return "text says " + axis_name(found) + ", box is " + geometry::to_string(expected);
  }
  return "";
}

ConsistencyResult spatial_consistency_filter(std::string_view region_text, const BBox& bbox) {
  ConsistencyResult r;
  r.expected = geometry::frame_cell(bbox);
  r.found = parse_spatial(region_text);
  if (r.found.conflicting) {
    r.kind = ConsistencyResult::Kind::Conflicting;
  } else if (r.found.empty()) {
    r.kind = ConsistencyResult::Kind::NoPhrase;
  } else if ((r.found.vertical && *r.found.vertical != r.expected.vertical) ||
             (r.found.horizontal && *r.found.horizontal != r.expected.horizontal)) {
    r.kind = ConsistencyResult::Kind::Mismatch;
  }
  return r;
}

std::string refine_vertical(std::string_view region_text, const BBox& bbox) {
  std::string out(region_text);
  const auto parsed = parse_spatial(region_text);
  if (parsed.conflicting || !parsed.horizontal || parsed.vertical) return out;
  const auto cell = geometry::frame_cell(bbox);
  if (cell.vertical == Vertical::Middle) return out;
  const auto word = geometry::to_string(*parsed.horizontal);
  const auto pos = find_word(text::to_lower(out), word);
  if (pos == std::string::npos) return out;
  const auto phrase = geometry::phrase_for({cell.vertical, *parsed.horizontal});
  out.replace(pos, word.size(), phrase);
  return out;
}

void AuditPlan::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("audit plan: fraction must lie in (0,1]");
  }
  if (rounds < 1) throw std::invalid_argument("audit plan: rounds must be >= 1");
}

std::vector<std::vector<std::string>> audit_sample(std::span<const std::string> ids,
                                                   const AuditPlan& plan) {
  plan.validate();
  if (ids.empty()) throw std::invalid_argument("audit_sample: empty dataset");
  const std::size_t n = ids.size();
  // The epsilon keeps exact products such as 0.2 * 10 from rounding up.
  auto k = static_cast<std::size_t>(std::ceil(plan.fraction * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<std::vector<std::string>> rounds;
  for (int round = 0; round < plan.rounds; ++round) {
    Rng rng(mix_seed(plan.seed, static_cast<std::uint64_t>(round)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::vector<std::string> picked;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(idx[i], idx[j]);
      picked.push_back(ids[idx[i]]);
    }
    rounds.push_back(std::move(picked));
  }
  return rounds;
}

std::vector<RoundGrade> summarize_grades(const std::vector<std::vector<std::string>>& rounds,
                                         const std::map<std::string, bool>& grades) {
  std::vector<RoundGrade> out;
  for (const auto& round : rounds) {
    RoundGrade g;
    for (const auto& id : round) {
      auto it = grades.find(id);
      if (it == grades.end()) continue;
      ++g.graded;
      if (it->second) ++g.excellent;
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace aerialtext::annotate
