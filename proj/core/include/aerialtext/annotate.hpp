// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic caption-quality filters: keyword referee, frame-position
// consistency check, vertical-term refinement, and audit sampling.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aerialtext/geometry.hpp"
#include "aerialtext/util.hpp"

namespace aerialtext::annotate {

using geometry::BBox;
using geometry::Horizontal;
using geometry::SpatialRelation;
using geometry::Vertical;

struct RefereeConfig {
  std::vector<std::string> blacklist = {"img src", "[image]", "sorry", "i cannot", "http://",
                                        "https://"};
  std::vector<std::string> required_indicators = default_indicators();
  bool case_sensitive = false;

  static std::vector<std::string> default_indicators();
  static RefereeConfig from_kv(const KeyValueConfig& kv);
  void validate() const;
};

struct RefereeVerdict {
  enum class Kind { Accept, NegativeTerm, MissingIndicator };
  Kind kind = Kind::Accept;
  std::string term;  // offending blacklist entry for NegativeTerm

  bool accepted() const { return kind == Kind::Accept; }
  std::string reason() const;
};

/// Blacklist first, then required indicators; substring matching on the
/// whitespace-collapsed caption.
RefereeVerdict referee_filter(std::string_view caption, const RefereeConfig& cfg);

struct ParsedSpatial {
  std::optional<Vertical> vertical;
  std::optional<Horizontal> horizontal;
  bool conflicting = false;
  bool empty() const { return !vertical && !horizontal; }
};

/// Word-level parse of spatial terms. Full vocabulary phrases set both axes;
/// bare words set one ("left", "upper"); "center"/"middle" set both to middle.
ParsedSpatial parse_spatial(std::string_view text);

/// Inverse of geometry::phrase_for on the nine vocabulary phrases.
std::optional<SpatialRelation> parse_phrase(std::string_view phrase);

struct ConsistencyResult {
  enum class Kind { Keep, Mismatch, NoPhrase, Conflicting };
  Kind kind = Kind::Keep;
  ParsedSpatial found;       // parsed from the text
  SpatialRelation expected;  // frame cell of the box

  bool kept() const { return kind == Kind::Keep; }
  std::string reason() const;
};

ConsistencyResult spatial_consistency_filter(std::string_view region_text, const BBox& bbox);

/// Upgrades a horizontal-only phrase to the combined vertical phrase when the
/// box sits in the top or bottom third. Idempotent.
std::string refine_vertical(std::string_view region_text, const BBox& bbox);

struct AuditPlan {
  double fraction = 0.2;
  int rounds = 5;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Per round, ceil(fraction * N) ids drawn uniformly without replacement.
std::vector<std::vector<std::string>> audit_sample(std::span<const std::string> ids,
                                                   const AuditPlan& plan);

struct RoundGrade {
  std::size_t graded = 0;
  std::size_t excellent = 0;
  double rate() const { return graded ? static_cast<double>(excellent) / static_cast<double>(graded) : 0.0; }
};

inline constexpr double kExcellenceThreshold = 0.9;

/// Summarizes externally supplied grades (id -> excellent?) per audit round.
std::vector<RoundGrade> summarize_grades(const std::vector<std::vector<std::string>>& rounds,
                                         const std::map<std::string, bool>& grades);

}  // namespace aerialtext::annotate
