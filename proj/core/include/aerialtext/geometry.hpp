// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Normalized center-format boxes, overlap measures, and the 3x3 spatial
// relation vocabulary. Image coordinates: x grows rightward, y grows downward.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace aerialtext::geometry {

struct BBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  double x0() const { return cx - w / 2; }
  double x1() const { return cx + w / 2; }
  double y0() const { return cy - h / 2; }
  double y1() const { return cy + h / 2; }
  double area() const { return w * h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Empty when valid, otherwise the reason ("degenerate bbox", ...).
std::optional<std::string> check_bbox(const BBox& b);
void require_valid(const BBox& b);  // throws std::invalid_argument

double iou(const BBox& a, const BBox& b);
double giou(const BBox& a, const BBox& b);

enum class Vertical { Top = 0, Middle = 1, Bottom = 2 };
enum class Horizontal { Left = 0, Middle = 1, Right = 2 };

struct SpatialRelation {
  Vertical vertical = Vertical::Middle;
  Horizontal horizontal = Horizontal::Middle;

  int class_index() const { return 3 * static_cast<int>(vertical) + static_cast<int>(horizontal); }
  static SpatialRelation from_index(int index);

  friend bool operator==(const SpatialRelation&, const SpatialRelation&) = default;
};

inline constexpr int kNumRelations = 9;

std::string_view to_string(Vertical v);
std::string_view to_string(Horizontal h);
/// "vertical-horizontal", e.g. "middle-left".
std::string to_string(const SpatialRelation& r);

/// Position of b1 relative to b2. Thresholds scale with b1's extent; the
/// middle band is closed (|dx| == w/2 counts as middle).
SpatialRelation spatial_label(const BBox& b1, const BBox& b2);

/// Third of the frame containing the box center. Values exactly on 1/3 or 2/3
/// belong to the lower-index band.
SpatialRelation frame_cell(const BBox& b);

/// Fixed injective phrase table, indexed by class_index.
const std::array<std::string_view, kNumRelations>& phrase_table();
std::string_view phrase_for(const SpatialRelation& r);

}  // namespace aerialtext::geometry
