// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aerialtext::geometry {

namespace {

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

// Areas from the same corners as the intersection, so identical boxes give
// exactly 1.
double corner_area(const BBox& b) { return (b.x1() - b.x0()) * (b.y1() - b.y0()); }

int band(double v) {
  if (v <= 1.0 / 3.0) return 0;
  if (v <= 2.0 / 3.0) return 1;
  return 2;
}

}  // namespace

std::optional<std::string> check_bbox(const BBox& b) {
  const bool finite = std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
                      std::isfinite(b.h);
  if (!finite) return "non-finite bbox";
  if (b.w <= 0 || b.h <= 0) return "degenerate bbox";
  if (b.w > 1 || b.h > 1) return "bbox extent exceeds frame";
  if (b.cx < 0 || b.cx > 1 || b.cy < 0 || b.cy > 1) return "bbox center outside frame";
  const double cw = std::min(b.x1(), 1.0) - std::max(b.x0(), 0.0);
  const double ch = std::min(b.y1(), 1.0) - std::max(b.y0(), 0.0);
  if (cw <= 0 || ch <= 0) return "degenerate bbox";
  return std::nullopt;
}

void require_valid(const BBox& b) {
  if (auto why = check_bbox(b)) {
    throw std::invalid_argument(*why + " (" + std::to_string(b.cx) + "," + std::to_string(b.cy) +
                                "," + std::to_string(b.w) + "," + std::to_string(b.h) + ")");
  }
}

double iou(const BBox& a, const BBox& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection_area(a, b);
  const double uni = corner_area(a) + corner_area(b) - inter;
  return std::min(1.0, inter / uni);
}

double giou(const BBox& a, const BBox& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection_area(a, b);
  const double uni = corner_area(a) + corner_area(b) - inter;
  const double enclosing = (std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0())) *
                           (std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0()));
  return std::min(1.0, inter / uni) - std::max(0.0, enclosing - uni) / enclosing;
}

SpatialRelation SpatialRelation::from_index(int index) {
  if (index < 0 || index >= kNumRelations) {
    throw std::out_of_range("spatial relation index " + std::to_string(index));
  }
  return {static_cast<Vertical>(index / 3), static_cast<Horizontal>(index % 3)};
}

std::string_view to_string(Vertical v) {
  switch (v) {
    case Vertical::Top: return "top";
    case Vertical::Middle: return "middle";
    case Vertical::Bottom: return "bottom";
  }
  return "?";
}

std::string_view to_string(Horizontal h) {
  switch (h) {
    case Horizontal::Left: return "left";
    case Horizontal::Middle: return "middle";
    case Horizontal::Right: return "right";
  }
  return "?";
}

std::string to_string(const SpatialRelation& r) {
  return std::string(to_string(r.vertical)) + "-" + std::string(to_string(r.horizontal));
}

SpatialRelation spatial_label(const BBox& b1, const BBox& b2) {
  require_valid(b1);
  require_valid(b2);
  const double dx = b2.cx - b1.cx;
  const double dy = b2.cy - b1.cy;
  SpatialRelation r;
  // b2 further right means b1 is on the left; b2 lower means b1 is on top.
  if (dx > b1.w / 2) {
    r.horizontal = Horizontal::Left;
  } else if (dx < -b1.w / 2) {
    r.horizontal = Horizontal::Right;
  } else {
    r.horizontal = Horizontal::Middle;
  }
  if (dy > b1.h / 2) {
    r.vertical = Vertical::Top;
  } else if (dy < -b1.h / 2) {
    r.vertical = Vertical::Bottom;
  } else {
    r.vertical = Vertical::Middle;
  }
  return r;
}

SpatialRelation frame_cell(const BBox& b) {
  require_valid(b);
  return {static_cast<Vertical>(band(b.cy)), static_cast<Horizontal>(band(b.cx))};
}

const std::array<std::string_view, kNumRelations>& phrase_table() {
  static constexpr std::array<std::string_view, kNumRelations> kPhrases = {
      "upper left", "upper side",    "upper right",  //
      "left side",  "in the center", "right side",   //
      "down left",  "down side",     "down right",
  };
  return kPhrases;
}

std::string_view phrase_for(const SpatialRelation& r) { return phrase_table()[r.class_index()]; }

}  // namespace aerialtext::geometry
