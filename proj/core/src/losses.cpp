// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace aerialtext::losses {

namespace {

Tensor identity(std::size_t n) {
  Tensor eye = Tensor::zeros({n, n});
  auto d = eye.mutable_data();
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  return eye;
}

void require_square(const Tensor& s, const char* what) {
  if (s.rank() != 2 || s.rows() != s.cols()) {
    throw ad::ShapeError(std::string(what) + ": similarity must be square, got " +
                         ad::shape_str(s.shape()));
  }
  if (s.rows() < 2) throw std::invalid_argument(std::string(what) + ": batch needs N >= 2");
}

// Rows of a [n,4] box tensor split into corner coordinates.
struct Corners {
  Tensor x0, y0, x1, y1, area;
};

Corners corners(const Tensor& b) {
  const Tensor cx = ad::slice_cols(b, 0, 1);
  const Tensor cy = ad::slice_cols(b, 1, 2);
  const Tensor w = ad::slice_cols(b, 2, 3);
  const Tensor h = ad::slice_cols(b, 3, 4);
  const Tensor hw = ad::scale(w, 0.5);
  const Tensor hh = ad::scale(h, 0.5);
  return {cx - hw, cy - hh, cx + hw, cy + hh, w * h};
}

}  // namespace

Tensor itc_loss(const Tensor& similarity, const Tensor& tau) {
  require_square(similarity, "itc_loss");
  if (!(tau.item() > 0.0)) throw std::invalid_argument("itc_loss: temperature must be > 0");
  const std::size_t n = similarity.rows();
  const Tensor logits = ad::div(similarity, tau);
  const Tensor eye = identity(n);
  const Tensor v2t = ad::sum(ad::log_softmax_rows(logits) * eye);
  const Tensor t2v = ad::sum(ad::log_softmax_rows(ad::transpose(logits)) * eye);
  return ad::scale(v2t + t2v, -0.5 / static_cast<double>(n));
}

Tensor itc_loss(const Tensor& similarity, double tau) {
  return itc_loss(similarity, Tensor::scalar(tau));
}

HardNegatives sample_hard_negatives(const Tensor& similarity) {
  require_square(similarity, "sample_hard_negatives");
  const std::size_t n = similarity.rows();
  HardNegatives h;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_row = i == 0 ? 1 : 0;
    std::size_t best_col = best_row;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (similarity.at(i, j) > similarity.at(i, best_row)) best_row = j;
      if (similarity.at(j, i) > similarity.at(best_col, i)) best_col = j;
    }
    h.text_for_image.push_back(best_row);
    h.image_for_text.push_back(best_col);
    ad::note_branch((static_cast<std::uint64_t>(best_row) << 32) | best_col);
  }
  return h;
}

Tensor itm_loss(const Tensor& probs, std::span<const double> labels) {
  if (probs.numel() != labels.size() || labels.empty()) {
    throw ad::ShapeError("itm_loss: " + std::to_string(labels.size()) + " labels for probs " +
                         ad::shape_str(probs.shape()));
  }
  const Tensor p = ad::reshape(ad::clamp(probs, kProbClamp, 1.0 - kProbClamp), {labels.size(), 1});
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> not_y(labels.size());
  for (std::size_t i = 0; i < y.size(); ++i) not_y[i] = 1.0 - y[i];
  const Tensor ty({labels.size(), 1}, std::move(y));
  const Tensor tn({labels.size(), 1}, std::move(not_y));
  const Tensor ll = ty * ad::log(p) + tn * ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0));
  return ad::scale(ad::mean(ll), -1.0);
}

Tensor giou_rows(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2 || a.cols() != 4) {
    throw ad::ShapeError("giou: shape mismatch " + ad::shape_str(a.shape()) + " vs " +
                         ad::shape_str(b.shape()));
  }
  const Corners p = corners(a);
  const Corners q = corners(b);
  const Tensor iw = ad::relu(ad::minimum(p.x1, q.x1) - ad::maximum(p.x0, q.x0));
  const Tensor ih = ad::relu(ad::minimum(p.y1, q.y1) - ad::maximum(p.y0, q.y0));
  const Tensor inter = iw * ih;
  const Tensor uni = p.area + q.area - inter;
  const Tensor enclosing = (ad::maximum(p.x1, q.x1) - ad::minimum(p.x0, q.x0)) *
                           (ad::maximum(p.y1, q.y1) - ad::minimum(p.y0, q.y0));
  return inter / uni - (enclosing - uni) / enclosing;
}

Tensor grounding_loss(const Tensor& target, const Tensor& predicted) {
  const Tensor g = giou_rows(target, predicted);
  const Tensor l1 = ad::matmul(ad::abs(target - predicted), Tensor::filled({4, 1}, 1.0));
  return ad::mean(ad::add_scalar(l1 - g, 1.0));
}

double grounding_loss(const BBox& target, const BBox& predicted) {
  geometry::require_valid(target);
  geometry::require_valid(predicted);
  ad::NoGradGuard guard;
  const Tensor t({1, 4}, {target.cx, target.cy, target.w, target.h});
  const Tensor p({1, 4}, {predicted.cx, predicted.cy, predicted.w, predicted.h});
  return grounding_loss(t, p).item();
}

Tensor spatial_loss(const Tensor& logits, std::span<const int> labels) {
  if (labels.empty()) return Tensor::scalar(0.0);
  if (logits.rank() != 2 || logits.rows() != labels.size() ||
      logits.cols() != static_cast<std::size_t>(geometry::kNumRelations)) {
    throw ad::ShapeError("spatial_loss: logits " + ad::shape_str(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = logits.cols();
  Tensor onehot = Tensor::zeros({labels.size(), k});
  auto d = onehot.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(k)) {
      throw std::invalid_argument("spatial_loss: label out of range");
    }
    d[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return ad::scale(ad::sum(ad::log_softmax_rows(logits) * onehot),
                   -1.0 / static_cast<double>(labels.size()));
}

std::vector<SpatialPair> spatial_pairs(std::span<const BBox> boxes) {
  std::vector<SpatialPair> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (i == j) continue;
      out.push_back({i, j, geometry::spatial_label(boxes[i], boxes[j]).class_index()});
    }
  }
  return out;
}

Tensor total_loss(const Tensor& itc, const Tensor& itm, const Tensor& grounding,
                  const Tensor& spatial, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be >= 0");
  return itc + itm + ad::scale(grounding + spatial, lambda);
}

double total_loss(double itc, double itm, double grounding, double spatial, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be >= 0");
  return itc + itm + lambda * (grounding + spatial);
}

}  // namespace aerialtext::losses
