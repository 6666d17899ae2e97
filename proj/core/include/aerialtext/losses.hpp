// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: in-batch contrastive, matching with hard negatives,
// box regression, and 9-way spatial relation classification.

#pragma once

#include <span>
#include <vector>

#include "aerialtext/autodiff.hpp"
#include "aerialtext/geometry.hpp"

namespace aerialtext::losses {

using ad::Tensor;
using geometry::BBox;

inline constexpr double kProbClamp = 1e-7;

/// Symmetric InfoNCE over a square similarity matrix S (rows images, columns
/// texts, matching pairs on the diagonal). `tau` is a scalar tensor.
Tensor itc_loss(const Tensor& similarity, const Tensor& tau);
Tensor itc_loss(const Tensor& similarity, double tau);

struct HardNegatives {
  std::vector<std::size_t> text_for_image;  // row-wise off-diagonal argmax
  std::vector<std::size_t> image_for_text;  // column-wise off-diagonal argmax
};
/// Ties resolve to the lowest index.
HardNegatives sample_hard_negatives(const Tensor& similarity);

/// Mean binary cross-entropy of `probs` ([M,1] or [M]) against 0/1 labels.
Tensor itm_loss(const Tensor& probs, std::span<const double> labels);

/// Row-wise GIoU of two [n,4] (cx, cy, w, h) tensors, as [n,1].
Tensor giou_rows(const Tensor& a, const Tensor& b);
/// Mean over rows of (1 - GIoU) + L1 distance of the four coordinates.
Tensor grounding_loss(const Tensor& target, const Tensor& predicted);
double grounding_loss(const BBox& target, const BBox& predicted);

/// Mean cross-entropy of [P,9] logits against class indices. P = 0 gives 0.
Tensor spatial_loss(const Tensor& logits, std::span<const int> labels);

struct SpatialPair {
  std::size_t first = 0;
  std::size_t second = 0;
  int label = 0;  // spatial_label(box[first], box[second]).class_index()
};
/// Every ordered pair (i, j), i != j, in row-major order.
std::vector<SpatialPair> spatial_pairs(std::span<const BBox> boxes);

Tensor total_loss(const Tensor& itc, const Tensor& itm, const Tensor& grounding,
                  const Tensor& spatial, double lambda);
double total_loss(double itc, double itm, double grounding, double spatial, double lambda);

}  // namespace aerialtext::losses
