// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient oracle for tests. Each element is perturbed by
// +-h and +-h/2 and the two central differences are combined by Richardson
// extrapolation. A step is used only if all four perturbed evaluations take
// the same piecewise branches (relu masks, min/max picks, argmax choices) as
// the unperturbed one; otherwise a smaller step is tried. Elements that sit
// on a kink for every step are counted as skipped.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aerialtext/autodiff.hpp"

namespace aerialtext::testing {

struct GradCheckOptions {
  double rel_tol = 1e-4;
  double abs_tol = 1e-7;
  double near_zero = 1e-8;
  std::array<double, 4> steps = {1e-3, 1e-4, 1e-5, 1e-6};
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  double max_rel_error = 0;
  double max_abs_error_near_zero = 0;
  std::string worst;

  bool ok() const { return failures == 0 && checked > 0; }
};

inline GradCheckReport check_gradients(const std::function<ad::Tensor()>& f,
                                       std::map<std::string, ad::Tensor>& params,
                                       const GradCheckOptions& opt = {}) {
  for (auto& [name, p] : params) p.zero_grad();
  ad::backward(f());
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : params) {
    auto g = p.grad();
    analytic[name] = g.empty() ? std::vector<double>(p.numel(), 0.0)
                               : std::vector<double>(g.begin(), g.end());
  }

  ad::NoGradGuard no_grad;
  auto evaluate = [&](std::uint64_t& signature) {
    ad::BranchSignature sig;
    const double v = f().item();
    signature = sig.value();
    return v;
  };
  std::uint64_t base = 0;
  evaluate(base);

  GradCheckReport r;
  double worst_score = -1;
  for (auto& [name, p] : params) {
    auto x = p.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = x[i];
      bool found = false;
      double numeric = 0;
      for (double h : opt.steps) {
        std::array<double, 4> offsets = {h, -h, h / 2, -h / 2};
        std::array<double, 4> values{};
        bool smooth = true;
        for (std::size_t k = 0; k < 4 && smooth; ++k) {
          x[i] = x0 + offsets[k];
          std::uint64_t s = 0;
          values[k] = evaluate(s);
          smooth = s == base;
        }
        x[i] = x0;
        if (!smooth) continue;
        const double d_h = (values[0] - values[1]) / (2 * h);
        const double d_half = (values[2] - values[3]) / h;
        numeric = (4 * d_half - d_h) / 3;
        found = true;
        break;
      }
      if (!found) {
        ++r.skipped;
        continue;
      }
      ++r.checked;
      const double a = analytic[name][i];
      const double err = std::fabs(a - numeric);
      double score = 0;
      bool fail = false;
      if (std::fabs(a) < opt.near_zero) {
        r.max_abs_error_near_zero = std::max(r.max_abs_error_near_zero, err);
        fail = err > opt.abs_tol;
        score = err / opt.abs_tol;
      } else {
        const double rel = err / std::max(std::fabs(a), std::fabs(numeric));
        r.max_rel_error = std::max(r.max_rel_error, rel);
        fail = rel > opt.rel_tol;
        score = rel / opt.rel_tol;
      }
      if (fail) ++r.failures;
      if (score > worst_score) {
        worst_score = score;
        r.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                  " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace aerialtext::testing
