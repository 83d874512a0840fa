// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls the code under test except to evaluate the
// function being differentiated.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "fedwing/tensor.hpp"

namespace oracle {

/// Central finite differences of a scalar function over every element of
/// `leaves`; compares with the reverse-mode gradient and returns the worst
/// per-leaf relative error ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||, floor).
///
/// `piece`, when given, identifies the linear piece of a piecewise-smooth f
/// after each evaluation. A stencil whose ends lie on a different piece than
/// the centre straddles a kink; it is re-taken with step / 10, step / 100, ...
/// (down to 1e-9) and counted in `kinks`.
inline double gradient_check(std::vector<fedwing::Tensor>& leaves,
                             const std::function<fedwing::Tensor()>& f, double step = 1e-5,
                             double floor = 1e-8,
                             const std::function<std::uint64_t()>& piece = {},
                             std::size_t* kinks = nullptr) {
  for (auto& l : leaves) l.zero_grad();
  fedwing::backward(f());
  std::uint64_t centre = 0;
  if (piece) {
    fedwing::NoGradGuard g;
    f();
    centre = piece();
  }
  double worst = 0.0;
  for (auto& leaf : leaves) {
    const std::vector<double> ad = leaf.grad();
    std::vector<double> fd(ad.size());
    auto vals = leaf.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      fedwing::NoGradGuard g;
      for (double h = step;; h /= 10.0) {
        vals[i] = keep + h;
        const double up = f().item();
        const bool up_same = !piece || piece() == centre;
        vals[i] = keep - h;
        const double down = f().item();
        const bool down_same = !piece || piece() == centre;
        fd[i] = (up - down) / (2.0 * h);
        if ((up_same && down_same) || h < 1e-9) break;
        if (kinks && h == step) ++*kinks;
      }
      vals[i] = keep;
    }
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
      diff += (ad[i] - fd[i]) * (ad[i] - fd[i]);
      na += ad[i] * ad[i];
      nf += fd[i] * fd[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nf), floor});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

/// Great-circle distance from the spherical law of cosines refined with the
/// chord formula (3D unit vectors), independent of the haversine form.
inline double great_circle_km(double lat1, double lon1, double lat2, double lon2, double radius) {
  const double d2r = std::numbers::pi / 180.0;
  const double a1 = lat1 * d2r, b1 = lon1 * d2r, a2 = lat2 * d2r, b2 = lon2 * d2r;
  const double x1 = std::cos(a1) * std::cos(b1), y1 = std::cos(a1) * std::sin(b1), z1 = std::sin(a1);
  const double x2 = std::cos(a2) * std::cos(b2), y2 = std::cos(a2) * std::sin(b2), z2 = std::sin(a2);
  // Angle between the vectors via atan2(|u x v|, u . v): well conditioned everywhere.
  const double cx = y1 * z2 - z1 * y2, cy = z1 * x2 - x1 * z2, cz = x1 * y2 - y1 * x2;
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  const double dot = x1 * x2 + y1 * y2 + z1 * z2;
  return radius * std::atan2(cross, dot);
}

inline double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
  double s = 0.0, w = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += values[i] * weights[i];
    w += weights[i];
  }
  return s / w;
}

/// Mean run length of zeros in a 0/1 sequence, scanning each column of a
/// row-major [rows x cols] mask separately.
struct RunStats {
  std::size_t cells = 0;
  std::size_t masked = 0;
  std::size_t runs = 0;
};

inline RunStats masked_runs(const std::vector<double>& mask, std::size_t rows, std::size_t cols) {
  RunStats s;
  for (std::size_t c = 0; c < cols; ++c) {
    bool in_run = false;
    for (std::size_t r = 0; r < rows; ++r) {
      const bool masked = mask[r * cols + c] == 0.0;
      ++s.cells;
      if (masked) {
        ++s.masked;
        if (!in_run) ++s.runs;
      }
      in_run = masked;
    }
  }
  return s;
}

}  // namespace oracle
