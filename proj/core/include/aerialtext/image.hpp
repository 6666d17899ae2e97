// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace aerialtext {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kBackground = {128, 128, 128};

/// 8-bit RGB raster, row-major, y grows downward.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill = kBackground);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary PPM (P6, maxval 255).
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace aerialtext
