// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/image.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>
#include <string>

namespace aerialtext {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("image: non-positive size");
  rgb.resize(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill[0];
    rgb[i + 1] = fill[1];
    rgb[i + 2] = fill[2];
  }
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw std::runtime_error("malformed PPM header: " + path.string());
  return v;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("not a binary PPM (P6): " + path.string());
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("unsupported PPM geometry or depth: " + path.string());
  }
  in.get();  // single whitespace before raster
  Image image;
  image.width = w;
  image.height = h;
  image.rgb.resize(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw std::runtime_error("truncated PPM raster: " + path.string());
  }
  return image;
}

}  // namespace aerialtext
