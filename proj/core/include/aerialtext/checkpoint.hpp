// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-describing binary container of named float64 arrays.
//
//   magic   "ATCKPT\0\0"           8 bytes
//   version u32 little-endian
//   header  u64 length + flat key=value text
//   count   u64
//   records count x { u32 name length, name bytes, u32 rank, u64 dims[rank],
//                     f64 data[prod(dims)] }
//
// All integers and floats are little-endian regardless of host order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aerialtext/util.hpp"

namespace aerialtext::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Record {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
  friend bool operator==(const Record&, const Record&) = default;
};

struct Container {
  std::uint32_t version = kFormatVersion;
  KeyValueConfig header;
  std::vector<Record> records;

  const Record& find(const std::string& name) const;  // throws std::out_of_range
};

std::string serialize(const Container& c);
/// Throws std::runtime_error on bad magic, version mismatch, or truncation.
Container deserialize(std::string_view bytes);

void save(const Container& c, const std::filesystem::path& path);
Container load(const std::filesystem::path& path);

}  // namespace aerialtext::checkpoint
