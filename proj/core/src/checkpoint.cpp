// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace aerialtext::checkpoint {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'C', 'K', 'P', 'T', '\0', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated file");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Record& Container::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("checkpoint: no record named '" + name + "'");
}

std::string serialize(const Container& c) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, c.version);
  const std::string header = c.header.serialize();
  put_u64(out, header.size());
  out += header;
  put_u64(out, c.records.size());
  for (const auto& r : c.records) {
    const std::uint64_t n = std::accumulate(r.shape.begin(), r.shape.end(), std::uint64_t{1},
                                            std::multiplies<>());
    if (n != r.data.size()) {
      throw std::invalid_argument("checkpoint: record '" + r.name + "' shape/data mismatch");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_u64(out, d);
    for (double v : r.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Container deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.remaining() < sizeof(kMagic) || std::memcmp(in.take(sizeof(kMagic)).data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  }
  Container c;
  c.version = in.u32();
  if (c.version != kFormatVersion) {
    throw std::runtime_error("checkpoint: format version " + std::to_string(c.version) +
                             " unsupported (expected " + std::to_string(kFormatVersion) + ")");
  }
  const auto header_len = in.u64();
  if (header_len > in.remaining()) throw std::runtime_error("checkpoint: truncated file");
  c.header = KeyValueConfig::parse(in.take(header_len));
  const auto count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    Record r;
    const auto name_len = in.u32();
    r.name = std::string(in.take(name_len));
    const auto rank = in.u32();
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank in '" + r.name + "'");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.shape.push_back(in.u64());
      n *= r.shape.back();
    }
    if (n > in.remaining() / 8) throw std::runtime_error("checkpoint: truncated file");
    r.data.resize(n);
    for (auto& v : r.data) v = std::bit_cast<double>(in.u64());
    c.records.push_back(std::move(r));
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes after records");
  return c;
}

void save(const Container& c, const std::filesystem::path& path) { write_file(path, serialize(c)); }

Container load(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace aerialtext::checkpoint
