// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>

namespace aerialtext {
namespace {

TEST(MixSeed, DeterministicAndOrderSensitive) {
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  EXPECT_NE(mix_seed(0), mix_seed(1));
}

TEST(Rng, UniformRange) {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, FixedStream) {
  // mt19937_64 is fully specified, so the stream is portable.
  Rng a(5489);
  EXPECT_EQ(a.next(), 14514284786278117030ull);
}

TEST(KeyValueConfig, ParseAndSerialize) {
  const auto kv = KeyValueConfig::parse("# comment\n a = 1 \n\nlist = x, y ,z\nflag=true\n");
  EXPECT_EQ(kv.get("a"), "1");
  EXPECT_EQ(kv.get_int("a", 0), 1);
  EXPECT_EQ(kv.get_list("list", {}), (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_DOUBLE_EQ(kv.get_double("missing", 2.5), 2.5);
  EXPECT_EQ(KeyValueConfig::parse(kv.serialize()).values(), kv.values());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("no equals sign"), std::invalid_argument);
  const auto kv = KeyValueConfig::parse("a=x\nb=1\n");
  EXPECT_THROW(kv.get_int("a", 0), std::invalid_argument);
  EXPECT_THROW(kv.get("zzz"), std::invalid_argument);
  EXPECT_THROW(kv.require_known({"a"}), std::invalid_argument);
  EXPECT_NO_THROW(kv.require_known({"a", "b"}));
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3e-5), "3e-05");
  for (double v : {1.0 / 3.0, 2.62, 1e-300, -7.25}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(Files, RoundTripAndMissing) {
  const auto p = std::filesystem::temp_directory_path() / "aerialtext_util_test.txt";
  write_file(p, std::string("x\0y", 3));
  EXPECT_EQ(read_file(p), std::string("x\0y", 3));
  EXPECT_THROW(read_file(p.string() + ".missing"), std::runtime_error);
}

}  // namespace
}  // namespace aerialtext
