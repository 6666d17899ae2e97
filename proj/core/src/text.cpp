// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "aerialtext/geometry.hpp"

namespace aerialtext::text {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool is_spatial_component(const std::string& w) {
  static const std::vector<std::string> kWords = {"left",   "right",  "upper", "down",
                                                  "center", "top",    "bottom", "middle",
                                                  "side"};
  return std::find(kWords.begin(), kWords.end(), w) != kWords.end();
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> tokenize_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> kStop = {
      "a",    "an",   "the",  "of",    "and",   "is",    "are",  "was",   "were", "be",
      "been", "with", "this", "that",  "these", "those", "there", "it",   "its",  "to",
      "as",   "by",   "for",  "from",  "at",    "in",    "which", "we",   "can",  "also",
      "very", "some", "has",  "have",  "so",    "or",    "into", "than", "such", "while",
  };
  return kStop;
}

std::vector<std::string> remove_stop_words(std::span<const std::string> tokens) {
  std::vector<bool> keep(tokens.size(), false);
  for (const auto& phrase : geometry::phrase_table()) {
    const auto words = tokenize_words(phrase);
    if (words.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + words.size() <= tokens.size(); ++i) {
      if (std::equal(words.begin(), words.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        for (std::size_t k = 0; k < words.size(); ++k) keep[i + k] = true;
      }
    }
  }
  const auto& stop = stop_words();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool is_stop = std::find(stop.begin(), stop.end(), tokens[i]) != stop.end();
    if (keep[i] || is_spatial_component(tokens[i]) || !is_stop) out.push_back(tokens[i]);
  }
  return out;
}

std::vector<std::string> prepare_text_query(std::string_view description) {
  const auto tokens = tokenize_words(description);
  auto out = remove_stop_words(tokens);
  if (out.empty()) {
    throw std::invalid_argument("text query is empty after stop-word removal: \"" +
                                std::string(description) + "\"");
  }
  return out;
}

}  // namespace aerialtext::text
