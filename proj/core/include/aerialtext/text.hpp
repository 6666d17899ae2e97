// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aerialtext::text {

std::string to_lower(std::string_view s);
/// Collapses runs of whitespace to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);
/// Lowercased alphanumeric word tokens.
std::vector<std::string> tokenize_words(std::string_view s);

const std::vector<std::string>& stop_words();

/// Drops stop words from an already tokenized query. Words taking part in a
/// full spatial phrase ("in the center") and the spatial component words are
/// never dropped.
std::vector<std::string> remove_stop_words(std::span<const std::string> tokens);

/// Lowercase, tokenize, drop stop words. Throws std::invalid_argument when
/// nothing remains.
std::vector<std::string> prepare_text_query(std::string_view description);

}  // namespace aerialtext::text
