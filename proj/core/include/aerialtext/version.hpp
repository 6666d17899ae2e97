// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace aerialtext {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aerialtext
