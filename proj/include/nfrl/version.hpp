// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace nfrl {

/// `git describe` of the source tree at configure time, or "unknown".
const char* version_string() noexcept;

}  // namespace nfrl
