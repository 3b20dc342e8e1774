// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/version.hpp"

#ifndef NFRL_GIT_DESCRIBE
#define NFRL_GIT_DESCRIBE "unknown"
#endif

namespace nfrl {

const char* version_string() noexcept { return NFRL_GIT_DESCRIBE; }

}  // namespace nfrl
