// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "nfrl/grad/param_store.hpp"

namespace nfrl {

/// Binary parameter checkpoint:
///
///   "NFRL" | u32 version | u64 rng_seed | u32 slice_count
///   slice_count x (u32 name_len | name | u64 offset | u64 length)
///   u64 value_count | value_count x f64
///
/// All integers and doubles little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const ParamStore& store);
ParamStore read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
/// Throws FormatError on bad magic, unknown version or truncation.
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace nfrl
