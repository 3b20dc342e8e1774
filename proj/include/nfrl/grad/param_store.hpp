// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nfrl {

/// Named contiguous range inside a ParamStore's flat value vector.
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Flat parameter vector partitioned into disjoint named slices.
///
/// Slices are appended in registration order, so they are disjoint and
/// their union always covers [0, size()).
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  /// Appends a zero-filled slice; throws ContractError on a duplicate name.
  Slice add(std::string name, std::size_t length);

  const Slice& slice(std::string_view name) const;
  bool has(std::string_view name) const;
  const std::vector<Slice>& slices() const noexcept { return slices_; }

  std::span<double> view(const Slice& s) { return {values_.data() + s.offset, s.length}; }
  std::span<const double> view(const Slice& s) const {
    return {values_.data() + s.offset, s.length};
  }

  std::span<double> view(std::string_view name) { return view(slice(name)); }
  std::span<const double> view(std::string_view name) const { return view(slice(name)); }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) noexcept { rng_seed_ = seed; }

  bool all_finite() const;

  /// Same slice table (names, offsets, lengths).
  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<double> values_;
  std::vector<Slice> slices_;
  std::uint64_t rng_seed_;
};

}  // namespace nfrl
