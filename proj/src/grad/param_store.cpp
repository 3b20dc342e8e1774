// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/grad/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "nfrl/errors.hpp"

namespace nfrl {

Slice ParamStore::add(std::string name, std::size_t length) {
  if (has(name)) throw ContractError("duplicate parameter slice '" + name + "'");
  Slice s{std::move(name), values_.size(), length};
  values_.resize(values_.size() + length, 0.0);
  slices_.push_back(std::move(s));
  return slices_.back();
}

const Slice& ParamStore::slice(std::string_view name) const {
  auto it = std::find_if(slices_.begin(), slices_.end(),
                         [&](const Slice& s) { return s.name == name; });
  if (it == slices_.end()) {
    throw ContractError("unknown parameter slice '" + std::string(name) + "'");
  }
  return *it;
}

bool ParamStore::has(std::string_view name) const {
  return std::any_of(slices_.begin(), slices_.end(),
                     [&](const Slice& s) { return s.name == name; });
}

bool ParamStore::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (slices_.size() != other.slices_.size()) return false;
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    const auto& a = slices_[i];
    const auto& b = other.slices_[i];
    if (a.name != b.name || a.offset != b.offset || a.length != b.length) return false;
  }
  return true;
}

}  // namespace nfrl
