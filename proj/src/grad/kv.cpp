// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/kv.hpp"

#include <charconv>
#include <sstream>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void add_pair(KeyValues& kv, std::string_view token) {
  const auto eq = token.find('=');
  if (eq == std::string_view::npos) {
    throw FormatError("expected key=value, got '" + std::string(token) + "'");
  }
  kv.set(std::string(trim(token.substr(0, eq))), std::string(trim(token.substr(eq + 1))));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    add_pair(kv, line);
  }
  return kv;
}

KeyValues KeyValues::parse_line(std::string_view line) {
  KeyValues kv;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto b = line.find_first_not_of(' ', pos);
    if (b == std::string_view::npos) break;
    auto e = line.find(' ', b);
    if (e == std::string_view::npos) e = line.size();
    add_pair(kv, line.substr(b, e - b));
    pos = e;
  }
  return kv;
}

void KeyValues::set(const std::string& key, std::string value) {
  if (key.empty()) throw FormatError("empty key");
  if (values_.count(key) == 0) order_.push_back(key);
  values_[key] = std::move(value);
}

void KeyValues::set(const std::string& key, double value) { set(key, format_double(value)); }

void KeyValues::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

const std::string& KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError("missing key '" + key + "'");
  return it->second;
}

double KeyValues::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("key '" + key + "': not a number: '" + s + "'");
  }
  return v;
}

long long KeyValues::get_int(const std::string& key) const {
  const auto& s = get(key);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("key '" + key + "': not an integer: '" + s + "'");
  }
  return v;
}

bool KeyValues::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("key '" + key + "': not a boolean: '" + s + "'");
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  const auto& s = get(key);
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto c = s.find(',', pos);
    if (c == std::string::npos) c = s.size();
    const auto tok = trim(std::string_view(s).substr(pos, c - pos));
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw FormatError("key '" + key + "': bad list element '" + std::string(tok) + "'");
    }
    out.push_back(v);
    pos = c + 1;
  }
  return out;
}

std::string KeyValues::to_text() const {
  std::ostringstream os;
  for (const auto& k : order_) os << k << '=' << values_.at(k) << '\n';
  return os.str();
}

std::string KeyValues::to_line() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& k : order_) {
    if (!first) os << ' ';
    os << k << '=' << values_.at(k);
    first = false;
  }
  return os.str();
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& k : other.order_) set(k, other.values_.at(k));
}

}  // namespace nfrl
