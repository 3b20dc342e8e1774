// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nfrl {

/// Ordered key=value text record. One pair per line, '#' starts a comment.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  /// Space-separated "k=v k=v" single-line form.
  static KeyValues parse_line(std::string_view line);

  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Throws FormatError when missing.
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  ///< comma separated

  std::string to_text() const;  ///< one pair per line, insertion order
  std::string to_line() const;  ///< single line, insertion order

  const std::vector<std::string>& keys() const noexcept { return order_; }
  void merge(const KeyValues& other);  ///< last writer wins

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace nfrl
