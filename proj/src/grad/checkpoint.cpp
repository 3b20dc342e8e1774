// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/grad/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

constexpr std::array<char, 4> kMagic{'N', 'F', 'R', 'L'};
constexpr std::uint32_t kMaxName = 1u << 16;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T take(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw FormatError(std::string("checkpoint truncated reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ParamStore& store) {
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, store.rng_seed());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.slices().size()));
  for (const auto& s : store.slices()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put<std::uint64_t>(os, s.offset);
    put<std::uint64_t>(os, s.length);
  }
  put<std::uint64_t>(os, store.size());
  for (double v : store.values()) put<double>(os, v);
}

ParamStore read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const auto version = take<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store(take<std::uint64_t>(is, "seed"));
  const auto count = take<std::uint32_t>(is, "slice count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(is, "name length");
    if (len > kMaxName) throw FormatError("checkpoint slice name too long");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint truncated reading name");
    const auto offset = take<std::uint64_t>(is, "offset");
    const auto length = take<std::uint64_t>(is, "length");
    if (offset != store.size()) {
      throw FormatError("checkpoint slice '" + name + "' is not contiguous");
    }
    store.add(std::move(name), length);
  }
  const auto n = take<std::uint64_t>(is, "value count");
  if (n != store.size()) throw FormatError("checkpoint value count disagrees with slice table");
  for (auto& v : store.values()) v = take<double>(is, "payload");
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + tmp + "' for writing");
    write_checkpoint(os, store);
    if (!os) throw Error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(is);
}

}  // namespace nfrl
