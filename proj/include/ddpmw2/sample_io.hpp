// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "ddpmw2/error.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

// 16-byte header: "DDPMW2\0\0", u32 n, u32 D; then n*D little-endian float64, row-major.
inline constexpr std::array<char, 8> kSampleMagic{'D', 'D', 'P', 'M', 'W', '2', '\0', '\0'};

namespace detail {

inline void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(std::istream& in, int bytes, const std::string& path) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ValidationError("'" + path + "': truncated sample file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_samples(const std::string& path, const Samples& xs) {
  require(xs.rows() <= 0xffffffffLL && xs.cols() <= 0xffffffffLL, "write_samples: matrix too large");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(kSampleMagic.data(), kSampleMagic.size());
  detail::put_le(out, static_cast<std::uint64_t>(xs.rows()), 4);
  detail::put_le(out, static_cast<std::uint64_t>(xs.cols()), 4);
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < xs.cols(); ++j) detail::put_le(out, std::bit_cast<std::uint64_t>(xs(i, j)), 8);
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

inline Samples read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kSampleMagic) throw ValidationError("'" + path + "': bad magic, not a DDPMW2 sample file");
  const auto n = detail::get_le(in, 4, path);
  const auto d = detail::get_le(in, 4, path);
  require(n >= 1 && d >= 1, "'" + path + "': empty sample matrix");
  Samples xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < xs.cols(); ++j) xs(i, j) = std::bit_cast<double>(detail::get_le(in, 8, path));
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("'" + path + "': trailing bytes");
  return xs;
}

}  // namespace ddpmw2
