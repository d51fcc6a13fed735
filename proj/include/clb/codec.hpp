#pragma once

// Byte-level helpers for the on-disk formats: base64 payloads and
// little-endian float64 packing.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clb::codec {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> pack_f64_le(std::span<const double> values);
std::vector<double> unpack_f64_le(std::span<const std::uint8_t> bytes);

inline std::string f64_to_base64(std::span<const double> values) {
  auto bytes = pack_f64_le(values);
  return base64_encode(bytes);
}
inline std::vector<double> f64_from_base64(std::string_view text) {
  auto bytes = base64_decode(text);
  return unpack_f64_le(bytes);
}

/// Bits packed MSB-first into bytes.
std::vector<std::uint8_t> pack_bits(const std::vector<bool>& bits);
std::vector<bool> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count);

}  // namespace clb::codec
