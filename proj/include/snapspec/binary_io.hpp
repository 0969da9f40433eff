#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "snapspec/errors.hpp"

// Little-endian primitive readers/writers shared by the SPC1/HSC1/MSR1/ERP1 formats.
namespace snapspec::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

template <typename U>
void write(std::ostream& os, U v) {
  static_assert(std::is_integral_v<U>);
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

inline void write_f32(std::ostream& os, float v) { write(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

template <typename U>
U read(std::istream& is, const char* what) {
  static_assert(std::is_integral_v<U>);
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return to_little(v);
}

inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read<std::uint32_t>(is, what));
}
inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read<std::uint64_t>(is, what));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  char buf[4] = {0, 0, 0, 0};
  if (!is.read(buf, 4)) throw FormatError("truncated file: missing magic");
  if (std::string_view(buf, 4) != magic) {
    throw FormatError("bad magic: expected " + std::string(magic) + ", found '" +
                      std::string(buf, 4) + "'");
  }
}

inline void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");
}

}  // namespace snapspec::binio
