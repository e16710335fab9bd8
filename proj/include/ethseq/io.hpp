#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "ethseq/common.hpp"

namespace ethseq::io {

// Little-endian fixed-width binary helpers. All file formats in this project
// are little-endian regardless of host order.

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, u128>);
    std::uint8_t buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

inline void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put<std::uint32_t>(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put<std::uint64_t>(out, bits);
}

template <std::size_t N>
void put_bytes(std::ostream& out, const std::array<std::uint8_t, N>& a) {
    out.write(reinterpret_cast<const char*>(a.data()), N);
}

template <typename T>
T get(std::istream& in) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, u128>);
    std::uint8_t buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw DataError("binary stream truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(buf[i]) << (8 * i);
    }
    return v;
}

inline float get_f32(std::istream& in) {
    std::uint32_t bits = get<std::uint32_t>(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double get_f64(std::istream& in) {
    std::uint64_t bits = get<std::uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

template <std::size_t N>
std::array<std::uint8_t, N> get_bytes(std::istream& in) {
    std::array<std::uint8_t, N> a;
    in.read(reinterpret_cast<char*>(a.data()), N);
    if (!in) throw DataError("binary stream truncated");
    return a;
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
    std::string buf(magic.size(), '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in || buf != magic) {
        throw DataError(std::string(what) + ": bad magic, not a valid file");
    }
}

}  // namespace ethseq::io
