// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "occ/error.hpp"

// Little-endian primitives shared by the GOPC, GOCC and GOWT formats.
namespace occ::binio {

template <typename U>
void put_uint(std::ostream& os, U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    os.write(buf, sizeof(U));
}

template <typename U>
U get_uint(std::istream& is, std::string_view what) {
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
        throw DataError("truncated input while reading " + std::string(what));
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(buf[i]) << (8 * i);
    }
    return v;
}

inline void put_f32(std::ostream& os, float v) { put_uint(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }
inline float get_f32(std::istream& is, std::string_view what) {
    return std::bit_cast<float>(get_uint<std::uint32_t>(is, what));
}
inline double get_f64(std::istream& is, std::string_view what) {
    return std::bit_cast<double>(get_uint<std::uint64_t>(is, what));
}

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline void expect_magic(std::istream& is, std::string_view magic) {
    char buf[4] = {};
    if (!is.read(buf, 4) || std::memcmp(buf, magic.data(), 4) != 0) {
        throw DataError("bad magic, expected " + std::string(magic));
    }
}

} // namespace occ::binio
