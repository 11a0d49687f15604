#pragma once

// Little-endian primitive encoding shared by the stream and checkpoint formats.

#include "gdastream/common.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace gdastream::binary {

template <typename U>
void put_uint(std::ostream& out, U v)
{
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(U));
}

inline void put_u32(std::ostream& out, std::uint32_t v) { put_uint(out, v); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_uint(out, v); }
inline void put_f32(std::ostream& out, float f) { put_uint(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::ostream& out, double f) { put_uint(out, std::bit_cast<std::uint64_t>(f)); }

class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    void read(char* dst, std::size_t n)
    {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw DataError("truncated file: " + what_);
    }

    template <typename U>
    U uint()
    {
        unsigned char b[sizeof(U)];
        read(reinterpret_cast<char*>(b), sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(b[i]) << (8 * i);
        return v;
    }

    std::uint8_t u8() { return uint<std::uint8_t>(); }
    std::uint32_t u32() { return uint<std::uint32_t>(); }
    std::uint64_t u64() { return uint<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    void expect_magic(const std::array<char, 4>& magic)
    {
        std::array<char, 4> got{};
        in_.read(got.data(), 4);
        if (in_.gcount() != 4 || got != magic)
            throw DataError("unrecognized format: " + what_);
    }

    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

    void expect_eof()
    {
        if (!at_eof())
            throw DataError("trailing bytes in " + what_);
    }

private:
    std::istream& in_;
    std::string what_;
};

}  // namespace gdastream::binary
