#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "contamlab/error.hpp"

// Little-endian fixed-width encoding for the on-disk index and checkpoints.
namespace contamlab::binio {

template <typename T>
    requires std::is_integral_v<T> || std::is_floating_point_v<T>
void put(std::ostream& out, T value)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    auto bits = std::bit_cast<U>(value);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(bytes, sizeof(U));
}

template <typename T>
    requires std::is_integral_v<T> || std::is_floating_point_v<T>
T get(std::istream& in)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw DataError("unexpected end of binary stream");
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bits |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

inline void put_string(std::ostream& out, const std::string& s)
{
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1u << 20)
{
    auto n = get<std::uint32_t>(in);
    if (n > max_len) {
        throw DataError("string length " + std::to_string(n) + " exceeds limit");
    }
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) {
        throw DataError("unexpected end of binary stream");
    }
    return s;
}

inline void put_magic(std::ostream& out, const char (&magic)[9])
{
    out.write(magic, 8);
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what)
{
    char buf[8];
    if (!in.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8)) {
        throw DataError(std::string("not a ") + what + " file");
    }
}

}  // namespace contamlab::binio
