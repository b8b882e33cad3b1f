// Little-endian scalar packing shared by the binary formats.
#ifndef EGOMATCH_LE_BYTES_HPP
#define EGOMATCH_LE_BYTES_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace egomatch::detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    for (std::uint8_t b : raw) out.push_back(b);
}

template <class T>
T get_le(const std::uint8_t* in) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, in, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
}

}  // namespace egomatch::detail

#endif
