#ifndef EGOMATCH_IMAGE_IO_HPP
#define EGOMATCH_IMAGE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "egomatch/features.hpp"

namespace egomatch {

// Binary PPM (P6, maxval 255). Pixel values map to round(255*v).
std::vector<std::uint8_t> encode_ppm(const Image& image);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height,
// then interleaved (u,v) float32, all little-endian.
inline constexpr float kFloMagic = 202021.25f;
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<std::uint8_t>& bytes);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace egomatch

#endif  // EGOMATCH_IMAGE_IO_HPP
