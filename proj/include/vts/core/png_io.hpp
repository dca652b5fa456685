#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vts/core/grid.hpp"

namespace vts::png {

/// Decoded PNG with integer samples, interleaved channels.
struct RawImage {
    int rows = 0;
    int cols = 0;
    int channels = 0;   // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
    int bit_depth = 0;  // 8 or 16
    std::vector<std::uint16_t> samples;
};

RawImage decode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode(const RawImage& img);

RawImage read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const RawImage& img);

/// 8-bit images mapped to [0, 1]. Alpha channels are dropped; gray images
/// are returned with one channel.
Image read_image(const std::filesystem::path& path);
Image to_image(const RawImage& raw);

/// Values are clamped to [0, 1] and quantized to 8 bits (1 or 3 channels).
RawImage from_image8(const Image& img);
void write_image8(const std::filesystem::path& path, const Image& img);

/// 16-bit grayscale helpers operating on the raw code values.
Grid<std::uint16_t> read_gray16(const std::filesystem::path& path);
void write_gray16(const std::filesystem::path& path, const Grid<std::uint16_t>& g);
RawImage from_gray16(const Grid<std::uint16_t>& g);

Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vts::png
