#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "m3net/tensor.hpp"

namespace m3net {

/// 8-bit raster, channel-interleaved, row-major.
struct Raster {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Raster&) const = default;
};

/// Binary PGM (P5, one channel) or PPM (P6, three channels) with maxval 255.
/// Malformed input raises ParseError naming the byte offset.
Raster decode_netpbm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_netpbm(const Raster& r);

Raster load_pgm(const std::filesystem::path& path);
Raster load_ppm(const std::filesystem::path& path);
void save_pgm(const Raster& r, const std::filesystem::path& path);
void save_ppm(const Raster& r, const std::filesystem::path& path);

/// Map in [0,1] quantized as round(255·v).
Raster quantize_gray(const std::vector<Real>& values, std::size_t h, std::size_t w);

/// Bilinear resampling of planar data (`planes` channels of h×w), half-pixel
/// centres with edge clamping.
std::vector<Real> resize_bilinear(const std::vector<Real>& src, std::size_t planes, std::size_t h,
                                  std::size_t w, std::size_t oh, std::size_t ow);
/// Nearest-neighbour resampling of planar data.
std::vector<Real> resize_nearest(const std::vector<Real>& src, std::size_t planes, std::size_t h,
                                 std::size_t w, std::size_t oh, std::size_t ow);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace m3net
