#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "m3net/image_io.hpp"
#include "m3net/nn.hpp"

namespace m3net {

struct Sample {
  std::string id;
  Tensor image;  // [3×H×W] in [0,1]
  Tensor mask;   // [H×W] in {0,1}
};

inline constexpr std::array<Real, 3> kImageNetMean{0.485, 0.456, 0.406};
inline constexpr std::array<Real, 3> kImageNetStd{0.229, 0.224, 0.225};

/// Uniform double in [0,1) from the top 53 bits of one draw.
Real uniform01(Rng& rng);
/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Per-channel (v − mean) / std.
Tensor normalize(const Tensor& image, const std::array<Real, 3>& mean = kImageNetMean,
                 const std::array<Real, 3>& stdev = kImageNetStd);

struct AugmentConfig {
  bool rotate = true;
  Real crop = 0.9;  // kept fraction per side; >= 1 disables cropping
  bool normalize = true;
};

/// Joint k·90° rotation (k uniform in 0..3), random crop of the configured
/// fraction resized back (image bilinear, mask nearest), then normalization.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);
/// Counter-clockwise rotation by k quarter turns of a [planes×H×W] block.
std::vector<Real> rotate90(const std::vector<Real>& v, std::size_t planes, std::size_t h, std::size_t w,
                           unsigned k);

Sample sample_from_rasters(std::string id, const Raster& image, const Raster& mask);
Raster image_raster(const Tensor& image);
Raster mask_raster(const Tensor& mask);

/// Reads images/<id>.ppm and masks/<id>.pgm, sorted by id.
std::vector<Sample> load_dataset(const std::filesystem::path& root);
/// Reads every images/<id>.ppm (or *.ppm directly in `dir`), sorted by id.
std::vector<Sample> load_images(const std::filesystem::path& dir);
void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

struct SyntheticConfig {
  std::size_t height = 64, width = 64;
  std::uint64_t seed = 0;
  Real min_foreground = 0.05;
  Real max_foreground = 0.6;
};

/// Sample `index` of the synthetic set: 1–3 saturated ellipses/rectangles on
/// a muted textured background; mask = union of shapes. Pixel values are
/// 8-bit quantized so disk round-trips are exact.
Sample synthetic_sample(std::size_t index, const SyntheticConfig& cfg);
std::vector<Sample> gen_synthetic(std::size_t n, std::size_t H, std::size_t W, std::uint64_t seed);

}  // namespace m3net
