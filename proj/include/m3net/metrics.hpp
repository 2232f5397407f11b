#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m3net/tensor.hpp"

namespace m3net {

inline constexpr std::size_t kThresholds = 256;
/// β² of the weighted F-measure and of the F curve.
inline constexpr Real kWeightedFBeta2 = 1.0;
inline constexpr Real kCurveFBeta2 = 0.3;

/// Prediction in [0,1], row-major.
struct SaliencyMap {
  std::size_t h = 0, w = 0;
  std::vector<Real> values;

  static SaliencyMap from_bytes(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& bytes);
  void validate() const;
};

/// Binary mask, row-major.
struct GroundTruth {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> mask;  // 0 or 1

  /// Pixels >= 128 are foreground.
  static GroundTruth from_bytes(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& bytes);
  std::size_t foreground() const;
};

struct Curves {
  std::array<Real, kThresholds> precision{};
  std::array<Real, kThresholds> recall{};
  std::array<Real, kThresholds> f{};
};

struct MetricReport {
  Real mae = 0, e_mean = 0, s_measure = 0, wf = 0;
  Curves curves;
};

Real mae(const SaliencyMap& P, const GroundTruth& G);
/// Mean over thresholds k/255 (k = 0..255, foreground where P >= t) of the
/// enhanced-alignment score.
Real e_measure_mean(const SaliencyMap& P, const GroundTruth& G);
Real s_measure(const SaliencyMap& P, const GroundTruth& G);
Real weighted_f_measure(const SaliencyMap& P, const GroundTruth& G);
/// Precision/recall/F per threshold on the min-max normalized prediction.
Curves pr_and_f_curves(const SaliencyMap& P, const GroundTruth& G);
MetricReport evaluate(const SaliencyMap& P, const GroundTruth& G);

/// Squared Euclidean distance from every pixel to the nearest foreground
/// pixel, and that pixel's row-major index (smallest index on ties).
struct DistanceTransform {
  std::vector<Real> dist;
  std::vector<std::size_t> nearest;
};
DistanceTransform distance_to_foreground(const GroundTruth& G);

struct ImageScore {
  std::string name;
  MetricReport report;
};

struct DirReport {
  std::vector<ImageScore> images;  // filename order
  MetricReport mean;               // dataset mean of every scalar and curve entry
  std::vector<std::string> missing;
  std::size_t warnings() const { return missing.size(); }
};

/// Scores preds/<id>.pgm against gt/<id>.pgm for every shared stem. A
/// prediction of a different size is resized bilinearly to the mask.
DirReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);
void write_report_csv(const DirReport& report, const std::filesystem::path& path);
void write_curves_csv(const Curves& curves, const std::filesystem::path& path);

}  // namespace m3net
