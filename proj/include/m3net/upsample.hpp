#pragma once

#include <string>
#include <string_view>

#include "m3net/attention.hpp"

namespace m3net {

enum class UpsampleMethod { fold_overlap, fold, bilinear, pixel_shuffle };

std::string_view to_string(UpsampleMethod m);
UpsampleMethod parse_upsample_method(std::string_view name);

/// Fold geometry of one upsampling step. The output grid is always s·h × s·w.
struct FoldGeometry {
  std::size_t k = 3;
  std::size_t s = 2;
  std::size_t p = 1;

  /// ⌊(s·h + 2p − k)/s⌋ + 1 == h, and likewise for w.
  bool satisfied(std::size_t h, std::size_t w) const;
  /// Throws ConfigError naming (h, k, s, p) when not satisfied.
  void check(std::size_t h, std::size_t w) const;
};

/// Overlap-add of k×k patches: token (i, j) of `expanded` [h·w × c·k²]
/// (channel-major patch layout, ch·k² + ki·k + kj) lands at (i·s − p + ki,
/// j·s − p + kj) on the s·h × s·w output. Overlaps are summed, or averaged
/// by coverage count when `normalize` is set.
SequenceFeature fold(const Tensor& expanded, std::size_t h, std::size_t w,
                     const FoldGeometry& g, bool normalize = false);

/// Sub-pixel rearrangement of [h·w × c·s²] into an s·h × s·w map of c channels.
SequenceFeature pixel_shuffle(const Tensor& x, std::size_t h, std::size_t w, std::size_t s);

/// Bilinear resampling weights (half-pixel centres, edge clamped).
RowMix bilinear_mix(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);
SequenceFeature bilinear_resize(const SequenceFeature& x, std::size_t out_h, std::size_t out_w);

/// Top-left crop of a token map.
SequenceFeature crop(const SequenceFeature& x, std::size_t h, std::size_t w);

/// One token-upsampling step by the stride s. fold_overlap, fold and
/// pixel_shuffle first expand channels with a learned linear map; bilinear
/// has no parameters.
class Upsampler {
 public:
  Upsampler() = default;
  Upsampler(UpsampleMethod method, std::size_t channels, FoldGeometry geometry, Rng& rng,
            bool normalize = false);

  SequenceFeature operator()(const SequenceFeature& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  UpsampleMethod method() const { return method_; }
  const FoldGeometry& geometry() const { return geometry_; }

  Linear expand;

 private:
  UpsampleMethod method_ = UpsampleMethod::fold_overlap;
  FoldGeometry geometry_;
  std::size_t channels_ = 0;
  bool normalize_ = false;
};

/// Linear expansion followed by overlapping fold.
SequenceFeature upsample_fold_overlap(const SequenceFeature& x, const Linear& expand,
                                      const FoldGeometry& g, bool normalize = false);

}  // namespace m3net
