#pragma once

#include <vector>

#include "m3net/attention.hpp"
#include "m3net/upsample.hpp"

namespace m3net {

struct EncoderConfig {
  std::size_t patch_size = 4;
  std::vector<std::size_t> dims{32, 64, 128, 256};
  std::vector<std::size_t> depths{2, 2, 2, 2};
  Window window{7, 7};
  std::size_t head_dim = 32;
  std::size_t mlp_ratio = 4;
  bool rel_pos_bias = true;
  /// Upsampler that lifts the stride-32 stage onto the stride-16 grid.
  UpsampleMethod fuse_method = UpsampleMethod::fold_overlap;
  FoldGeometry fuse_geometry{3, 2, 1};

  void validate() const;
};

/// F1..F3 at strides 4, 8, 16. F4 is the raw stride-32 stage, kept only as
/// extra context for the widest cross-level span.
struct MultilevelFeatures {
  SequenceFeature F1, F2, F3, F4;
};

class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(std::size_t patch, std::size_t dim, Rng& rng);

  /// image [3×H×W]; H and W must be multiples of the patch size.
  SequenceFeature operator()(const Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear proj;
  LayerNorm norm;

 private:
  std::size_t patch_ = 4;
};

class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(std::size_t dim, const EncoderConfig& cfg, Rng& rng);

  /// x + (S)W-MSA(LN(x)), then + MLP(LN(·)). The window is clipped to the
  /// map; the shift is dropped when one window already covers the map.
  SequenceFeature operator()(const SequenceFeature& x, bool shifted) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm1;
  SelfAttention attn;
  LayerNorm norm2;
  Mlp mlp;

 private:
  Window window_;
};

/// W-MSA block followed by SW-MSA block.
SequenceFeature swin_pair(const SequenceFeature& x, const SwinBlock& regular,
                          const SwinBlock& shifted);

/// 2×2 neighbourhood concat (odd maps zero-padded) → LN → linear 4c → 2c.
class PatchMerging {
 public:
  PatchMerging() = default;
  PatchMerging(std::size_t dim, Rng& rng);

  SequenceFeature operator()(const SequenceFeature& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm;
  Linear reduce;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  /// image [3×H×W], H and W multiples of 16.
  MultilevelFeatures encode(const Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  const EncoderConfig& config() const { return cfg_; }

  PatchEmbed embed;
  std::vector<PatchMerging> merges;           // before stages 2..4
  std::vector<std::vector<SwinBlock>> stages;  // depth[i] blocks each
  std::vector<LayerNorm> out_norms;            // one per stage
  Upsampler fuse_up;
  Linear fuse_proj;                            // c4 → c3

 private:
  EncoderConfig cfg_;
};

}  // namespace m3net
