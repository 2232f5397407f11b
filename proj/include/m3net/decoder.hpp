#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "m3net/encoder.hpp"

namespace m3net {

enum class InteractionMode { high_to_low, low_to_high, bidirectional };
enum class MabAttention { mixed, window, global };
enum class ContextSource { interacted, raw };

std::string_view to_string(InteractionMode m);
std::string_view to_string(MabAttention m);
std::string_view to_string(ContextSource s);
/// Accepts the long names and the short forms h2l, l2h, bi.
InteractionMode parse_interaction(std::string_view name);
MabAttention parse_mab_attention(std::string_view name);
ContextSource parse_context_source(std::string_view name);

struct DecoderConfig {
  std::size_t r = 2;
  std::size_t d_mab = 384;
  Window window{7, 7};
  MabAttention attention = MabAttention::mixed;
  InteractionMode interaction = InteractionMode::high_to_low;
  std::size_t across_levels = 2;
  UpsampleMethod upsample = UpsampleMethod::fold_overlap;
  std::array<FoldGeometry, 3> fold{FoldGeometry{3, 2, 1}, FoldGeometry{3, 2, 1},
                                   FoldGeometry{7, 4, 2}};
  bool mab_attention_residual = true;
  bool mab_pre_norm = false;
  bool fold_normalize = false;
  ContextSource ctx_source = ContextSource::interacted;
  std::size_t head_dim = 64;
  std::size_t mlp_ratio = 4;
  std::size_t ca_dim = 0;  // 0: the low-level width

  void validate(std::size_t patch_size) const;
  /// Fold law at every stage grid of an H×W image (strides 16, 8, patch).
  void check_geometry(std::size_t H, std::size_t W, std::size_t patch_size) const;
};

/// Multilevel interaction: cross-attention from one low-level map to a list
/// of higher levels, then a residual MLP.
class Mib {
 public:
  Mib() = default;
  Mib(std::size_t c_low, const std::vector<std::size_t>& c_highs, const DecoderConfig& cfg, Rng& rng);

  SequenceFeature operator()(const SequenceFeature& low, const std::vector<SequenceFeature>& highs) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t span() const { return n_highs_; }

  std::vector<CrossAttention> down;  // queries from the low level
  std::vector<CrossAttention> up;    // queries from the high levels
  LayerNorm norm;
  Mlp mlp;

 private:
  std::size_t n_highs_ = 0;
  std::size_t c_low_ = 0;
};

SequenceFeature mib(const SequenceFeature& low, const std::vector<SequenceFeature>& highs,
                    const Mib& block);

/// One mixed attention block on d_mab-wide tokens.
class MabBlock {
 public:
  MabBlock() = default;
  MabBlock(std::size_t d, const DecoderConfig& cfg, Rng& rng);

  SequenceFeature operator()(const SequenceFeature& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  /// W-MSA(x) + MSA(x) (or one of them), before residual and MLP.
  SequenceFeature mixed_attention(const SequenceFeature& x) const;

  SelfAttention window_attn;  // undefined weights in global mode
  SelfAttention global_attn;  // undefined weights in window mode
  LayerNorm pre_norm;         // only with mab_pre_norm
  LayerNorm norm;
  Mlp mlp;

 private:
  MabAttention mode_ = MabAttention::mixed;
  Window window_;
  bool residual_ = true;
  bool pre_norm_enabled_ = false;
};

/// MLP₁ (c_in → d_mab), r mixed attention blocks, MLP₂ (d_mab → c_out).
class MabStack {
 public:
  MabStack() = default;
  MabStack(std::size_t c_in, std::size_t c_out, const DecoderConfig& cfg, std::size_t r, Rng& rng);

  SequenceFeature operator()(const SequenceFeature& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Mlp lift;
  std::vector<MabBlock> blocks;
  Mlp restore;
};

SequenceFeature mab_stack(const SequenceFeature& x, const MabStack& stack);

struct StageOutput {
  SequenceFeature F_I;  // after interaction
  SequenceFeature F_M;  // after mixed attention
  Tensor F_P;           // [l×1] logits
};

class DecoderStage {
 public:
  DecoderStage() = default;
  DecoderStage(std::size_t c_low, std::size_t c_prev, const std::vector<std::size_t>& c_highs,
               const FoldGeometry& geometry, const DecoderConfig& cfg, Rng& rng);

  StageOutput operator()(const SequenceFeature& low, const std::vector<SequenceFeature>& ctx,
                         const SequenceFeature& prev) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Mib interaction;
  Upsampler upsample;
  MabStack mab;
  Linear head;
};

StageOutput decode_stage(const SequenceFeature& low, const std::vector<SequenceFeature>& ctx,
                         const SequenceFeature& prev, const DecoderStage& stage);

class Decoder {
 public:
  Decoder() = default;
  /// `dims` are the encoder stage widths c1..c4.
  Decoder(const std::vector<std::size_t>& dims, std::size_t patch_size, const DecoderConfig& cfg,
          Rng& rng);

  /// Logits maps coarse → fine, each [H×W].
  std::vector<Tensor> forward(const MultilevelFeatures& f, std::size_t H, std::size_t W) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  const DecoderConfig& config() const { return cfg_; }

  /// Higher-level context of the stage over level i (1 or 2).
  std::vector<SequenceFeature> context(std::size_t level, const MultilevelFeatures& f,
                                       const SequenceFeature* interacted2) const;

  DecoderStage stage2;  // F2 with F3 as the previous feature
  DecoderStage stage1;  // F1 with F2's stage output
  Upsampler final_up;
  Linear final_head;

 private:
  DecoderConfig cfg_;
  std::size_t patch_ = 4;
};

/// Logits [l×1] on an h×w grid resized bilinearly to [H×W].
Tensor logits_to_map(const Tensor& logits, std::size_t h, std::size_t w, std::size_t H, std::size_t W);

}  // namespace m3net
