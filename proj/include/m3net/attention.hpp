#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "m3net/nn.hpp"

namespace m3net {

/// Token-form feature map: l = h·w tokens of c channels, row-major over the
/// spatial grid.
struct SequenceFeature {
  Tensor tokens;  // [l × c]
  std::size_t h = 0;
  std::size_t w = 0;

  static SequenceFeature make(Tensor tokens, std::size_t h, std::size_t w);
  std::size_t length() const { return h * w; }
  std::size_t channels() const { return tokens.dim(1); }
};

struct Window {
  std::size_t h = 7;
  std::size_t w = 7;
  bool operator==(const Window&) const = default;
};

struct AttentionConfig {
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::optional<Window> window;

  void validate() const;
};

/// max(1, dim / head_dim), lowered until it divides dim.
std::size_t default_heads(std::size_t dim, std::size_t head_dim);

/// Softmax(q·kᵀ/√d)·v with optional boolean mask [l_q × l_k] (nonzero = keep).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>* mask = nullptr);

/// Where every token of an h×w map lands when the map is zero-padded to a
/// multiple of the window (plus `extra_pad`), optionally cyclically shifted
/// by half a window, and tiled into row-major windows.
struct WindowLayout {
  std::size_t map_h = 0, map_w = 0;
  Window window;
  std::size_t padded_h = 0, padded_w = 0;
  std::size_t shift_h = 0, shift_w = 0;
  std::size_t n_windows = 0;
  std::size_t window_len = 0;
  std::vector<std::int64_t> slot_source;  // window slot → token index, −1 for padding
  std::vector<std::int64_t> token_slot;   // token index → window slot
  std::vector<int> region;                // shift region label per slot
  std::vector<std::uint8_t> mask;         // [n_windows × len × len], nonzero = may attend

  std::size_t padded_slots() const;
};

WindowLayout make_window_layout(std::size_t h, std::size_t w, Window win, bool shifted,
                                std::size_t extra_pad = 0);

struct WindowBatch {
  Tensor windows;  // [n_windows × window_len × c]
  WindowLayout layout;
};

WindowBatch window_partition(const SequenceFeature& x, Window win, bool shifted = false,
                             std::size_t extra_pad = 0);
/// Inverse of window_partition: drops padding, undoes the shift.
SequenceFeature window_merge(const Tensor& windows, const WindowLayout& layout);

/// Multi-head self-attention with a fused QKV projection and an output
/// projection. With a relative-position table it adds the learned bias for
/// in-window offsets (window attention only).
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(const AttentionConfig& cfg, Rng& rng, bool relative_position_bias = false);

  SequenceFeature global(const SequenceFeature& x) const;
  SequenceFeature windowed(const SequenceFeature& x, Window win, bool shifted,
                           std::size_t extra_pad = 0) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t dim() const { return cfg_.dim; }
  std::size_t heads() const { return cfg_.heads; }
  const AttentionConfig& config() const { return cfg_; }

  Linear qkv;
  Linear proj;
  Tensor rel_table;  // [(2·wh−1)(2·ww−1) × heads], undefined when disabled

 private:
  Tensor relative_bias(Window effective) const;
  void check_input(const SequenceFeature& x) const;

  AttentionConfig cfg_;
};

SequenceFeature msa(const SequenceFeature& x, const SelfAttention& attn);
/// Requires attn.config().window.
SequenceFeature window_msa(const SequenceFeature& x, const SelfAttention& attn);
SequenceFeature shifted_window_msa(const SequenceFeature& x, const SelfAttention& attn);

/// Queries from `low`, keys and values from `high`; the result keeps the
/// low-level token count whatever the high-level resolution.
class CrossAttention {
 public:
  CrossAttention() = default;
  /// Projects low (c_low) and high (c_high) to cfg.dim, then back to c_out.
  CrossAttention(std::size_t c_low, std::size_t c_high, const AttentionConfig& cfg,
                 std::size_t c_out, Rng& rng);

  Tensor operator()(const SequenceFeature& low, const SequenceFeature& high) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear q, k, v, o;

 private:
  std::size_t heads_ = 1;
};

Tensor cross_attention(const SequenceFeature& low, const SequenceFeature& high,
                       const CrossAttention& ca);

}  // namespace m3net
