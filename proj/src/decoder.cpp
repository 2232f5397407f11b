#include "m3net/decoder.hpp"

#include <algorithm>

namespace m3net {

std::string_view to_string(InteractionMode m) {
  switch (m) {
    case InteractionMode::high_to_low: return "high_to_low";
    case InteractionMode::low_to_high: return "low_to_high";
    case InteractionMode::bidirectional: return "bidirectional";
  }
  return "?";
}

std::string_view to_string(MabAttention m) {
  switch (m) {
    case MabAttention::mixed: return "mixed";
    case MabAttention::window: return "window";
    case MabAttention::global: return "global";
  }
  return "?";
}

std::string_view to_string(ContextSource s) {
  return s == ContextSource::interacted ? "interacted" : "raw";
}

InteractionMode parse_interaction(std::string_view name) {
  if (name == "high_to_low" || name == "h2l") return InteractionMode::high_to_low;
  if (name == "low_to_high" || name == "l2h") return InteractionMode::low_to_high;
  if (name == "bidirectional" || name == "bi") return InteractionMode::bidirectional;
  throw ConfigError("unknown interaction mode '" + std::string(name) + "'");
}

MabAttention parse_mab_attention(std::string_view name) {
  if (name == "mixed") return MabAttention::mixed;
  if (name == "window") return MabAttention::window;
  if (name == "global") return MabAttention::global;
  throw ConfigError("unknown MAB attention mode '" + std::string(name) + "'");
}

ContextSource parse_context_source(std::string_view name) {
  if (name == "interacted") return ContextSource::interacted;
  if (name == "raw") return ContextSource::raw;
  throw ConfigError("unknown context source '" + std::string(name) + "'");
}

void DecoderConfig::validate(std::size_t patch_size) const {
  if (r == 0) throw ConfigError("decoder: r must be at least 1");
  if (d_mab == 0) throw ConfigError("decoder: d_mab must be positive");
  if (window.h == 0 || window.w == 0) throw ConfigError("decoder: empty window");
  if (across_levels < 1 || across_levels > 3) throw ConfigError("decoder: across_levels must be 1, 2 or 3");
  if (mlp_ratio == 0) throw ConfigError("decoder: mlp ratio must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    if (fold[i].s == 0 || fold[i].s > fold[i].k) {
      throw ConfigError("decoder: fold step " + std::to_string(i) + " needs 0 < s <= k");
    }
  }
  if (fold[0].s != 2 || fold[1].s != 2 || fold[2].s != patch_size) {
    throw ConfigError("decoder: fold strides must be [2, 2, " + std::to_string(patch_size) +
                      "] to reach the next level and the image");
  }
}

void DecoderConfig::check_geometry(std::size_t H, std::size_t W, std::size_t patch_size) const {
  const std::size_t grids[3] = {patch_size * 4, patch_size * 2, patch_size};
  for (std::size_t i = 0; i < 3; ++i) {
    if (upsample == UpsampleMethod::fold_overlap) fold[i].check(H / grids[i], W / grids[i]);
  }
}

namespace {

/// Nearest-neighbour expansion of a coarse token map onto a finer grid.
Tensor expand_nearest(const Tensor& tokens, std::size_t hh, std::size_t hw, std::size_t h,
                      std::size_t w) {
  std::vector<std::int64_t> index(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      index[y * w + x] = static_cast<std::int64_t>((y * hh / h) * hw + x * hw / w);
  return gather_rows(tokens, index, {h * w, tokens.dim(1)});
}

AttentionConfig ca_config(std::size_t c_low, const DecoderConfig& cfg) {
  const std::size_t d = cfg.ca_dim ? cfg.ca_dim : c_low;
  return AttentionConfig{d, default_heads(d, cfg.head_dim), std::nullopt};
}

}  // namespace

Mib::Mib(std::size_t c_low, const std::vector<std::size_t>& c_highs, const DecoderConfig& cfg, Rng& rng)
    : norm(c_low), n_highs_(c_highs.size()), c_low_(c_low) {
  if (c_highs.empty()) throw ContractError("mib: needs at least one higher level");
  const AttentionConfig acfg = ca_config(c_low, cfg);
  const bool use_down = cfg.interaction != InteractionMode::low_to_high;
  const bool use_up = cfg.interaction != InteractionMode::high_to_low;
  for (std::size_t c_high : c_highs) {
    if (use_down) down.emplace_back(c_low, c_high, acfg, c_low, rng);
    if (use_up) up.emplace_back(c_high, c_low, acfg, c_low, rng);
  }
  mlp = Mlp(c_low, cfg.mlp_ratio * c_low, c_low, rng);
}

SequenceFeature Mib::operator()(const SequenceFeature& low,
                                const std::vector<SequenceFeature>& highs) const {
  if (highs.empty()) throw ContractError("mib: needs at least one higher level");
  if (highs.size() != n_highs_) {
    throw ContractError("mib: built for " + std::to_string(n_highs_) + " higher levels, got " +
                        std::to_string(highs.size()));
  }
  if (low.channels() != c_low_) {
    throw DimensionError("mib: low level has " + std::to_string(low.channels()) +
                         " channels, block expects " + std::to_string(c_low_));
  }
  Tensor f = low.tokens;
  for (std::size_t j = 0; j < down.size(); ++j) f = add(f, down[j](low, highs[j]));
  for (std::size_t j = 0; j < up.size(); ++j) {
    const SequenceFeature& hi = highs[j];
    f = add(f, expand_nearest(up[j](hi, low), hi.h, hi.w, low.h, low.w));
  }
  Tensor out = add(mlp(norm(f)), f);
  return SequenceFeature::make(std::move(out), low.h, low.w);
}

void Mib::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t j = 0; j < down.size(); ++j) down[j].collect(prefix + ".ca" + std::to_string(j), out);
  for (std::size_t j = 0; j < up.size(); ++j) up[j].collect(prefix + ".ca_up" + std::to_string(j), out);
  norm.collect(prefix + ".norm", out);
  mlp.collect(prefix + ".mlp", out);
}

SequenceFeature mib(const SequenceFeature& low, const std::vector<SequenceFeature>& highs,
                    const Mib& block) {
  return block(low, highs);
}

MabBlock::MabBlock(std::size_t d, const DecoderConfig& cfg, Rng& rng)
    : mode_(cfg.attention),
      window_(cfg.window),
      residual_(cfg.mab_attention_residual),
      pre_norm_enabled_(cfg.mab_pre_norm) {
  const std::size_t heads = default_heads(d, cfg.head_dim);
  if (mode_ != MabAttention::global) window_attn = SelfAttention(AttentionConfig{d, heads, cfg.window}, rng);
  if (mode_ != MabAttention::window) global_attn = SelfAttention(AttentionConfig{d, heads, std::nullopt}, rng);
  if (pre_norm_enabled_) pre_norm = LayerNorm(d);
  norm = LayerNorm(d);
  mlp = Mlp(d, cfg.mlp_ratio * d, d, rng);
}

SequenceFeature MabBlock::mixed_attention(const SequenceFeature& x) const {
  SequenceFeature in = x;
  if (pre_norm_enabled_) in = SequenceFeature::make(pre_norm(x.tokens), x.h, x.w);
  // Clipping the window to the map leaves a single window unchanged.
  const Window eff{std::min(window_.h, x.h), std::min(window_.w, x.w)};
  switch (mode_) {
    case MabAttention::window:
      return window_attn.windowed(in, eff, false);
    case MabAttention::global:
      return global_attn.global(in);
    case MabAttention::mixed:
      return SequenceFeature::make(
          add(window_attn.windowed(in, eff, false).tokens, global_attn.global(in).tokens), x.h, x.w);
  }
  throw ConfigError("mab: unknown attention mode");
}

SequenceFeature MabBlock::operator()(const SequenceFeature& x) const {
  Tensor f = mixed_attention(x).tokens;
  if (residual_) f = add(f, x.tokens);
  f = add(mlp(norm(f)), f);
  return SequenceFeature::make(std::move(f), x.h, x.w);
}

void MabBlock::collect(const std::string& prefix, ParameterList& out) const {
  if (window_attn.qkv.weight.defined()) window_attn.collect(prefix + ".w_msa", out);
  if (global_attn.qkv.weight.defined()) global_attn.collect(prefix + ".msa", out);
  if (pre_norm_enabled_) pre_norm.collect(prefix + ".pre_norm", out);
  norm.collect(prefix + ".norm", out);
  mlp.collect(prefix + ".mlp", out);
}

MabStack::MabStack(std::size_t c_in, std::size_t c_out, const DecoderConfig& cfg, std::size_t r, Rng& rng)
    : lift(c_in, cfg.d_mab, cfg.d_mab, rng) {
  for (std::size_t i = 0; i < r; ++i) blocks.emplace_back(cfg.d_mab, cfg, rng);
  restore = Mlp(cfg.d_mab, cfg.d_mab, c_out, rng);
}

SequenceFeature MabStack::operator()(const SequenceFeature& x) const {
  if (x.channels() != lift.fc1.in_features()) {
    throw DimensionError("mab_stack: input has " + std::to_string(x.channels()) +
                         " channels, stack expects " + std::to_string(lift.fc1.in_features()));
  }
  SequenceFeature f = SequenceFeature::make(lift(x.tokens), x.h, x.w);
  for (const MabBlock& b : blocks) f = b(f);
  return SequenceFeature::make(restore(f.tokens), x.h, x.w);
}

void MabStack::collect(const std::string& prefix, ParameterList& out) const {
  lift.collect(prefix + ".mlp1", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
  restore.collect(prefix + ".mlp2", out);
}

SequenceFeature mab_stack(const SequenceFeature& x, const MabStack& stack) { return stack(x); }

DecoderStage::DecoderStage(std::size_t c_low, std::size_t c_prev, const std::vector<std::size_t>& c_highs,
                           const FoldGeometry& geometry, const DecoderConfig& cfg, Rng& rng)
    : interaction(c_low, c_highs, cfg, rng),
      upsample(cfg.upsample, c_prev, geometry, rng, cfg.fold_normalize),
      mab(c_low + c_prev, c_low, cfg, cfg.r, rng),
      head(c_low, 1, rng) {}

StageOutput DecoderStage::operator()(const SequenceFeature& low, const std::vector<SequenceFeature>& ctx,
                                     const SequenceFeature& prev) const {
  SequenceFeature fu = upsample(prev);
  SequenceFeature fi = interaction(low, ctx);
  if (fu.h != fi.h || fu.w != fi.w) {
    throw DimensionError("decode_stage: upsampled map " + std::to_string(fu.h) + "x" +
                         std::to_string(fu.w) + " does not match " + std::to_string(fi.h) + "x" +
                         std::to_string(fi.w));
  }
  SequenceFeature fc = SequenceFeature::make(concat_cols({fi.tokens, fu.tokens}), fi.h, fi.w);
  SequenceFeature fm = mab(fc);
  Tensor fp = head(fm.tokens);
  return StageOutput{std::move(fi), std::move(fm), std::move(fp)};
}

void DecoderStage::collect(const std::string& prefix, ParameterList& out) const {
  interaction.collect(prefix + ".mib", out);
  upsample.collect(prefix + ".up", out);
  mab.collect(prefix + ".mab", out);
  head.collect(prefix + ".head", out);
}

StageOutput decode_stage(const SequenceFeature& low, const std::vector<SequenceFeature>& ctx,
                         const SequenceFeature& prev, const DecoderStage& stage) {
  return stage(low, ctx, prev);
}

namespace {

// Widths of the levels above `level` (1-based), nearest first, up to c4.
std::vector<std::size_t> context_widths(std::size_t level, const std::vector<std::size_t>& dims,
                                        std::size_t span) {
  std::vector<std::size_t> out;
  for (std::size_t j = level; j < 4 && out.size() < span; ++j) out.push_back(dims[j]);
  return out;
}

}  // namespace

Decoder::Decoder(const std::vector<std::size_t>& dims, std::size_t patch_size, const DecoderConfig& cfg,
                 Rng& rng)
    : cfg_(cfg), patch_(patch_size) {
  cfg_.validate(patch_size);
  if (dims.size() != 4) throw ConfigError("decoder: expected four encoder widths");
  stage2 = DecoderStage(dims[1], dims[2], context_widths(2, dims, cfg.across_levels), cfg.fold[0], cfg, rng);
  stage1 = DecoderStage(dims[0], dims[1], context_widths(1, dims, cfg.across_levels), cfg.fold[1], cfg, rng);
  final_up = Upsampler(cfg.upsample, dims[0], cfg.fold[2], rng, cfg.fold_normalize);
  final_head = Linear(dims[0], 1, rng);
}

std::vector<SequenceFeature> Decoder::context(std::size_t level, const MultilevelFeatures& f,
                                              const SequenceFeature* interacted2) const {
  std::vector<SequenceFeature> avail;
  if (level == 1) {
    avail.push_back(interacted2 && cfg_.ctx_source == ContextSource::interacted ? *interacted2 : f.F2);
  }
  avail.push_back(f.F3);
  avail.push_back(f.F4);
  avail.resize(std::min(avail.size(), cfg_.across_levels));
  return avail;
}

Tensor logits_to_map(const Tensor& logits, std::size_t h, std::size_t w, std::size_t H, std::size_t W) {
  SequenceFeature f = bilinear_resize(SequenceFeature::make(logits, h, w), H, W);
  return reshape(f.tokens, {H, W});
}

std::vector<Tensor> Decoder::forward(const MultilevelFeatures& f, std::size_t H, std::size_t W) const {
  cfg_.check_geometry(H, W, patch_);
  StageOutput a = stage2(f.F2, context(2, f, nullptr), f.F3);
  StageOutput b = stage1(f.F1, context(1, f, &a.F_I), a.F_M);
  SequenceFeature full = final_up(b.F_M);
  if (full.h != H || full.w != W) {
    throw DimensionError("decoder: final map " + std::to_string(full.h) + "x" + std::to_string(full.w) +
                         " does not match the image");
  }
  Tensor fin = final_head(full.tokens);
  return {logits_to_map(a.F_P, a.F_M.h, a.F_M.w, H, W), logits_to_map(b.F_P, b.F_M.h, b.F_M.w, H, W),
          reshape(fin, {H, W})};
}

void Decoder::collect(const std::string& prefix, ParameterList& out) const {
  stage2.collect(prefix + ".stage2", out);
  stage1.collect(prefix + ".stage1", out);
  final_up.collect(prefix + ".final_up", out);
  final_head.collect(prefix + ".final_head", out);
}

}  // namespace m3net
