#include "m3net/attention.hpp"

#include <algorithm>

namespace m3net {

SequenceFeature SequenceFeature::make(Tensor tokens, std::size_t h, std::size_t w) {
  if (tokens.rank() != 2 || tokens.dim(0) != h * w) {
    throw DimensionError("sequence feature " + shape_str(tokens.shape()) + " does not hold " +
                         std::to_string(h) + "x" + std::to_string(w) + " tokens");
  }
  return SequenceFeature{std::move(tokens), h, w};
}

void AttentionConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads must divide width " +
                      std::to_string(dim));
  }
  if (window && (window->h == 0 || window->w == 0)) throw ConfigError("attention: empty window");
}

std::size_t default_heads(std::size_t dim, std::size_t head_dim) {
  std::size_t heads = std::max<std::size_t>(1, head_dim ? dim / head_dim : 1);
  while (heads > 1 && dim % heads != 0) --heads;
  return heads;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>* mask) {
  return attention(q, k, v, 1, mask);
}

std::size_t WindowLayout::padded_slots() const {
  return static_cast<std::size_t>(std::count(slot_source.begin(), slot_source.end(), -1));
}

WindowLayout make_window_layout(std::size_t h, std::size_t w, Window win, bool shifted,
                                std::size_t extra_pad) {
  if (win.h == 0 || win.w == 0) throw ConfigError("window extents must be >= 1");
  WindowLayout L;
  L.map_h = h;
  L.map_w = w;
  L.window = win;
  L.padded_h = (h + extra_pad + win.h - 1) / win.h * win.h;
  L.padded_w = (w + extra_pad + win.w - 1) / win.w * win.w;
  L.shift_h = shifted ? win.h / 2 : 0;
  L.shift_w = shifted ? win.w / 2 : 0;
  const std::size_t nwh = L.padded_h / win.h, nww = L.padded_w / win.w;
  L.n_windows = nwh * nww;
  L.window_len = win.h * win.w;
  const std::size_t slots = L.n_windows * L.window_len;
  L.slot_source.assign(slots, -1);
  L.token_slot.assign(h * w, -1);
  L.region.assign(slots, 0);

  // Swin labelling on the shifted padded map: [0, P−win), [P−win, P−shift), [P−shift, P).
  auto label = [](std::size_t pos, std::size_t padded, std::size_t wsz, std::size_t shift) {
    if (shift == 0) return 0;
    if (pos < padded - wsz) return 0;
    if (pos < padded - shift) return 1;
    return 2;
  };

  for (std::size_t wy = 0; wy < nwh; ++wy) {
    for (std::size_t wx = 0; wx < nww; ++wx) {
      const std::size_t widx = wy * nww + wx;
      for (std::size_t ty = 0; ty < win.h; ++ty) {
        for (std::size_t tx = 0; tx < win.w; ++tx) {
          const std::size_t slot = widx * L.window_len + ty * win.w + tx;
          const std::size_t yy = wy * win.h + ty, xx = wx * win.w + tx;
          const std::size_t oy = (yy + L.shift_h) % L.padded_h;
          const std::size_t ox = (xx + L.shift_w) % L.padded_w;
          L.region[slot] = label(yy, L.padded_h, win.h, L.shift_h) * 3 +
                           label(xx, L.padded_w, win.w, L.shift_w);
          if (oy < h && ox < w) {
            const auto token = static_cast<std::int64_t>(oy * w + ox);
            L.slot_source[slot] = token;
            L.token_slot[static_cast<std::size_t>(token)] = static_cast<std::int64_t>(slot);
          }
        }
      }
    }
  }

  const std::size_t n = L.window_len;
  L.mask.assign(L.n_windows * n * n, 0);
  for (std::size_t widx = 0; widx < L.n_windows; ++widx) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t si = widx * n + i;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t sj = widx * n + j;
        const bool same_region = L.region[si] == L.region[sj];
        const bool key_real = L.slot_source[sj] >= 0;
        L.mask[(widx * n + i) * n + j] = same_region && (key_real || i == j);
      }
    }
  }
  return L;
}

WindowBatch window_partition(const SequenceFeature& x, Window win, bool shifted,
                             std::size_t extra_pad) {
  WindowLayout layout = make_window_layout(x.h, x.w, win, shifted, extra_pad);
  const std::size_t c = x.channels();
  Tensor windows =
      gather_rows(x.tokens, layout.slot_source, {layout.n_windows, layout.window_len, c});
  return WindowBatch{std::move(windows), std::move(layout)};
}

SequenceFeature window_merge(const Tensor& windows, const WindowLayout& layout) {
  if (windows.rank() != 3 || windows.dim(0) != layout.n_windows ||
      windows.dim(1) != layout.window_len) {
    throw DimensionError("window_merge: windows " + shape_str(windows.shape()) +
                         " do not match layout");
  }
  Tensor tokens = gather_rows(windows, layout.token_slot, {layout.map_h * layout.map_w, windows.dim(2)});
  return SequenceFeature::make(std::move(tokens), layout.map_h, layout.map_w);
}

SelfAttention::SelfAttention(const AttentionConfig& cfg, Rng& rng, bool relative_position_bias)
    : qkv(cfg.dim, 3 * cfg.dim, rng), proj(cfg.dim, cfg.dim, rng), cfg_(cfg) {
  cfg_.validate();
  if (relative_position_bias) {
    if (!cfg.window) throw ConfigError("relative position bias needs a window");
    const std::size_t entries = (2 * cfg.window->h - 1) * (2 * cfg.window->w - 1);
    rel_table = trunc_normal({entries, cfg.heads}, Init::kSigma, rng);
    rel_table.set_requires_grad(true);
  }
}

void SelfAttention::check_input(const SequenceFeature& x) const {
  if (x.channels() != cfg_.dim) {
    throw DimensionError("self-attention: input has " + std::to_string(x.channels()) +
                         " channels, block expects " + std::to_string(cfg_.dim));
  }
}

void SelfAttention::collect(const std::string& prefix, ParameterList& out) const {
  qkv.collect(prefix + ".qkv", out);
  proj.collect(prefix + ".proj", out);
  if (rel_table.defined()) out.push_back({prefix + ".rel_table", rel_table});
}

SequenceFeature SelfAttention::global(const SequenceFeature& x) const {
  check_input(x);
  const std::size_t d = cfg_.dim;
  Tensor t = qkv(x.tokens);
  Tensor out = attention(slice_cols(t, 0, d), slice_cols(t, d, 2 * d), slice_cols(t, 2 * d, 3 * d),
                         cfg_.heads);
  return SequenceFeature::make(proj(out), x.h, x.w);
}

Tensor SelfAttention::relative_bias(Window eff) const {
  const Window table = *cfg_.window;
  if (eff.h > table.h || eff.w > table.w) {
    throw ConfigError("relative position table is smaller than the attention window");
  }
  const std::size_t n = eff.h * eff.w, heads = cfg_.heads, span_w = 2 * table.w - 1;
  std::vector<std::int64_t> index(heads * n * n);
  for (std::size_t hd = 0; hd < heads; ++hd)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t dy = i / eff.w + table.h - 1 - j / eff.w;
        const std::size_t dx = i % eff.w + table.w - 1 - j % eff.w;
        index[(hd * n + i) * n + j] = static_cast<std::int64_t>((dy * span_w + dx) * heads + hd);
      }
  return gather(rel_table, index, {heads, n, n});
}

SequenceFeature SelfAttention::windowed(const SequenceFeature& x, Window win, bool shifted,
                                        std::size_t extra_pad) const {
  check_input(x);
  const std::size_t d = cfg_.dim;
  WindowBatch batch = window_partition(x, win, shifted, extra_pad);
  Tensor t = qkv(batch.windows);
  Tensor bias;
  if (rel_table.defined()) bias = relative_bias(win);
  Tensor out = attention(slice_cols(t, 0, d), slice_cols(t, d, 2 * d), slice_cols(t, 2 * d, 3 * d),
                         cfg_.heads, &batch.layout.mask, bias.defined() ? &bias : nullptr);
  SequenceFeature merged = window_merge(out, batch.layout);
  return SequenceFeature::make(proj(merged.tokens), x.h, x.w);
}

SequenceFeature msa(const SequenceFeature& x, const SelfAttention& attn) { return attn.global(x); }

SequenceFeature window_msa(const SequenceFeature& x, const SelfAttention& attn) {
  if (!attn.config().window) throw ConfigError("window_msa: attention has no window configured");
  return attn.windowed(x, *attn.config().window, false);
}

SequenceFeature shifted_window_msa(const SequenceFeature& x, const SelfAttention& attn) {
  if (!attn.config().window) throw ConfigError("shifted_window_msa: attention has no window configured");
  return attn.windowed(x, *attn.config().window, true);
}

CrossAttention::CrossAttention(std::size_t c_low, std::size_t c_high, const AttentionConfig& cfg,
                               std::size_t c_out, Rng& rng)
    : q(c_low, cfg.dim, rng),
      k(c_high, cfg.dim, rng),
      v(c_high, cfg.dim, rng),
      o(cfg.dim, c_out, rng),
      heads_(cfg.heads) {
  cfg.validate();
}

Tensor CrossAttention::operator()(const SequenceFeature& low, const SequenceFeature& high) const {
  if (low.channels() != q.in_features() || high.channels() != k.in_features()) {
    throw DimensionError("cross_attention: inputs with " + std::to_string(low.channels()) + "/" +
                         std::to_string(high.channels()) + " channels, block expects " +
                         std::to_string(q.in_features()) + "/" + std::to_string(k.in_features()));
  }
  return o(attention(q(low.tokens), k(high.tokens), v(high.tokens), heads_));
}

void CrossAttention::collect(const std::string& prefix, ParameterList& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

Tensor cross_attention(const SequenceFeature& low, const SequenceFeature& high,
                       const CrossAttention& ca) {
  return ca(low, high);
}

}  // namespace m3net
