#include "m3net/upsample.hpp"

#include <cmath>

namespace m3net {

std::string_view to_string(UpsampleMethod m) {
  switch (m) {
    case UpsampleMethod::fold_overlap: return "fold_overlap";
    case UpsampleMethod::fold: return "fold";
    case UpsampleMethod::bilinear: return "bilinear";
    case UpsampleMethod::pixel_shuffle: return "pixel_shuffle";
  }
  return "?";
}

UpsampleMethod parse_upsample_method(std::string_view name) {
  if (name == "fold_overlap") return UpsampleMethod::fold_overlap;
  if (name == "fold") return UpsampleMethod::fold;
  if (name == "bilinear") return UpsampleMethod::bilinear;
  if (name == "pixel_shuffle") return UpsampleMethod::pixel_shuffle;
  throw ConfigError("unknown upsample method '" + std::string(name) + "'");
}

bool FoldGeometry::satisfied(std::size_t h, std::size_t w) const {
  if (k == 0 || s == 0 || s > k) return false;
  auto blocks = [&](std::size_t n) -> long long {
    const long long num = static_cast<long long>(s * n + 2 * p) - static_cast<long long>(k);
    if (num < 0) return -1;
    return num / static_cast<long long>(s) + 1;
  };
  return blocks(h) == static_cast<long long>(h) && blocks(w) == static_cast<long long>(w);
}

void FoldGeometry::check(std::size_t h, std::size_t w) const {
  if (!satisfied(h, w)) {
    throw ConfigError("fold geometry unsatisfiable for h=" + std::to_string(h) +
                      " w=" + std::to_string(w) + " k=" + std::to_string(k) +
                      " s=" + std::to_string(s) + " p=" + std::to_string(p));
  }
}

SequenceFeature fold(const Tensor& expanded, std::size_t h, std::size_t w, const FoldGeometry& g,
                     bool normalize) {
  g.check(h, w);
  const std::size_t kk = g.k * g.k;
  if (expanded.rank() != 2 || expanded.dim(0) != h * w || expanded.dim(1) % kk != 0) {
    throw DimensionError("fold: expanded tokens " + shape_str(expanded.shape()) + " for " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid, k=" +
                         std::to_string(g.k));
  }
  const std::size_t c = expanded.dim(1) / kk;
  const std::size_t ho = g.s * h, wo = g.s * w;
  std::vector<std::int64_t> index(expanded.size(), -1);
  std::vector<Real> coverage(ho * wo, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ki = 0; ki < g.k; ++ki)
        for (std::size_t kj = 0; kj < g.k; ++kj) {
          const long long Y = static_cast<long long>(i * g.s + ki) - static_cast<long long>(g.p);
          const long long X = static_cast<long long>(j * g.s + kj) - static_cast<long long>(g.p);
          if (Y < 0 || X < 0 || Y >= static_cast<long long>(ho) || X >= static_cast<long long>(wo)) continue;
          const std::size_t pix = static_cast<std::size_t>(Y) * wo + static_cast<std::size_t>(X);
          coverage[pix] += 1.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t src = (i * w + j) * c * kk + ch * kk + ki * g.k + kj;
            index[src] = static_cast<std::int64_t>(pix * c + ch);
          }
        }
  Tensor out = scatter_add(expanded, index, {ho * wo, c});
  if (normalize) {
    std::vector<Real> inv(ho * wo * c);
    for (std::size_t pix = 0; pix < ho * wo; ++pix)
      for (std::size_t ch = 0; ch < c; ++ch)
        inv[pix * c + ch] = coverage[pix] > 0 ? 1.0 / coverage[pix] : 0.0;
    out = mul(out, Tensor::from({ho * wo, c}, std::move(inv)));
  }
  return SequenceFeature::make(std::move(out), ho, wo);
}

SequenceFeature pixel_shuffle(const Tensor& x, std::size_t h, std::size_t w, std::size_t s) {
  const std::size_t ss = s * s;
  if (s == 0 || x.rank() != 2 || x.dim(0) != h * w || x.dim(1) % ss != 0) {
    throw DimensionError("pixel_shuffle: " + shape_str(x.shape()) + " for " + std::to_string(h) +
                         "x" + std::to_string(w) + " grid, s=" + std::to_string(s));
  }
  const std::size_t c = x.dim(1) / ss, ho = s * h, wo = s * w;
  std::vector<std::int64_t> index(ho * wo * c);
  for (std::size_t Y = 0; Y < ho; ++Y)
    for (std::size_t X = 0; X < wo; ++X)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t token = (Y / s) * w + X / s;
        index[(Y * wo + X) * c + ch] =
            static_cast<std::int64_t>(token * c * ss + ch * ss + (Y % s) * s + X % s);
      }
  return SequenceFeature::make(gather(x, index, {ho * wo, c}), ho, wo);
}

RowMix bilinear_mix(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  auto axis = [](std::size_t in, std::size_t out, std::size_t o, std::size_t& i0, std::size_t& i1,
                 Real& frac) {
    Real src = (static_cast<Real>(o) + 0.5) * static_cast<Real>(in) / static_cast<Real>(out) - 0.5;
    if (src < 0) src = 0;
    i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    frac = src - static_cast<Real>(i0);
    if (i0 == i1) frac = 0;
  };
  RowMix mix;
  mix.offsets.push_back(0);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    Real fy;
    axis(in_h, out_h, y, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      Real fx;
      axis(in_w, out_w, x, x0, x1, fx);
      const std::size_t ys[2] = {y0, y1}, xs[2] = {x0, x1};
      const Real wy[2] = {1 - fy, fy}, wx[2] = {1 - fx, fx};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const Real wgt = wy[a] * wx[b];
          if (wgt == 0) continue;
          mix.src.push_back(ys[a] * in_w + xs[b]);
          mix.weight.push_back(wgt);
        }
      mix.offsets.push_back(mix.src.size());
    }
  }
  return mix;
}

SequenceFeature bilinear_resize(const SequenceFeature& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == x.h && out_w == x.w) return x;
  Tensor t = row_mix(x.tokens, bilinear_mix(x.h, x.w, out_h, out_w), {out_h * out_w, x.channels()});
  return SequenceFeature::make(std::move(t), out_h, out_w);
}

SequenceFeature crop(const SequenceFeature& x, std::size_t h, std::size_t w) {
  if (h > x.h || w > x.w) throw DimensionError("crop: target larger than map");
  if (h == x.h && w == x.w) return x;
  std::vector<std::int64_t> index(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) index[y * w + xx] = static_cast<std::int64_t>(y * x.w + xx);
  return SequenceFeature::make(gather_rows(x.tokens, index, {h * w, x.channels()}), h, w);
}

Upsampler::Upsampler(UpsampleMethod method, std::size_t channels, FoldGeometry geometry, Rng& rng,
                     bool normalize)
    : method_(method), geometry_(geometry), channels_(channels), normalize_(normalize) {
  switch (method) {
    case UpsampleMethod::fold_overlap:
      expand = Linear(channels, channels * geometry.k * geometry.k, rng);
      break;
    case UpsampleMethod::fold:
      geometry_ = FoldGeometry{geometry.s, geometry.s, 0};
      expand = Linear(channels, channels * geometry.s * geometry.s, rng);
      break;
    case UpsampleMethod::pixel_shuffle:
      expand = Linear(channels, channels * geometry.s * geometry.s, rng);
      break;
    case UpsampleMethod::bilinear:
      break;
  }
}

SequenceFeature upsample_fold_overlap(const SequenceFeature& x, const Linear& expand,
                                      const FoldGeometry& g, bool normalize) {
  return fold(expand(x.tokens), x.h, x.w, g, normalize);
}

SequenceFeature Upsampler::operator()(const SequenceFeature& x) const {
  if (x.channels() != channels_) {
    throw DimensionError("upsample: input has " + std::to_string(x.channels()) +
                         " channels, expected " + std::to_string(channels_));
  }
  const std::size_t s = geometry_.s;
  switch (method_) {
    case UpsampleMethod::fold_overlap:
    case UpsampleMethod::fold:
      return upsample_fold_overlap(x, expand, geometry_, normalize_);
    case UpsampleMethod::pixel_shuffle:
      return pixel_shuffle(expand(x.tokens), x.h, x.w, s);
    case UpsampleMethod::bilinear:
      return bilinear_resize(x, s * x.h, s * x.w);
  }
  throw ConfigError("upsample: unknown method");
}

void Upsampler::collect(const std::string& prefix, ParameterList& out) const {
  if (expand.weight.defined()) expand.collect(prefix + ".expand", out);
}

}  // namespace m3net
