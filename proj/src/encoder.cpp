#include "m3net/encoder.hpp"

#include <algorithm>

namespace m3net {

void EncoderConfig::validate() const {
  if (patch_size == 0) throw ConfigError("encoder: patch size must be positive");
  if (dims.size() != 4 || depths.size() != 4) {
    throw ConfigError("encoder: expected four stage dims and depths");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (dims[i] == 0) throw ConfigError("encoder: stage width must be positive");
    if (i > 0 && dims[i] != 2 * dims[i - 1]) {
      throw ConfigError("encoder: stage widths must double from stage to stage");
    }
    if (depths[i] % 2 != 0) throw ConfigError("encoder: stage depths must be even");
  }
  if (window.h == 0 || window.w == 0) throw ConfigError("encoder: empty window");
  if (mlp_ratio == 0) throw ConfigError("encoder: mlp ratio must be positive");
}

PatchEmbed::PatchEmbed(std::size_t patch, std::size_t dim, Rng& rng)
    : proj(3 * patch * patch, dim, rng), norm(dim), patch_(patch) {}

SequenceFeature PatchEmbed::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("patch_embed: expected a [3xHxW] image, got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(1), W = image.dim(2), p = patch_;
  if (H % p != 0 || W % p != 0) {
    throw DimensionError("patch_embed: image " + std::to_string(H) + "x" + std::to_string(W) +
                         " is not divisible by patch size " + std::to_string(p));
  }
  const std::size_t h = H / p, w = W / p, f = 3 * p * p;
  std::vector<std::int64_t> index(h * w * f);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px)
            index[(i * w + j) * f + ch * p * p + py * p + px] =
                static_cast<std::int64_t>((ch * H + i * p + py) * W + j * p + px);
  Tensor patches = gather(image, index, {h * w, f});
  return SequenceFeature::make(norm(proj(patches)), h, w);
}

void PatchEmbed::collect(const std::string& prefix, ParameterList& out) const {
  proj.collect(prefix + ".proj", out);
  norm.collect(prefix + ".norm", out);
}

SwinBlock::SwinBlock(std::size_t dim, const EncoderConfig& cfg, Rng& rng)
    : norm1(dim),
      attn(AttentionConfig{dim, default_heads(dim, cfg.head_dim), cfg.window}, rng, cfg.rel_pos_bias),
      norm2(dim),
      mlp(dim, cfg.mlp_ratio * dim, dim, rng),
      window_(cfg.window) {}

SequenceFeature SwinBlock::operator()(const SequenceFeature& x, bool shifted) const {
  const Window eff{std::min(window_.h, x.h), std::min(window_.w, x.w)};
  const bool shift = shifted && !(eff.h == x.h && eff.w == x.w);
  SequenceFeature normed = SequenceFeature::make(norm1(x.tokens), x.h, x.w);
  Tensor z = add(attn.windowed(normed, eff, shift).tokens, x.tokens);
  z = add(mlp(norm2(z)), z);
  return SequenceFeature::make(std::move(z), x.h, x.w);
}

void SwinBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

SequenceFeature swin_pair(const SequenceFeature& x, const SwinBlock& regular,
                          const SwinBlock& shifted) {
  return shifted(regular(x, false), true);
}

PatchMerging::PatchMerging(std::size_t dim, Rng& rng)
    : norm(4 * dim), reduce(4 * dim, 2 * dim, rng, false) {}

SequenceFeature PatchMerging::operator()(const SequenceFeature& x) const {
  const std::size_t c = x.channels();
  if (4 * c != reduce.in_features()) {
    throw DimensionError("patch_merging: input has " + std::to_string(c) + " channels");
  }
  const std::size_t h = (x.h + 1) / 2, w = (x.w + 1) / 2;
  // Neighbour order (0,0), (1,0), (0,1), (1,1) as (row, col) offsets.
  static constexpr std::size_t kOff[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::int64_t> index(h * w * 4 * c);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t y = 2 * i + kOff[q][0], xx = 2 * j + kOff[q][1];
        for (std::size_t ch = 0; ch < c; ++ch) {
          index[((i * w + j) * 4 + q) * c + ch] =
              (y < x.h && xx < x.w) ? static_cast<std::int64_t>((y * x.w + xx) * c + ch) : -1;
        }
      }
  Tensor merged = gather(x.tokens, index, {h * w, 4 * c});
  return SequenceFeature::make(reduce(norm(merged)), h, w);
}

void PatchMerging::collect(const std::string& prefix, ParameterList& out) const {
  norm.collect(prefix + ".norm", out);
  reduce.collect(prefix + ".reduce", out);
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  embed = PatchEmbed(cfg.patch_size, cfg.dims[0], rng);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) merges.emplace_back(cfg.dims[s - 1], rng);
    std::vector<SwinBlock> blocks;
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) blocks.emplace_back(cfg.dims[s], cfg, rng);
    stages.push_back(std::move(blocks));
    out_norms.emplace_back(cfg.dims[s]);
  }
  fuse_up = Upsampler(cfg.fuse_method, cfg.dims[3], cfg.fuse_geometry, rng);
  fuse_proj = Linear(cfg.dims[3], cfg.dims[2], rng);
}

MultilevelFeatures Encoder::encode(const Tensor& image) const {
  if (image.rank() != 3) {
    throw DimensionError("encode: expected a [3xHxW] image, got " + shape_str(image.shape()));
  }
  const std::size_t unit = 4 * cfg_.patch_size;
  if (image.dim(1) % unit != 0 || image.dim(2) % unit != 0) {
    throw DimensionError("encode: image " + std::to_string(image.dim(1)) + "x" +
                         std::to_string(image.dim(2)) + " is not divisible by " +
                         std::to_string(unit));
  }
  std::vector<SequenceFeature> levels;
  SequenceFeature x = embed(image);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) x = merges[s - 1](x);
    for (std::size_t b = 0; b + 1 < stages[s].size(); b += 2) {
      x = swin_pair(x, stages[s][b], stages[s][b + 1]);
    }
    levels.push_back(SequenceFeature::make(out_norms[s](x.tokens), x.h, x.w));
  }
  const SequenceFeature& s3 = levels[2];
  SequenceFeature up = crop(fuse_up(levels[3]), s3.h, s3.w);
  SequenceFeature f3 = SequenceFeature::make(add(s3.tokens, fuse_proj(up.tokens)), s3.h, s3.w);
  return MultilevelFeatures{levels[0], levels[1], std::move(f3), levels[3]};
}

void Encoder::collect(const std::string& prefix, ParameterList& out) const {
  embed.collect(prefix + ".patch_embed", out);
  for (std::size_t s = 0; s < merges.size(); ++s) {
    merges[s].collect(prefix + ".merge" + std::to_string(s + 2), out);
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t b = 0; b < stages[s].size(); ++b) {
      stages[s][b].collect(prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b), out);
    }
    out_norms[s].collect(prefix + ".norm" + std::to_string(s + 1), out);
  }
  fuse_up.collect(prefix + ".fuse_up", out);
  fuse_proj.collect(prefix + ".fuse_proj", out);
}

}  // namespace m3net
