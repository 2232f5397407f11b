#include "m3net/dataio.hpp"

#include <algorithm>
#include <cmath>

namespace m3net {

Real uniform01(Rng& rng) { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw ContractError("uniform_index: empty range");
  return static_cast<std::size_t>(uniform01(rng) * static_cast<Real>(n));
}

Tensor normalize(const Tensor& image, const std::array<Real, 3>& mean, const std::array<Real, 3>& stdev) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("normalize: expected [3xHxW], got " + shape_str(image.shape()));
  }
  const std::size_t plane = image.dim(1) * image.dim(2);
  std::vector<Real> out(image.size());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (image.at(c * plane + i) - mean[c]) / stdev[c];
  return Tensor::from(image.shape(), std::move(out));
}

std::vector<Real> rotate90(const std::vector<Real>& v, std::size_t planes, std::size_t h, std::size_t w,
                           unsigned k) {
  k %= 4;
  if (k == 0) return v;
  std::vector<Real> cur = v;
  std::size_t ch = h, cw = w;
  for (unsigned t = 0; t < k; ++t) {
    // Quarter turn counter-clockwise: out[y][x] = in[x][cw − 1 − y], out is cw×ch.
    std::vector<Real> next(cur.size());
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < cw; ++y)
        for (std::size_t x = 0; x < ch; ++x) next[(p * cw + y) * ch + x] = cur[(p * ch + x) * cw + (cw - 1 - y)];
    cur = std::move(next);
    std::swap(ch, cw);
  }
  return cur;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  std::size_t H = s.mask.dim(0), W = s.mask.dim(1);
  std::vector<Real> img(s.image.data().begin(), s.image.data().end());
  std::vector<Real> msk(s.mask.data().begin(), s.mask.data().end());
  if (cfg.rotate) {
    const auto k = static_cast<unsigned>(uniform_index(rng, 4));
    img = rotate90(img, 3, H, W, k);
    msk = rotate90(msk, 1, H, W, k);
    if (k % 2 == 1) std::swap(H, W);
  }
  if (cfg.crop > 0 && cfg.crop < 1) {
    const std::size_t ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.crop * H)));
    const std::size_t cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.crop * W)));
    const std::size_t oy = uniform_index(rng, H - ch + 1), ox = uniform_index(rng, W - cw + 1);
    auto cut = [&](const std::vector<Real>& v, std::size_t planes) {
      std::vector<Real> out(planes * ch * cw);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < ch; ++y)
          for (std::size_t x = 0; x < cw; ++x) out[(p * ch + y) * cw + x] = v[(p * H + oy + y) * W + ox + x];
      return out;
    };
    img = resize_bilinear(cut(img, 3), 3, ch, cw, H, W);
    msk = resize_nearest(cut(msk, 1), 1, ch, cw, H, W);
  }
  Tensor image = Tensor::from({3, H, W}, std::move(img));
  if (cfg.normalize) image = normalize(image);
  return Sample{s.id, std::move(image), Tensor::from({H, W}, std::move(msk))};
}

Sample sample_from_rasters(std::string id, const Raster& image, const Raster& mask) {
  if (image.channels != 3 || mask.channels != 1) throw DataError(id + ": expected an RGB image and a gray mask");
  if (image.width != mask.width || image.height != mask.height) {
    throw DataError(id + ": image and mask sizes differ");
  }
  const std::size_t H = image.height, W = image.width, plane = H * W;
  std::vector<Real> img(3 * plane), msk(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = image.pixels[i * 3 + c] / 255.0;
    msk[i] = mask.pixels[i] >= 128 ? 1.0 : 0.0;
  }
  return Sample{std::move(id), Tensor::from({3, H, W}, std::move(img)), Tensor::from({H, W}, std::move(msk))};
}

Raster image_raster(const Tensor& image) {
  const std::size_t H = image.dim(1), W = image.dim(2), plane = H * W;
  Raster r{W, H, 3, std::vector<std::uint8_t>(3 * plane)};
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      r.pixels[i * 3 + c] =
          static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(image.at(c * plane + i), 0.0, 1.0)));
  return r;
}

Raster mask_raster(const Tensor& mask) {
  std::vector<Real> v(mask.data().begin(), mask.data().end());
  return quantize_gray(v, mask.dim(0), mask.dim(1));
}

namespace {

std::vector<std::string> stems(const std::filesystem::path& dir, const std::string& ext) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  std::vector<Sample> out;
  for (const std::string& id : stems(root / "images", ".ppm")) {
    const auto mpath = root / "masks" / (id + ".pgm");
    if (!std::filesystem::exists(mpath)) throw DataError("missing mask " + mpath.string());
    out.push_back(sample_from_rasters(id, load_ppm(root / "images" / (id + ".ppm")), load_pgm(mpath)));
  }
  return out;
}

std::vector<Sample> load_images(const std::filesystem::path& dir) {
  const std::filesystem::path d = std::filesystem::is_directory(dir / "images") ? dir / "images" : dir;
  std::vector<Sample> out;
  for (const std::string& id : stems(d, ".ppm")) {
    const Raster r = load_ppm(d / (id + ".ppm"));
    Raster blank{r.width, r.height, 1, std::vector<std::uint8_t>(r.width * r.height, 0)};
    out.push_back(sample_from_rasters(id, r, blank));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  for (const Sample& s : samples) {
    save_ppm(image_raster(s.image), root / "images" / (s.id + ".ppm"));
    save_pgm(mask_raster(s.mask), root / "masks" / (s.id + ".pgm"));
  }
}

namespace {

// HSV with s, v in [0,1] to RGB.
std::array<Real, 3> hsv(Real h, Real s, Real v) {
  const Real hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const Real f = hh - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::uint8_t to_byte(Real v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

}  // namespace

Sample synthetic_sample(std::size_t index, const SyntheticConfig& cfg) {
  const std::size_t H = cfg.height, W = cfg.width, plane = H * W;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  Rng rng(seq);
  for (;;) {
    // Background: low-saturation base tone, smooth waves plus fine noise.
    const auto base = hsv(uniform01(rng), 0.1 + 0.1 * uniform01(rng), 0.35 + 0.3 * uniform01(rng));
    const Real fy = 1 + 3 * uniform01(rng), fx = 1 + 3 * uniform01(rng), ph = 6.283185307179586 * uniform01(rng);
    Raster image{W, H, 3, std::vector<std::uint8_t>(3 * plane)};
    Raster mask{W, H, 1, std::vector<std::uint8_t>(plane, 0)};
    std::vector<Real> px(3 * plane);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const Real wave = 0.06 * std::sin(6.283185307179586 * (fy * y / H + fx * x / W) + ph);
        for (std::size_t c = 0; c < 3; ++c) px[(y * W + x) * 3 + c] = base[c] + wave + 0.08 * (uniform01(rng) - 0.5);
      }
    const std::size_t shapes = 1 + uniform_index(rng, 3);
    const Real hue0 = uniform01(rng);
    for (std::size_t s = 0; s < shapes; ++s) {
      const bool ellipse = uniform01(rng) < 0.5;
      const Real cy = (0.15 + 0.7 * uniform01(rng)) * H, cx = (0.15 + 0.7 * uniform01(rng)) * W;
      const Real ry = (0.1 + 0.2 * uniform01(rng)) * H, rx = (0.1 + 0.2 * uniform01(rng)) * W;
      const auto colour = hsv(hue0 + static_cast<Real>(s) / 3.0, 0.85 + 0.15 * uniform01(rng), 0.8 + 0.2 * uniform01(rng));
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const Real dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
          const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
          if (!inside) continue;
          mask.pixels[y * W + x] = 255;
          for (std::size_t c = 0; c < 3; ++c) px[(y * W + x) * 3 + c] = colour[c] + 0.04 * (uniform01(rng) - 0.5);
        }
    }
    std::size_t fg = 0;
    for (std::uint8_t m : mask.pixels) fg += m ? 1 : 0;
    const Real frac = static_cast<Real>(fg) / static_cast<Real>(plane);
    if (frac <= cfg.min_foreground || frac >= cfg.max_foreground) continue;
    for (std::size_t i = 0; i < px.size(); ++i) image.pixels[i] = to_byte(px[i]);
    char id[32];
    std::snprintf(id, sizeof id, "syn_%06zu", index);
    return sample_from_rasters(id, image, mask);
  }
}

std::vector<Sample> gen_synthetic(std::size_t n, std::size_t H, std::size_t W, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.height = H;
  cfg.width = W;
  cfg.seed = seed;
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_sample(i, cfg));
  return out;
}

}  // namespace m3net
