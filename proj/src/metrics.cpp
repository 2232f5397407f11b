#include "m3net/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>

#include "m3net/image_io.hpp"

namespace m3net {

namespace {

constexpr Real kEps = DBL_EPSILON;

void check_pair(const SaliencyMap& P, const GroundTruth& G) {
  P.validate();
  if (P.h != G.h || P.w != G.w || G.mask.size() != G.h * G.w) {
    throw DimensionError("metrics: prediction " + std::to_string(P.h) + "x" + std::to_string(P.w) +
                         " vs ground truth " + std::to_string(G.h) + "x" + std::to_string(G.w));
  }
}

// Largest k in [0, 255] with v >= k/255.
int threshold_level(Real v) {
  int k = static_cast<int>(std::floor(v * 255.0));
  k = std::clamp(k, 0, 255);
  while (k < 255 && v >= static_cast<Real>(k + 1) / 255.0) ++k;
  while (k > 0 && !(v >= static_cast<Real>(k) / 255.0)) --k;
  return k;
}

// Per threshold k: number of foreground / background pixels with P >= k/255.
struct ThresholdCounts {
  std::array<std::size_t, kThresholds> fg{}, bg{};
};

ThresholdCounts count_above(const std::vector<Real>& values, const GroundTruth& G) {
  std::array<std::size_t, kThresholds> hf{}, hb{};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int k = threshold_level(values[i]);
    (G.mask[i] ? hf : hb)[static_cast<std::size_t>(k)]++;
  }
  ThresholdCounts c;
  std::size_t sf = 0, sb = 0;
  for (std::size_t k = kThresholds; k-- > 0;) {
    sf += hf[k];
    sb += hb[k];
    c.fg[k] = sf;
    c.bg[k] = sb;
  }
  return c;
}

Real mean_of(const std::vector<Real>& v) {
  Real s = 0;
  for (Real x : v) s += x;
  return s / static_cast<Real>(v.size());
}

}  // namespace

SaliencyMap SaliencyMap::from_bytes(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != h * w) throw DimensionError("saliency map: byte count mismatch");
  SaliencyMap m{h, w, std::vector<Real>(h * w)};
  for (std::size_t i = 0; i < bytes.size(); ++i) m.values[i] = bytes[i] / 255.0;
  return m;
}

void SaliencyMap::validate() const {
  if (h == 0 || w == 0 || values.size() != h * w) throw DimensionError("saliency map: bad extents");
  for (Real v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("saliency map: value outside [0,1]");
  }
}

GroundTruth GroundTruth::from_bytes(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != h * w) throw DimensionError("ground truth: byte count mismatch");
  GroundTruth g{h, w, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < bytes.size(); ++i) g.mask[i] = bytes[i] >= 128 ? 1 : 0;
  return g;
}

std::size_t GroundTruth::foreground() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

Real mae(const SaliencyMap& P, const GroundTruth& G) {
  check_pair(P, G);
  Real s = 0;
  for (std::size_t i = 0; i < P.values.size(); ++i) s += std::abs(P.values[i] - G.mask[i]);
  return s / static_cast<Real>(P.values.size());
}

Real e_measure_mean(const SaliencyMap& P, const GroundTruth& G) {
  check_pair(P, G);
  const ThresholdCounts c = count_above(P.values, G);
  const std::size_t n = P.values.size(), nfg = G.foreground(), nbg = n - nfg;
  const Real N = static_cast<Real>(n);
  Real total = 0;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const std::size_t tp = c.fg[k], fp = c.bg[k], fn = nfg - tp, tn = nbg - fp;
    Real sum;
    if (nfg == 0) {
      sum = static_cast<Real>(n - fp);  // enhanced = 1 − B
    } else if (nbg == 0) {
      sum = static_cast<Real>(tp);  // enhanced = B
    } else {
      const Real mb = static_cast<Real>(tp + fp) / N, mg = static_cast<Real>(nfg) / N;
      auto enhanced = [&](Real b, Real g) {
        const Real ab = b - mb, ag = g - mg;
        const Real xi = 2.0 * ag * ab / (ag * ag + ab * ab + kEps);
        return (xi + 1.0) * (xi + 1.0) / 4.0;
      };
      sum = static_cast<Real>(tp) * enhanced(1, 1) + static_cast<Real>(fp) * enhanced(1, 0) +
            static_cast<Real>(fn) * enhanced(0, 1) + static_cast<Real>(tn) * enhanced(0, 0);
    }
    total += sum / N;
  }
  return total / static_cast<Real>(kThresholds);
}

namespace {

Real object_score(const std::vector<Real>& x) {
  if (x.empty()) return 0.0;
  const Real mu = mean_of(x);
  Real var = 0;
  for (Real v : x) var += (v - mu) * (v - mu);
  const Real sigma = x.size() > 1 ? std::sqrt(var / static_cast<Real>(x.size() - 1)) : 0.0;
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kEps);
}

Real s_object(const SaliencyMap& P, const GroundTruth& G) {
  std::vector<Real> fg, bg;
  for (std::size_t i = 0; i < P.values.size(); ++i) {
    if (G.mask[i]) fg.push_back(P.values[i]);
    else bg.push_back(1.0 - P.values[i]);
  }
  const Real u = static_cast<Real>(fg.size()) / static_cast<Real>(P.values.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// Structural similarity of one rectangular block.
Real block_ssim(const SaliencyMap& P, const GroundTruth& G, std::size_t y0, std::size_t y1,
                std::size_t x0, std::size_t x1) {
  const std::size_t n = (y1 - y0) * (x1 - x0);
  if (n == 0) return 0.0;
  const Real N = static_cast<Real>(n);
  Real mx = 0, my = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      mx += P.values[y * P.w + x];
      my += G.mask[y * P.w + x];
    }
  mx /= N;
  my /= N;
  Real sxx = 0, syy = 0, sxy = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      const Real dx = P.values[y * P.w + x] - mx, dy = G.mask[y * P.w + x] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  sxx /= N - 1 + kEps;
  syy /= N - 1 + kEps;
  sxy /= N - 1 + kEps;
  const Real alpha = 4 * mx * my * sxy;
  const Real beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0) return alpha / (beta + kEps);
  if (beta == 0) return 1.0;
  return 0.0;
}

Real s_region(const SaliencyMap& P, const GroundTruth& G) {
  const std::size_t H = G.h, W = G.w;
  std::size_t X, Y;
  const std::size_t total = G.foreground();
  if (total == 0) {
    X = static_cast<std::size_t>(std::round(W / 2.0));
    Y = static_cast<std::size_t>(std::round(H / 2.0));
  } else {
    Real sx = 0, sy = 0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        if (G.mask[y * W + x]) {
          sx += static_cast<Real>(x + 1);
          sy += static_cast<Real>(y + 1);
        }
    X = static_cast<std::size_t>(std::round(sx / static_cast<Real>(total)));
    Y = static_cast<std::size_t>(std::round(sy / static_cast<Real>(total)));
  }
  const Real area = static_cast<Real>(H * W);
  const Real w1 = static_cast<Real>(X * Y) / area;
  const Real w2 = static_cast<Real>((W - X) * Y) / area;
  const Real w3 = static_cast<Real>(X * (H - Y)) / area;
  const Real w4 = static_cast<Real>((W - X) * (H - Y)) / area;
  return w1 * block_ssim(P, G, 0, Y, 0, X) + w2 * block_ssim(P, G, 0, Y, X, W) +
         w3 * block_ssim(P, G, Y, H, 0, X) + w4 * block_ssim(P, G, Y, H, X, W);
}

}  // namespace

Real s_measure(const SaliencyMap& P, const GroundTruth& G) {
  check_pair(P, G);
  const Real N = static_cast<Real>(P.values.size());
  const Real y = static_cast<Real>(G.foreground()) / N;
  if (y == 0) return 1.0 - mean_of(P.values);
  if (y == 1) return mean_of(P.values);
  const Real q = 0.5 * s_object(P, G) + 0.5 * s_region(P, G);
  return std::max(q, 0.0);
}

DistanceTransform distance_to_foreground(const GroundTruth& G) {
  const std::size_t H = G.h, W = G.w;
  const Real inf = std::numeric_limits<Real>::infinity();
  DistanceTransform out{std::vector<Real>(H * W, inf), std::vector<std::size_t>(H * W, 0)};
  if (G.foreground() == 0) return out;

  // One-dimensional squared-distance transform (lower envelope of parabolas).
  auto edt1d = [inf](const std::vector<Real>& f, std::vector<Real>& d) {
    const std::size_t n = f.size();
    std::vector<std::size_t> v(n);
    std::vector<Real> z(n + 1);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
      if (f[q] < inf) { first = q; break; }
    if (first == n) { std::fill(d.begin(), d.end(), inf); return; }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::size_t q = first + 1; q < n; ++q) {
      if (f[q] == inf) continue;
      const Real fq = f[q] + static_cast<Real>(q * q);
      Real s;
      while (true) {
        const std::size_t p = v[k];
        s = (fq - (f[p] + static_cast<Real>(p * p))) / (2.0 * static_cast<Real>(q) - 2.0 * static_cast<Real>(p));
        if (s <= z[k] && k > 0) { --k; continue; }
        break;
      }
      if (s <= z[k]) {  // k == 0: the new parabola dominates everywhere
        v[0] = q;
        z[0] = -inf;
        z[1] = inf;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
      while (z[k + 1] < static_cast<Real>(q)) ++k;
      const Real dq = static_cast<Real>(q) - static_cast<Real>(v[k]);
      d[q] = dq * dq + f[v[k]];
    }
  };

  std::vector<Real> col_d(H * W);
  {
    std::vector<Real> f(H), d(H);
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t y = 0; y < H; ++y) f[y] = G.mask[y * W + x] ? 0.0 : inf;
      edt1d(f, d);
      for (std::size_t y = 0; y < H; ++y) col_d[y * W + x] = d[y];
    }
  }
  {
    std::vector<Real> f(W), d(W);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) f[x] = col_d[y * W + x];
      edt1d(f, d);
      for (std::size_t x = 0; x < W; ++x) out.dist[y * W + x] = d[x];
    }
  }

  // Nearest foreground pixel: scan the circle of the exact radius in
  // row-major order so ties resolve to the smallest index.
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      const auto d2 = static_cast<long long>(std::llround(out.dist[i]));
      out.dist[i] = static_cast<Real>(d2);
      const auto r = static_cast<long long>(std::floor(std::sqrt(static_cast<Real>(d2))));
      bool found = false;
      for (long long dy = -r; dy <= r && !found; ++dy) {
        const long long yy = static_cast<long long>(y) + dy;
        if (yy < 0 || yy >= static_cast<long long>(H)) continue;
        const long long rem = d2 - dy * dy;
        auto dx = static_cast<long long>(std::llround(std::sqrt(static_cast<Real>(rem))));
        while (dx * dx > rem) --dx;
        while ((dx + 1) * (dx + 1) <= rem) ++dx;
        if (dx * dx != rem) continue;
        for (long long xx : {static_cast<long long>(x) - dx, static_cast<long long>(x) + dx}) {
          if (xx < 0 || xx >= static_cast<long long>(W)) continue;
          const std::size_t j = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
          if (G.mask[j]) {
            out.nearest[i] = j;
            found = true;
            break;
          }
        }
      }
      if (!found) throw NumericalError("distance transform: no foreground pixel at the computed radius");
    }
  return out;
}

Real weighted_f_measure(const SaliencyMap& P, const GroundTruth& G) {
  check_pair(P, G);
  const std::size_t H = G.h, W = G.w, n = H * W;
  const std::size_t nfg = G.foreground();
  if (nfg == 0) {
    return std::all_of(P.values.begin(), P.values.end(), [](Real v) { return v == 0.0; }) ? 1.0 : 0.0;
  }
  std::vector<Real> E(n);
  for (std::size_t i = 0; i < n; ++i) E[i] = std::abs(P.values[i] - G.mask[i]);
  const DistanceTransform dt = distance_to_foreground(G);

  std::vector<Real> Et = E;
  for (std::size_t i = 0; i < n; ++i)
    if (!G.mask[i]) Et[i] = E[dt.nearest[i]];

  // 7×7 Gaussian, σ = 5, normalized; correlation with replicated borders.
  constexpr int kHalf = 3;
  constexpr Real kSigma = 5.0;
  Real kernel[2 * kHalf + 1][2 * kHalf + 1];
  Real ksum = 0;
  for (int a = -kHalf; a <= kHalf; ++a)
    for (int b = -kHalf; b <= kHalf; ++b) {
      kernel[a + kHalf][b + kHalf] = std::exp(-static_cast<Real>(a * a + b * b) / (2 * kSigma * kSigma));
      ksum += kernel[a + kHalf][b + kHalf];
    }
  for (auto& row : kernel)
    for (Real& v : row) v /= ksum;

  std::vector<Real> Ew(n);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      Real ea = 0;
      for (int a = -kHalf; a <= kHalf; ++a)
        for (int b = -kHalf; b <= kHalf; ++b) {
          const long long yy = std::clamp<long long>(static_cast<long long>(y) + a, 0, static_cast<long long>(H) - 1);
          const long long xx = std::clamp<long long>(static_cast<long long>(x) + b, 0, static_cast<long long>(W) - 1);
          ea += kernel[a + kHalf][b + kHalf] * Et[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)];
        }
      Real m = E[i];
      if (G.mask[i] && ea < E[i]) m = ea;
      const Real B = G.mask[i] ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * std::sqrt(dt.dist[i]));
      Ew[i] = m * B;
    }

  Real ew_fg = 0, ew_bg = 0;
  for (std::size_t i = 0; i < n; ++i) (G.mask[i] ? ew_fg : ew_bg) += Ew[i];
  const Real tpw = static_cast<Real>(nfg) - ew_fg;
  const Real fpw = ew_bg;
  const Real R = 1.0 - ew_fg / static_cast<Real>(nfg);
  const Real Pw = tpw / (kEps + tpw + fpw);
  return (1 + kWeightedFBeta2) * R * Pw / (kEps + R + kWeightedFBeta2 * Pw);
}

Curves pr_and_f_curves(const SaliencyMap& P, const GroundTruth& G) {
  check_pair(P, G);
  std::vector<Real> v = P.values;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const Real mn = *lo, mx = *hi;
  if (mx > mn) {
    for (Real& x : v) x = (x - mn) / (mx - mn);
  }
  const ThresholdCounts c = count_above(v, G);
  const std::size_t nfg = G.foreground();
  Curves out;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const std::size_t tp = c.fg[k], fp = c.bg[k];
    const Real prec = tp + fp == 0 ? 1.0 : static_cast<Real>(tp) / static_cast<Real>(tp + fp);
    const Real rec = nfg == 0 ? 0.0 : static_cast<Real>(tp) / static_cast<Real>(nfg);
    const Real den = kCurveFBeta2 * prec + rec;
    out.precision[k] = prec;
    out.recall[k] = rec;
    out.f[k] = den == 0 ? 0.0 : (1 + kCurveFBeta2) * prec * rec / den;
  }
  return out;
}

MetricReport evaluate(const SaliencyMap& P, const GroundTruth& G) {
  MetricReport r;
  r.mae = mae(P, G);
  r.e_mean = e_measure_mean(P, G);
  r.s_measure = s_measure(P, G);
  r.wf = weighted_f_measure(P, G);
  r.curves = pr_and_f_curves(P, G);
  return r;
}

namespace {

std::map<std::string, std::filesystem::path> pgm_stems(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out[e.path().stem().string()] = e.path();
  }
  return out;
}

}  // namespace

DirReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  const auto preds = pgm_stems(pred_dir);
  const auto gts = pgm_stems(gt_dir);
  DirReport rep;
  for (const auto& [stem, path] : gts) {
    if (!preds.count(stem)) rep.missing.push_back(stem);
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) rep.missing.push_back(stem);
  }
  std::sort(rep.missing.begin(), rep.missing.end());
  for (const auto& [stem, gpath] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) continue;
    const Raster gr = load_pgm(gpath);
    const Raster pr = load_pgm(it->second);
    GroundTruth G = GroundTruth::from_bytes(gr.height, gr.width, gr.pixels);
    SaliencyMap P = SaliencyMap::from_bytes(pr.height, pr.width, pr.pixels);
    if (P.h != G.h || P.w != G.w) {
      P.values = resize_bilinear(P.values, 1, P.h, P.w, G.h, G.w);
      for (Real& v : P.values) v = std::clamp(v, 0.0, 1.0);
      P.h = G.h;
      P.w = G.w;
    }
    rep.images.push_back({stem, evaluate(P, G)});
  }
  if (rep.images.empty()) {
    throw DataError("no prediction/ground-truth pairs share a name between " + pred_dir.string() +
                    " and " + gt_dir.string());
  }
  const Real n = static_cast<Real>(rep.images.size());
  MetricReport& m = rep.mean;
  for (const ImageScore& s : rep.images) {
    m.mae += s.report.mae;
    m.e_mean += s.report.e_mean;
    m.s_measure += s.report.s_measure;
    m.wf += s.report.wf;
    for (std::size_t k = 0; k < kThresholds; ++k) {
      m.curves.precision[k] += s.report.curves.precision[k];
      m.curves.recall[k] += s.report.curves.recall[k];
      m.curves.f[k] += s.report.curves.f[k];
    }
  }
  m.mae /= n;
  m.e_mean /= n;
  m.s_measure /= n;
  m.wf /= n;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    m.curves.precision[k] /= n;
    m.curves.recall[k] /= n;
    m.curves.f[k] /= n;
  }
  return rep;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_report_csv(const DirReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_csv(path);
  out << "name,mae,e_mean,s_measure,wf\n";
  auto row = [&](const std::string& name, const MetricReport& r) {
    out << name << ',' << r.mae << ',' << r.e_mean << ',' << r.s_measure << ',' << r.wf << '\n';
  };
  for (const ImageScore& s : report.images) row(s.name, s.report);
  row("__mean__", report.mean);
}

void write_curves_csv(const Curves& curves, const std::filesystem::path& path) {
  std::ofstream out = open_csv(path);
  out << "threshold,precision,recall,f\n";
  for (std::size_t k = 0; k < kThresholds; ++k) {
    out << static_cast<Real>(k) / 255.0 << ',' << curves.precision[k] << ',' << curves.recall[k] << ','
        << curves.f[k] << '\n';
  }
}

}  // namespace m3net
