#include <cmath>

#include "doctest.h"
#include "m3net/decoder.hpp"
#include "m3net/gradcheck.hpp"
#include "test_util.hpp"

using namespace m3net;
using test::random_map;

namespace {

// Direct single-head-per-slice attention for one query over an explicit key set,
// using the block's own projections. Independent of the window machinery.
std::vector<Real> brute_attend(const SelfAttention& a, const Tensor& x, std::size_t query,
                               const std::vector<std::size_t>& keys) {
  const std::size_t d = a.dim(), heads = a.heads(), hd = d / heads, c = x.dim(1);
  auto project = [&](std::size_t tok, std::size_t off) {
    std::vector<Real> out(d);
    for (std::size_t j = 0; j < d; ++j) {
      Real s = a.qkv.bias.at(off + j);
      for (std::size_t i = 0; i < c; ++i) s += x.at(tok * c + i) * a.qkv.weight.at(i * 3 * d + off + j);
      out[j] = s;
    }
    return out;
  };
  const auto q = project(query, 0);
  std::vector<Real> ctx(d, 0);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<Real> sc;
    for (std::size_t key : keys) {
      const auto k = project(key, d);
      Real s = 0;
      for (std::size_t j = h * hd; j < (h + 1) * hd; ++j) s += q[j] * k[j];
      sc.push_back(s / std::sqrt(static_cast<Real>(hd)));
    }
    const Real mx = *std::max_element(sc.begin(), sc.end());
    Real z = 0;
    for (Real& s : sc) z += (s = std::exp(s - mx));
    for (std::size_t n = 0; n < keys.size(); ++n) {
      const auto v = project(keys[n], 2 * d);
      for (std::size_t j = h * hd; j < (h + 1) * hd; ++j) ctx[j] += sc[n] / z * v[j];
    }
  }
  std::vector<Real> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    Real s = a.proj.bias.at(j);
    for (std::size_t i = 0; i < d; ++i) s += ctx[i] * a.proj.weight.at(i * d + j);
    out[j] = s;
  }
  return out;
}

// Swin's shifted-window admissibility built from scratch: pad, roll by −shift,
// tile, and label the three slices of each axis on the rolled grid.
std::vector<std::vector<std::size_t>> shifted_key_sets(std::size_t h, std::size_t w, Window win) {
  const std::size_t ph = (h + win.h - 1) / win.h * win.h, pw = (w + win.w - 1) / win.w * win.w;
  const std::size_t sh = win.h / 2, sw = win.w / 2;
  auto slice = [](std::size_t pos, std::size_t p, std::size_t wsz, std::size_t s) {
    return pos < p - wsz ? 0 : (pos < p - s ? 1 : 2);
  };
  std::vector<std::vector<std::size_t>> sets(h * w);
  // Rolled coordinate (y, x) holds original ((y + sh) mod ph, (x + sw) mod pw).
  for (std::size_t y = 0; y < ph; ++y)
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t oy = (y + sh) % ph, ox = (x + sw) % pw;
      if (oy >= h || ox >= w) continue;
      for (std::size_t y2 = y / win.h * win.h; y2 < (y / win.h + 1) * win.h; ++y2)
        for (std::size_t x2 = x / win.w * win.w; x2 < (x / win.w + 1) * win.w; ++x2) {
          const std::size_t oy2 = (y2 + sh) % ph, ox2 = (x2 + sw) % pw;
          if (oy2 >= h || ox2 >= w) continue;
          if (slice(y, ph, win.h, sh) != slice(y2, ph, win.h, sh)) continue;
          if (slice(x, pw, win.w, sw) != slice(x2, pw, win.w, sw)) continue;
          sets[oy * w + ox].push_back(oy2 * w + ox2);
        }
    }
  return sets;
}

SelfAttention make_attn(std::size_t dim, std::size_t heads, Window win, Rng& rng, bool rel = false) {
  AttentionConfig cfg{dim, heads, win};
  SelfAttention a(cfg, rng, rel);
  // Non-trivial biases so the oracle exercises them.
  Tensor qb = a.qkv.bias, pb = a.proj.bias;
  for (Real& v : qb.mutable_data()) v = std::uniform_real_distribution<Real>(-0.5, 0.5)(rng);
  for (Real& v : pb.mutable_data()) v = std::uniform_real_distribution<Real>(-0.5, 0.5)(rng);
  return a;
}

}  // namespace

TEST_CASE("window layout counts") {
  const auto small = make_window_layout(5, 5, {7, 7}, false);
  CHECK(small.n_windows == 1);
  CHECK(small.padded_slots() == 24);
  const auto big = make_window_layout(14, 14, {7, 7}, false);
  CHECK(big.n_windows == 4);
  CHECK(big.padded_slots() == 0);
  const auto rect = make_window_layout(3, 5, {2, 2}, true);
  CHECK(rect.n_windows == 6);
  CHECK(rect.padded_slots() == 24 - 15);
}

TEST_CASE("partition then merge is the identity") {
  Rng rng(5);
  for (bool shifted : {false, true}) {
    auto x = random_map(5, 9, 3, rng);
    auto b = window_partition(x, {3, 4}, shifted);
    auto y = window_merge(b.windows, b.layout);
    CHECK(test::bit_equal(x.tokens.data(), y.tokens.data()));
  }
}

TEST_CASE("W-MSA with a full-map window equals MSA") {
  Rng rng(6);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{7, 7}, {4, 6}, {1, 5}}) {
    auto a = make_attn(8, 2, {h, w}, rng);
    auto x = random_map(h, w, 8, rng);
    CHECK(test::max_abs_diff(window_msa(x, a).tokens.data(), msa(x, a).tokens.data()) < 1e-9);
  }
}

TEST_CASE("a zero-padding ring does not change window attention") {
  Rng rng(7);
  auto a = make_attn(8, 2, {7, 7}, rng, true);
  // 5×5 inside a 7×7 window: 24 padded slots, then a further full padded ring.
  auto x = random_map(5, 5, 8, rng);
  const auto base = a.windowed(x, {7, 7}, false).tokens;
  for (std::size_t ring : {1, 2, 7}) {
    const auto padded = a.windowed(x, {7, 7}, false, ring).tokens;
    CHECK(test::max_abs_diff(base.data(), padded.data()) < 1e-9);
  }
  auto plain = make_attn(8, 2, {7, 7}, rng);
  CHECK(test::max_abs_diff(plain.windowed(x, {7, 7}, false, 7).tokens.data(), msa(x, plain).tokens.data()) <
        1e-9);
}

TEST_CASE("shifted window attention matches a brute-force region mask") {
  Rng rng(8);
  for (auto [h, w, wh, ww] : {std::array<std::size_t, 4>{6, 6, 3, 3}, {5, 7, 2, 3}, {8, 8, 4, 4}}) {
    auto a = make_attn(6, 2, {wh, ww}, rng);
    auto x = random_map(h, w, 6, rng);
    const auto out = shifted_window_msa(x, a).tokens;
    const auto sets = shifted_key_sets(h, w, {wh, ww});
    Real err = 0;
    for (std::size_t t = 0; t < h * w; ++t) {
      const auto ref = brute_attend(a, x.tokens, t, sets[t]);
      for (std::size_t j = 0; j < 6; ++j) err = std::max(err, std::abs(ref[j] - out.at(t * 6 + j)));
    }
    CHECK(err < 1e-12);
  }
}

TEST_CASE("unshifted windows match a brute-force tiling") {
  Rng rng(9);
  auto a = make_attn(4, 1, {2, 3}, rng);
  auto x = random_map(5, 4, 4, rng);
  const auto out = window_msa(x, a).tokens;
  Real err = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    std::vector<std::size_t> keys;
    for (std::size_t u = 0; u < 20; ++u)
      if (t / 4 / 2 == u / 4 / 2 && t % 4 / 3 == u % 4 / 3) keys.push_back(u);
    const auto ref = brute_attend(a, x.tokens, t, keys);
    for (std::size_t j = 0; j < 4; ++j) err = std::max(err, std::abs(ref[j] - out.at(t * 4 + j)));
  }
  CHECK(err < 1e-12);
}

TEST_CASE("global attention is permutation equivariant") {
  Rng rng(10);
  auto a = make_attn(8, 4, {2, 2}, rng);
  auto x = random_map(3, 4, 8, rng);
  std::vector<std::int64_t> perm{5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6};
  auto px = SequenceFeature::make(gather_rows(x.tokens, perm, {12, 8}), 3, 4);
  auto y = msa(x, a).tokens, py = msa(px, a).tokens;
  CHECK(test::max_abs_diff(gather_rows(y, perm, {12, 8}).data(), py.data()) < 1e-12);
}

TEST_CASE("relative position bias only changes window attention through the table") {
  Rng rng(12);
  auto a = make_attn(4, 2, {3, 3}, rng, true);
  REQUIRE(a.rel_table.defined());
  CHECK(a.rel_table.shape() == Shape{25, 2});
  auto x = random_map(3, 3, 4, rng);
  auto before = window_msa(x, a).tokens;
  Tensor t = a.rel_table;
  for (Real& v : t.mutable_data()) v = 0;
  auto zeroed = window_msa(x, a).tokens;
  auto plain = msa(x, a).tokens;
  CHECK(test::max_abs_diff(zeroed.data(), plain.data()) < 1e-12);
  CHECK(test::max_abs_diff(before.data(), plain.data()) > 0);
}

TEST_CASE("cross attention keeps the low-level token count") {
  Rng rng(13);
  CrossAttention ca(6, 10, AttentionConfig{8, 2, std::nullopt}, 6, rng);
  auto low = random_map(8, 8, 6, rng), high = random_map(2, 3, 10, rng);
  auto out = cross_attention(low, high, ca);
  CHECK(out.shape() == Shape{64, 6});
}

TEST_CASE("cross attention with zero values returns the output bias") {
  Rng rng(14);
  CrossAttention ca(4, 4, AttentionConfig{4, 1, std::nullopt}, 4, rng);
  Tensor vw = ca.v.weight, vb = ca.v.bias, ob = ca.o.bias;
  for (Real& v : vw.mutable_data()) v = 0;
  for (Real& v : vb.mutable_data()) v = 0;
  for (Real& v : ob.mutable_data()) v = 0.25;
  auto out = cross_attention(random_map(3, 3, 4, rng), random_map(2, 2, 4, rng), ca);
  for (Real v : out.data()) CHECK(v == 0.25);
}

TEST_CASE("attention config validation") {
  CHECK_THROWS_AS((AttentionConfig{6, 4, std::nullopt}.validate()), ConfigError);
  CHECK_THROWS_AS((AttentionConfig{0, 1, std::nullopt}.validate()), ConfigError);
  CHECK(default_heads(384, 64) == 6);
  CHECK(default_heads(16, 32) == 1);
  CHECK(default_heads(96, 64) == 1);
}

TEST_CASE("window attention gradients") {
  Rng rng(15);
  auto a = make_attn(4, 2, {2, 3}, rng, true);
  Tensor rt = a.rel_table;
  for (Real& v : rt.mutable_data()) v = std::uniform_real_distribution<Real>(-0.3, 0.3)(rng);
  auto x = random_map(3, 5, 4, rng);
  auto w = test::random_tensor({15, 4}, rng);
  const Real err = grad_check([&] { return sum(mul(shifted_window_msa(x, a).tokens, w)); },
                              {x.tokens, a.qkv.weight, a.proj.weight, a.rel_table});
  CHECK(err < 1e-4);
}
