#include "doctest.h"
#include "m3net/gradcheck.hpp"
#include "m3net/upsample.hpp"
#include "test_util.hpp"

using namespace m3net;
using test::random_map;
using test::random_tensor;

namespace {

// Coverage count of output pixel (y, x) under fold(k, s, p) on an h×w input,
// counted directly from patch extents.
std::vector<Real> overlap_counts(std::size_t h, std::size_t w, const FoldGeometry& g) {
  const long H = static_cast<long>(g.s * h), W = static_cast<long>(g.s * w);
  std::vector<Real> c(static_cast<std::size_t>(H * W), 0);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (long i = 0; i < static_cast<long>(h); ++i)
        for (long j = 0; j < static_cast<long>(w); ++j) {
          const long ty = i * static_cast<long>(g.s) - static_cast<long>(g.p);
          const long tx = j * static_cast<long>(g.s) - static_cast<long>(g.p);
          if (y >= ty && y < ty + static_cast<long>(g.k) && x >= tx && x < tx + static_cast<long>(g.k))
            c[static_cast<std::size_t>(y * W + x)] += 1;
        }
  return c;
}

}  // namespace

TEST_CASE("fold law holds for the decoder geometries at every stage grid") {
  const FoldGeometry g1{3, 2, 1}, g2{3, 2, 1}, g3{7, 4, 2};
  for (std::size_t H : {64, 224, 384}) {
    CHECK(g1.satisfied(H / 16, H / 16));
    CHECK(g2.satisfied(H / 8, H / 8));
    CHECK(g3.satisfied(H / 4, H / 4));
  }
  CHECK_FALSE((FoldGeometry{3, 2, 0}.satisfied(4, 4)));
  CHECK_FALSE((FoldGeometry{7, 4, 0}.satisfied(16, 16)));
  CHECK_THROWS_AS((FoldGeometry{3, 2, 0}.check(4, 4)), ConfigError);
  // Law: floor((s·h + 2p − k)/s) + 1 == h  ⇔  s − 1 ≥ k − 2p − 1 ≥ 0 ... checked numerically.
  for (std::size_t k = 1; k <= 8; ++k)
    for (std::size_t s = 1; s <= k; ++s)
      for (std::size_t p = 0; p <= 4; ++p)
        for (std::size_t h = 1; h <= 6; ++h) {
          const long num = static_cast<long>(s * h + 2 * p) - static_cast<long>(k);
          const bool expect = num >= 0 && num / static_cast<long>(s) + 1 == static_cast<long>(h);
          CHECK((FoldGeometry{k, s, p}.satisfied(h, h)) == expect);
        }
}

TEST_CASE("fold with unit patches reproduces the overlap count") {
  for (auto g : {FoldGeometry{3, 2, 1}, FoldGeometry{7, 4, 2}, FoldGeometry{5, 3, 1}}) {
    const std::size_t h = 3, w = 4;
    Tensor ones = make_tensor({h * w, g.k * g.k}, std::vector<Real>(h * w * g.k * g.k, 1.0), "ones");
    auto out = fold(ones, h, w, g);
    CHECK(out.h == g.s * h);
    CHECK(out.w == g.s * w);
    CHECK(test::bit_equal(out.tokens.data(), overlap_counts(h, w, g)));
  }
}

TEST_CASE("fold places a single patch at its offset") {
  // 1×1 input, k=3, s=2, p=1: the patch centre lands on (0,0); only the
  // bottom-right 2×2 of the patch is inside the 2×2 output.
  std::vector<Real> patch{1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto out = fold(make_tensor({1, 9}, patch, "p"), 1, 1, {3, 2, 1});
  CHECK(std::vector<Real>(out.tokens.data().begin(), out.tokens.data().end()) ==
        std::vector<Real>{5, 6, 8, 9});
}

TEST_CASE("normalized fold averages overlaps") {
  Tensor ones = make_tensor({4, 2 * 9}, std::vector<Real>(72, 3.0), "ones");
  auto out = fold(ones, 2, 2, {3, 2, 1}, true);
  for (Real v : out.tokens.data()) CHECK(v == 3.0);
}

TEST_CASE("fold with k=s, p=0 is pixel shuffle bit for bit") {
  Rng rng(3);
  for (std::size_t s : {2, 4}) {
    Tensor x = random_tensor({3 * 5, 2 * s * s}, rng);
    auto a = fold(x, 3, 5, {s, s, 0});
    auto b = pixel_shuffle(x, 3, 5, s);
    CHECK(a.h == b.h);
    CHECK(test::bit_equal(a.tokens.data(), b.tokens.data()));
  }
}

TEST_CASE("bilinear resize keeps constants and matches a 2x example") {
  auto c = SequenceFeature::make(make_tensor({4, 1}, {2, 2, 2, 2}, "c"), 2, 2);
  const auto up = bilinear_resize(c, 5, 3);
  for (Real v : up.tokens.data()) CHECK(v == doctest::Approx(2).epsilon(1e-15));
  auto x = SequenceFeature::make(make_tensor({2, 1}, {0, 4}, "x"), 1, 2);
  auto y = bilinear_resize(x, 1, 4).tokens;
  // Half-pixel centres: sample x' = (j + 0.5)/2 − 0.5 → −0.25, 0.25, 0.75, 1.25.
  CHECK(std::vector<Real>(y.data().begin(), y.data().end()) == std::vector<Real>{0, 1, 3, 4});
}

TEST_CASE("crop keeps the top-left block") {
  auto x = SequenceFeature::make(make_tensor({6, 1}, {1, 2, 3, 4, 5, 6}, "x"), 2, 3);
  auto y = crop(x, 1, 2);
  CHECK(std::vector<Real>(y.tokens.data().begin(), y.tokens.data().end()) == std::vector<Real>{1, 2});
  CHECK_THROWS(crop(x, 3, 1));
}

TEST_CASE("every upsampler doubles the grid and keeps the width") {
  Rng rng(4);
  for (auto m : {UpsampleMethod::fold_overlap, UpsampleMethod::fold, UpsampleMethod::bilinear,
                 UpsampleMethod::pixel_shuffle}) {
    Upsampler up(m, 6, {3, 2, 1}, rng);
    auto y = up(random_map(4, 3, 6, rng));
    CHECK(y.h == 8);
    CHECK(y.w == 6);
    CHECK(y.channels() == 6);
    CHECK(parse_upsample_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_upsample_method("nearest"), ConfigError);
}

TEST_CASE("fold_overlap gradient") {
  Rng rng(5);
  Upsampler up(UpsampleMethod::fold_overlap, 3, {3, 2, 1}, rng);
  auto x = random_map(3, 2, 3, rng);
  auto w = random_tensor({6 * 4, 3}, rng);
  CHECK(grad_check([&] { return sum(mul(up(x).tokens, w)); }, {x.tokens, up.expand.weight, up.expand.bias}) <
        1e-6);
}
