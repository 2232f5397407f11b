#include <cmath>

#include "doctest.h"
#include "m3net/gradcheck.hpp"
#include "m3net/losses.hpp"
#include "test_util.hpp"

using namespace m3net;

namespace {

Tensor T(Shape s, std::vector<Real> v) { return make_tensor(std::move(s), std::move(v), "test"); }

Tensor binary(std::size_t h, std::size_t w, Rng& rng, Real density = 0.4) {
  std::vector<Real> v(h * w);
  for (Real& x : v) x = std::uniform_real_distribution<Real>(0, 1)(rng) < density;
  v[0] = 1;
  return T({h, w}, v);
}

Tensor soft(std::size_t h, std::size_t w, Rng& rng) {
  return test::random_tensor({h, w}, rng, 0.02, 0.98);
}

}  // namespace

TEST_CASE("BCE and IoU vanish at P == G") {
  Rng rng(1);
  Tensor G = binary(32, 32, rng);
  CHECK(bce(G, G).item() == 0);
  CHECK(bce(G, G, BceReduction::sum).item() == 0);
  const Real iou = iou_loss(G, G).item();
  CHECK(iou == 0);
  CHECK(iou <= 1e-3);
}

TEST_CASE("BCE of a constant 0.5 prediction is ln 2") {
  Rng rng(2);
  Tensor G = binary(5, 7, rng);
  Tensor P = T({5, 7}, std::vector<Real>(35, 0.5));
  CHECK(bce(P, G).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce(P, G, BceReduction::sum).item() == doctest::Approx(35 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("IoU hand value on the 2x2 case") {
  Tensor G = T({2, 2}, {1, 0, 1, 0}), P = T({2, 2}, {1, 1, 1, 1});
  CHECK(iou_loss(P, G).item() == 1.0 - 3.0 / 5.0);
  CHECK(iou_loss(P, G).item() == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(iou_loss(T({2, 2}, {0, 0, 0, 0}), T({2, 2}, {0, 0, 0, 0})).item() == 0);
}

TEST_CASE("random soft pairs against a per-pixel oracle") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor P = soft(3, 3, rng), G = binary(3, 3, rng);
    long double b = 0, inter = 0, uni = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      const long double p = P.at(i), g = G.at(i);
      b -= g * std::log(p) + (1 - g) * std::log(1 - p);
      inter += p * g;
      uni += p + g - p * g;
    }
    CHECK(bce(P, G).item() == doctest::Approx(static_cast<double>(b / 9)).epsilon(1e-14));
    CHECK(iou_loss(P, G).item() == doctest::Approx(static_cast<double>(1 - (inter + 1) / (uni + 1))).epsilon(1e-14));
  }
}

TEST_CASE("joint loss is exactly the sum") {
  Rng rng(4);
  Tensor P = soft(6, 5, rng), G = binary(6, 5, rng);
  CHECK(joint_loss(P, G).item() == bce(P, G).item() + iou_loss(P, G).item());
}

TEST_CASE("multilevel aggregation") {
  Rng rng(5);
  Tensor L = test::random_tensor({4, 4}, rng, -3, 3), G = binary(4, 4, rng);
  const Real one = joint_loss(sigmoid(L), G).item();
  CHECK(multilevel_loss({L}, G).item() == one);
  CHECK(multilevel_loss({L, L, L}, G).item() == doctest::Approx(3 * one).epsilon(1e-15));
}

TEST_CASE("IoU is invariant under joint permutation") {
  Rng rng(6);
  Tensor P = soft(4, 4, rng), G = binary(4, 4, rng);
  std::vector<std::int64_t> perm(16);
  for (std::size_t i = 0; i < 16; ++i) perm[i] = static_cast<std::int64_t>((i * 5 + 3) % 16);
  Tensor P2 = gather(P, perm, {4, 4}), G2 = gather(G, perm, {4, 4});
  CHECK(iou_loss(P, G).item() == doctest::Approx(iou_loss(P2, G2).item()).epsilon(1e-15));
}

TEST_CASE("loss input contracts") {
  CHECK_THROWS_AS(bce(T({2}, {0.5, 0.5}), T({1, 2}, {0, 1})), DimensionError);
  CHECK_THROWS_AS(bce(T({2}, {0.5, 1.5}), T({2}, {0, 1})), ContractError);
  CHECK_THROWS_AS(iou_loss(T({2}, {0.5, 0.5}), T({2}, {0, 0.5})), ContractError);
  CHECK(parse_bce_reduction("sum") == BceReduction::sum);
  CHECK_THROWS_AS(parse_bce_reduction("max"), ConfigError);
}

TEST_CASE("loss gradients") {
  Rng rng(7);
  Tensor G = binary(4, 5, rng);
  Tensor P = soft(4, 5, rng);
  CHECK(grad_check([&](const Tensor& x) { return bce(x, G); }, P) < 1e-6);
  CHECK(grad_check([&](const Tensor& x) { return iou_loss(x, G); }, P) < 1e-6);
  CHECK(grad_check([&](const Tensor& x) { return joint_loss(x, G); }, P) < 1e-6);
  Tensor a = test::random_tensor({4, 5}, rng, -2, 2), b = test::random_tensor({4, 5}, rng, -2, 2);
  Tensor c = test::random_tensor({4, 5}, rng, -2, 2);
  CHECK(grad_check([&] { return multilevel_loss({a, b, c}, G); }, {a, b, c}) < 1e-4);
}
