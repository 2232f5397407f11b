#include <filesystem>

#include "doctest.h"
#include "m3net/dataio.hpp"
#include "test_util.hpp"

using namespace m3net;
namespace fs = std::filesystem;

namespace {

std::vector<Real> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("uniform draws") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Real u = uniform01(rng);
    CHECK(u >= 0);
    CHECK(u < 1);
    CHECK(uniform_index(rng, 7) < 7);
  }
  CHECK_THROWS_AS(uniform_index(rng, 0), ContractError);
}

TEST_CASE("normalization uses per-channel statistics") {
  Tensor img = make_tensor({3, 1, 1}, {0.485, 0.456 + 0.224, 0.406 - 0.225}, "img");
  auto n = vec(normalize(img));
  CHECK(n[0] == doctest::Approx(0).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(1).epsilon(1e-12));
  CHECK(n[2] == doctest::Approx(-1).epsilon(1e-12));
}

TEST_CASE("rotations") {
  // 2×3, one plane: [[1,2,3],[4,5,6]] → CCW → [[3,6],[2,5],[1,4]].
  const std::vector<Real> v{1, 2, 3, 4, 5, 6};
  CHECK(rotate90(v, 1, 2, 3, 1) == std::vector<Real>{3, 6, 2, 5, 1, 4});
  CHECK(rotate90(v, 1, 2, 3, 2) == std::vector<Real>{6, 5, 4, 3, 2, 1});
  CHECK(rotate90(v, 1, 2, 3, 0) == v);
  Rng rng(2);
  std::vector<Real> m(5 * 5);
  for (Real& x : m) x = uniform01(rng) < 0.5;
  auto r = m;
  for (int i = 0; i < 4; ++i) r = rotate90(r, 1, 5, 5, 1);
  CHECK(r == m);
}

TEST_CASE("augment without rotation or crop only normalizes") {
  const Sample s = synthetic_sample(0, SyntheticConfig{32, 32, 5});
  Rng rng(3);
  const Sample a = augment(s, AugmentConfig{false, 1.0, true}, rng);
  CHECK(vec(a.image) == vec(normalize(s.image)));
  CHECK(vec(a.mask) == vec(s.mask));
}

TEST_CASE("augment is deterministic under a seed and keeps masks binary") {
  const Sample s = synthetic_sample(1, SyntheticConfig{32, 32, 5});
  Rng r1(4), r2(4);
  for (int i = 0; i < 8; ++i) {
    const Sample a = augment(s, AugmentConfig{}, r1), b = augment(s, AugmentConfig{}, r2);
    CHECK(test::bit_equal(a.image.data(), b.image.data()));
    CHECK(test::bit_equal(a.mask.data(), b.mask.data()));
    CHECK(a.image.shape() == s.image.shape());
    for (Real m : a.mask.data()) CHECK((m == 0 || m == 1));
  }
}

TEST_CASE("synthetic generator") {
  CHECK(gen_synthetic(0, 64, 64, 1).empty());
  const auto a = gen_synthetic(4, 64, 64, 9), b = gen_synthetic(4, 64, 64, 9), c = gen_synthetic(4, 64, 64, 10);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(image_raster(a[i].image) == image_raster(b[i].image));
    CHECK(mask_raster(a[i].mask) == mask_raster(b[i].mask));
  }
  CHECK_FALSE(image_raster(a[0].image) == image_raster(c[0].image));
  CHECK(a[2].id == "syn_000002");
  // Sample i does not depend on how many samples were requested.
  CHECK(image_raster(gen_synthetic(3, 64, 64, 9)[2].image) == image_raster(a[2].image));
}

TEST_CASE("foreground fraction over 1000 samples stays in the band") {
  const SyntheticConfig cfg{32, 32, 77};
  Real lo = 1, hi = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const Sample s = synthetic_sample(i, cfg);
    Real fg = 0;
    for (Real m : s.mask.data()) fg += m;
    fg /= static_cast<Real>(s.mask.size());
    lo = std::min(lo, fg);
    hi = std::max(hi, fg);
  }
  CHECK(lo > cfg.min_foreground);
  CHECK(hi < cfg.max_foreground);
}

TEST_CASE("dataset save and load round-trip") {
  const fs::path root = fs::temp_directory_path() / "m3net_test_dataset";
  fs::remove_all(root);
  const auto data = gen_synthetic(3, 32, 48, 2);
  save_dataset(data, root);
  CHECK(fs::exists(root / "images" / "syn_000000.ppm"));
  CHECK(fs::exists(root / "masks" / "syn_000002.pgm"));
  const auto back = load_dataset(root);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == data[i].id);
    CHECK(test::bit_equal(back[i].image.data(), data[i].image.data()));
    CHECK(test::bit_equal(back[i].mask.data(), data[i].mask.data()));
  }
  CHECK(load_images(root).size() == 3);
  CHECK(load_images(root / "images").size() == 3);
  fs::remove(root / "masks" / "syn_000001.pgm");
  CHECK_THROWS_AS(load_dataset(root), DataError);
  CHECK_THROWS_AS(load_dataset(root / "nowhere"), DataError);
}

TEST_CASE("rasters convert both ways") {
  Raster img{2, 1, 3, {0, 51, 102, 153, 204, 255}};
  Raster mask{2, 1, 1, {0, 255}};
  const Sample s = sample_from_rasters("x", img, mask);
  CHECK(s.image.shape() == Shape{3, 1, 2});
  CHECK(s.image.at(1) == 153 / 255.0);  // channel 0, pixel 1
  CHECK(image_raster(s.image) == img);
  CHECK(mask_raster(s.mask) == mask);
  CHECK_THROWS_AS(sample_from_rasters("x", img, Raster{1, 1, 1, {0}}), DataError);
}
