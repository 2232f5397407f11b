#include "doctest.h"
#include "m3net/encoder.hpp"
#include "m3net/gradcheck.hpp"
#include "m3net/losses.hpp"
#include "test_util.hpp"

using namespace m3net;
using test::random_map;
using test::random_tensor;

namespace {

EncoderConfig toy() {
  EncoderConfig c;
  c.dims = {16, 32, 64, 128};
  c.window = {4, 4};
  c.head_dim = 16;
  return c;
}

}  // namespace

TEST_CASE("patch embedding of a 64x64 image gives 256 tokens") {
  Rng rng(1);
  PatchEmbed pe(4, 32, rng);
  auto f = pe(random_tensor({3, 64, 64}, rng, 0, 1));
  CHECK(f.h == 16);
  CHECK(f.w == 16);
  CHECK(f.tokens.shape() == Shape{256, 32});
  CHECK_THROWS(pe(random_tensor({3, 62, 64}, rng)));
}

TEST_CASE("patch merging halves the grid and doubles channels") {
  Rng rng(3);
  PatchMerging pm(8, rng);
  auto y = pm(random_map(6, 6, 8, rng));
  CHECK(y.h == 3);
  CHECK(y.w == 3);
  CHECK(y.channels() == 16);
  auto odd = pm(random_map(5, 3, 8, rng));
  CHECK(odd.h == 3);
  CHECK(odd.w == 2);
}

TEST_CASE("swin blocks keep the shape, including windows larger than the map") {
  Rng rng(4);
  auto cfg = toy();
  SwinBlock a(16, cfg, rng), b(16, cfg, rng);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {2, 2}, {3, 5}}) {
    auto y = swin_pair(random_map(h, w, 16, rng), a, b);
    CHECK(y.tokens.shape() == Shape{h * w, 16});
  }
}

TEST_CASE("encoder level shapes on a 64x64 toy image") {
  Rng rng(5);
  Encoder enc(toy(), rng);
  auto f = enc.encode(random_tensor({3, 64, 64}, rng, 0, 1));
  CHECK(f.F1.tokens.shape() == Shape{256, 16});
  CHECK(f.F2.tokens.shape() == Shape{64, 32});
  CHECK(f.F3.tokens.shape() == Shape{16, 64});
  CHECK(f.F4.tokens.shape() == Shape{4, 128});
  CHECK_THROWS_AS(enc.encode(random_tensor({3, 56, 64}, rng)), DimensionError);
}

TEST_CASE("encoder config validation") {
  auto c = toy();
  c.depths = {2, 3, 2, 2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy();
  c.dims = {16, 32};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("swin pair gradient at toy dims") {
  Rng rng(6);
  EncoderConfig cfg = toy();
  cfg.window = {2, 2};
  cfg.head_dim = 4;
  SwinBlock a(8, cfg, rng), b(8, cfg, rng);
  ParameterList ps;
  a.collect("a", ps);
  b.collect("b", ps);
  std::vector<Tensor> inputs;
  for (auto& p : ps) {
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v += std::uniform_real_distribution<Real>(-0.1, 0.1)(rng);
    inputs.push_back(t);
  }
  auto x = random_map(4, 4, 8, rng);
  inputs.push_back(x.tokens);
  auto w = random_tensor({16, 8}, rng);
  CHECK(grad_check([&] { return sum(mul(swin_pair(x, a, b).tokens, w)); }, inputs, {1e-5, 6}) < 1e-4);
}

TEST_CASE("every encoder parameter receives gradient") {
  Rng rng(7);
  auto cfg = toy();
  cfg.dims = {4, 8, 16, 32};
  cfg.head_dim = 4;
  cfg.window = {2, 2};
  Encoder enc(cfg, rng);
  ParameterList ps;
  enc.collect("encoder", ps);
  for (auto& p : ps) {
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v += std::uniform_real_distribution<Real>(-0.1, 0.1)(rng);
  }
  auto img = random_tensor({3, 64, 64}, rng, 0, 1);  // stage 4 at 2x2: a 1x1 map has no bias gradient
  Tape tape;
  {
    TapeScope scope(tape);
    for (auto& p : ps) p.tensor.zero_grad();
    auto f = enc.encode(img);
    Tensor loss = add(add(sum(mul(f.F1.tokens, f.F1.tokens)), sum(mul(f.F2.tokens, f.F2.tokens))),
                      add(sum(mul(f.F3.tokens, f.F3.tokens)), sum(mul(f.F4.tokens, f.F4.tokens))));
    tape.backward(loss);
  }
  for (auto& p : ps) {
    INFO(p.name);
    REQUIRE(p.tensor.has_grad());
    Real m = 0;
    for (Real g : p.tensor.grad()) m = std::max(m, std::abs(g));
    CHECK(m > 0);
  }
}
