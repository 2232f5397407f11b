#include <map>

#include "doctest.h"
#include "m3net/gradcheck.hpp"
#include "m3net/harness.hpp"
#include "m3net/losses.hpp"
#include "m3net/model.hpp"
#include "test_util.hpp"

using namespace m3net;
using test::random_map;
using test::random_tensor;

namespace {

DecoderConfig small_cfg() {
  DecoderConfig c;
  c.d_mab = 8;
  c.r = 1;
  c.window = {2, 2};
  c.head_dim = 4;
  return c;
}

void fill(const Tensor& t, Real v) {
  Tensor h = t;
  for (Real& x : h.mutable_data()) x = v;
}

void jitter(const ParameterList& ps, Rng& rng, Real amp = 0.1) {
  for (const auto& p : ps) {
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v += std::uniform_real_distribution<Real>(-amp, amp)(rng);
  }
}

// Copies same-named tensors from `src` into `dst`.
void copy_shared(const ParameterList& src, const ParameterList& dst) {
  std::map<std::string, Tensor> by_name;
  for (const auto& p : src) by_name[p.name] = p.tensor;
  for (const auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) continue;
    REQUIRE(it->second.shape() == p.tensor.shape());
    Tensor t = p.tensor;
    std::copy(it->second.data().begin(), it->second.data().end(), t.mutable_data().begin());
  }
}

void copy_attention(const SelfAttention& from, const SelfAttention& to) {
  ParameterList a, b;
  from.collect("x", a);
  to.collect("x", b);
  copy_shared(a, b);
}

}  // namespace

TEST_CASE("mode names parse in long and short form") {
  CHECK(parse_interaction("h2l") == InteractionMode::high_to_low);
  CHECK(parse_interaction("low_to_high") == InteractionMode::low_to_high);
  CHECK(parse_interaction("bi") == InteractionMode::bidirectional);
  CHECK(parse_mab_attention("global") == MabAttention::global);
  CHECK(parse_context_source("raw") == ContextSource::raw);
  CHECK_THROWS_AS(parse_interaction("sideways"), ConfigError);
}

TEST_CASE("decoder config validation") {
  auto c = small_cfg();
  CHECK_NOTHROW(c.validate(4));
  c.r = 0;
  CHECK_THROWS_AS(c.validate(4), ConfigError);
  c = small_cfg();
  c.across_levels = 4;
  CHECK_THROWS_AS(c.validate(4), ConfigError);
  c = small_cfg();
  c.fold[2] = {7, 2, 2};
  CHECK_THROWS_AS(c.validate(4), ConfigError);
  c = small_cfg();
  c.fold[0] = {2, 3, 0};
  CHECK_THROWS_AS(c.validate(4), ConfigError);
  c = small_cfg();
  c.fold[0] = {3, 2, 0};
  CHECK_THROWS_AS(c.check_geometry(64, 64, 4), ConfigError);
  CHECK_NOTHROW(small_cfg().check_geometry(64, 64, 4));
}

TEST_CASE("MIB preserves the low-level resolution") {
  Rng rng(1);
  for (auto mode : {InteractionMode::high_to_low, InteractionMode::low_to_high, InteractionMode::bidirectional}) {
    auto cfg = small_cfg();
    cfg.interaction = mode;
    Mib m(8, {16, 32}, cfg, rng);
    auto out = mib(random_map(16, 16, 8, rng), {random_map(8, 8, 16, rng), random_map(4, 4, 32, rng)}, m);
    CHECK(out.h == 16);
    CHECK(out.tokens.shape() == Shape{256, 8});
  }
}

TEST_CASE("MIB contract errors") {
  Rng rng(2);
  Mib m(8, {16}, small_cfg(), rng);
  CHECK_THROWS_AS(mib(random_map(4, 4, 8, rng), {}, m), ContractError);
  CHECK_THROWS_AS(mib(random_map(4, 4, 6, rng), {random_map(2, 2, 16, rng)}, m), DimensionError);
  CHECK_THROWS_AS(Mib(8, {}, small_cfg(), rng), ContractError);
}

TEST_CASE("MIB with zero value projections reduces to the residual MLP") {
  Rng rng(3);
  Mib m(8, {16, 32}, small_cfg(), rng);
  ParameterList ps;
  m.collect("m", ps);
  jitter(ps, rng);
  for (const auto& ca : m.down) {
    fill(ca.v.weight, 0);
    fill(ca.v.bias, 0);
    fill(ca.o.bias, 0);
  }
  auto low = random_map(4, 4, 8, rng);
  auto out = mib(low, {random_map(2, 2, 16, rng), random_map(1, 1, 32, rng)}, m).tokens;
  auto ref = add(m.mlp(m.norm(low.tokens)), low.tokens);
  CHECK(test::bit_equal(out.data(), ref.data()));
}

TEST_CASE("across_levels 1 and 2 differ only by the second branch") {
  Rng rng(4);
  auto c1 = small_cfg(), c2 = small_cfg();
  c1.across_levels = 1;
  Rng r1(9), r2(9);
  Mib m1(8, {16}, c1, r1), m2(8, {16, 32}, c2, r2);
  ParameterList p1, p2;
  m1.collect("m", p1);
  m2.collect("m", p2);
  jitter(p1, rng);
  copy_shared(p1, p2);
  auto low = random_map(4, 4, 8, rng);
  auto h3 = random_map(2, 2, 16, rng), h4 = random_map(1, 1, 32, rng);
  auto a = mib(low, {h3}, m1).tokens;
  CHECK_FALSE(test::bit_equal(a.data(), mib(low, {h3, h4}, m2).tokens.data()));
  fill(m2.down[1].v.weight, 0);
  fill(m2.down[1].v.bias, 0);
  fill(m2.down[1].o.bias, 0);
  CHECK(test::bit_equal(a.data(), mib(low, {h3, h4}, m2).tokens.data()));
}

TEST_CASE("MAB window and global terms agree when the window covers the map") {
  Rng rng(5);
  auto cfg = small_cfg();
  cfg.window = {7, 7};
  cfg.mab_attention_residual = false;
  MabBlock b(8, cfg, rng);
  copy_attention(b.global_attn, b.window_attn);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{7, 7}, {4, 5}, {2, 2}}) {
    auto x = random_map(h, w, 8, rng);
    auto win = b.window_attn.windowed(x, {h, w}, false).tokens;
    auto glob = b.global_attn.global(x).tokens;
    CHECK(test::max_abs_diff(win.data(), glob.data()) < 1e-9);
    auto mixed = b.mixed_attention(x).tokens;
    CHECK(test::max_abs_diff(mixed.data(), scale(glob, 2).data()) < 1e-9);
  }
}

TEST_CASE("MAB modes build only the attention they use") {
  Rng rng(6);
  auto cfg = small_cfg();
  cfg.attention = MabAttention::window;
  MabBlock w(8, cfg, rng);
  CHECK(w.window_attn.qkv.weight.defined());
  CHECK_FALSE(w.global_attn.qkv.weight.defined());
  cfg.attention = MabAttention::global;
  MabBlock g(8, cfg, rng);
  CHECK_FALSE(g.window_attn.qkv.weight.defined());
  auto x = random_map(3, 3, 8, rng);
  CHECK(test::max_abs_diff(g.mixed_attention(x).tokens.data(), g.global_attn.global(x).tokens.data()) == 0);
}

TEST_CASE("MAB stack with r=0 is the two MLPs") {
  Rng rng(7);
  MabStack s(12, 6, small_cfg(), 0, rng);
  auto x = random_map(3, 3, 12, rng);
  auto ref = s.restore(s.lift(x.tokens));
  CHECK(test::bit_equal(mab_stack(x, s).tokens.data(), ref.data()));
  CHECK_THROWS_AS(mab_stack(random_map(3, 3, 5, rng), s), DimensionError);
}

TEST_CASE("MAB stack gradient at l=16, d_mab=8, r=2") {
  Rng rng(8);
  auto cfg = small_cfg();
  MabStack s(6, 6, cfg, 2, rng);
  ParameterList ps;
  s.collect("s", ps);
  jitter(ps, rng);
  std::vector<Tensor> in;
  for (auto& p : ps) in.push_back(p.tensor);
  auto x = random_map(4, 4, 6, rng);
  in.push_back(x.tokens);
  auto w = random_tensor({16, 6}, rng);
  CHECK(grad_check([&] { return sum(mul(mab_stack(x, s).tokens, w)); }, in, {1e-5, 8}) < 1e-4);
}

TEST_CASE("stage wiring on toy shapes") {
  Rng rng(9);
  DecoderStage st(32, 64, {64, 128}, {3, 2, 1}, small_cfg(), rng);
  auto out = decode_stage(random_map(8, 8, 32, rng), {random_map(4, 4, 64, rng), random_map(2, 2, 128, rng)},
                          random_map(4, 4, 64, rng), st);
  CHECK(out.F_I.tokens.shape() == Shape{64, 32});
  CHECK(out.F_M.tokens.shape() == Shape{64, 32});
  CHECK(out.F_P.shape() == Shape{64, 1});
  CHECK_THROWS_AS(decode_stage(random_map(8, 8, 32, rng), {random_map(4, 4, 64, rng), random_map(2, 2, 128, rng)},
                               random_map(3, 3, 64, rng), st),
                  DimensionError);
}

TEST_CASE("context follows across_levels and ctx_source") {
  Rng rng(10);
  MultilevelFeatures f{random_map(8, 8, 4, rng), random_map(4, 4, 8, rng), random_map(2, 2, 16, rng),
                       random_map(1, 1, 32, rng)};
  auto fi = random_map(4, 4, 8, rng);
  for (std::size_t L : {1, 2, 3}) {
    auto cfg = small_cfg();
    cfg.across_levels = L;
    Rng r(1);
    Decoder d({4, 8, 16, 32}, 4, cfg, r);
    CHECK(d.context(2, f, nullptr).size() == std::min<std::size_t>(L, 2));
    auto c1 = d.context(1, f, &fi);
    CHECK(c1.size() == L);
    CHECK(c1[0].tokens.data().data() == fi.tokens.data().data());
    cfg.ctx_source = ContextSource::raw;
    Rng r2(1);
    Decoder raw({4, 8, 16, 32}, 4, cfg, r2);
    CHECK(raw.context(1, f, &fi)[0].tokens.data().data() == f.F2.tokens.data().data());
  }
}

TEST_CASE("toy forward gives three full-resolution maps, deterministically") {
  Rng rng(11);
  ModelConfig cfg;
  cfg.encoder.dims = {16, 32, 64, 128};
  cfg.encoder.window = {4, 4};
  cfg.encoder.head_dim = 16;
  cfg.decoder.d_mab = 64;
  cfg.decoder.window = {4, 4};
  Rng a(3), b(3);
  Model m1(cfg, a), m2(cfg, b);
  auto img = random_tensor({3, 64, 64}, rng, 0, 1);
  auto o1 = m1.forward(img), o2 = m2.forward(img);
  REQUIRE(o1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(o1[i].shape() == Shape{64, 64});
    CHECK(test::bit_equal(o1[i].data(), o2[i].data()));
  }
}

TEST_CASE("zero weights give constant maps equal to the head biases") {
  Rng rng(12);
  Model m(gradcheck_model_config(), rng);
  for (const auto& p : m.parameters()) {
    const bool is_bias = p.name.ends_with(".bias") || p.name.ends_with(".beta");
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v = is_bias ? std::uniform_real_distribution<Real>(-1, 1)(rng) : 0;
  }
  auto maps = m.forward(random_tensor({3, 16, 16}, rng, 0, 1));
  const Real b2 = m.decoder.stage2.head.bias.at(0), b1 = m.decoder.stage1.head.bias.at(0);
  const Real bf = m.decoder.final_head.bias.at(0);
  for (Real v : maps[0].data()) CHECK(v == doctest::Approx(b2).epsilon(1e-14));
  for (Real v : maps[1].data()) CHECK(v == doctest::Approx(b1).epsilon(1e-14));
  for (Real v : maps[2].data()) CHECK(v == bf);
}

TEST_CASE("every parameter receives gradient for each interaction mode and upsampler") {
  for (auto mode : {InteractionMode::high_to_low, InteractionMode::low_to_high, InteractionMode::bidirectional}) {
    for (auto up : {UpsampleMethod::fold_overlap, UpsampleMethod::fold, UpsampleMethod::bilinear,
                    UpsampleMethod::pixel_shuffle}) {
      ModelConfig cfg = gradcheck_model_config();
      cfg.decoder.interaction = mode;
      cfg.decoder.upsample = up;
      cfg.decoder.across_levels = 3;
      Rng rng(13);
      Model m(cfg, rng);
      auto ps = m.parameters();
      jitter(ps, rng);
      // 64×64 keeps every level above 1×1; attention over a single key has no q/k gradient.
      auto img = random_tensor({3, 64, 64}, rng, 0, 1);
      std::vector<Real> g(64 * 64);
      for (Real& v : g) v = uniform01(rng) < 0.4;
      Tensor G = make_tensor({64, 64}, g, "gt");
      Tape tape;
      {
        TapeScope scope(tape);
        tape.backward(multilevel_loss(m.forward(img), G));
      }
      for (const auto& p : ps) {
        INFO(to_string(mode), " ", to_string(up), " ", p.name);
        REQUIRE(p.tensor.has_grad());
        Real mx = 0;
        for (Real v : p.tensor.grad()) mx = std::max(mx, std::abs(v));
        CHECK(mx > 0);
      }
    }
  }
}

TEST_CASE("one decoder stage passes a gradient check") {
  Rng rng(14);
  auto cfg = small_cfg();
  DecoderStage st(4, 8, {8, 16}, {3, 2, 1}, cfg, rng);
  ParameterList ps;
  st.collect("s", ps);
  jitter(ps, rng);
  auto low = random_map(4, 4, 4, rng), c2 = random_map(2, 2, 8, rng), c3 = random_map(1, 1, 16, rng);
  auto prev = random_map(2, 2, 8, rng);
  std::vector<Tensor> in{low.tokens, c2.tokens, c3.tokens, prev.tokens};
  for (auto& p : ps) in.push_back(p.tensor);
  auto w = random_tensor({16, 1}, rng);
  CHECK(grad_check([&] { return sum(mul(decode_stage(low, {c2, c3}, prev, st).F_P, w)); }, in, {1e-5, 6}) <
        1e-4);
}
