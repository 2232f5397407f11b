#include "m3net/harness.hpp"

#include <cstdio>
#include <functional>

namespace m3net {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, Real lo = -1.0, Real hi = 1.0) {
  std::vector<Real> v(numel(shape));
  for (Real& x : v) x = lo + (hi - lo) * uniform01(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Random linear functional of `out`, so every output coordinate matters.
Tensor probe(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

void randomize(const ParameterList& params, Rng& rng, Real scale) {
  for (const NamedParameter& p : params) {
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v += scale * (2.0 * uniform01(rng) - 1.0);
  }
}

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const NamedParameter& p : params) out.push_back(p.tensor);
  return out;
}

struct Case {
  std::string name;
  std::function<Real(Rng&)> run;
};

Real check_out(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, Rng& rng,
               std::size_t max_coords = 0) {
  Tensor out;
  {
    NoGradScope ng;
    out = f();
  }
  const Tensor w = random_tensor(out.shape(), rng);
  GradCheckOptions opt;
  opt.max_coords_per_tensor = max_coords;
  return grad_check([&] { return probe(f(), w); }, inputs, opt);
}

std::vector<Case> op_cases() {
  std::vector<Case> c;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, Shape shape) {
    c.push_back({std::move(name), [op, shape](Rng& rng) {
                   Tensor x = random_tensor(shape, rng);
                   return check_out([&] { return op(x); }, {x}, rng);
                 }});
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op, Shape sa, Shape sb) {
    c.push_back({std::move(name), [op, sa, sb](Rng& rng) {
                   Tensor a = random_tensor(sa, rng), b = random_tensor(sb, rng);
                   return check_out([&] { return op(a, b); }, {a, b}, rng);
                 }});
  };
  binary("add", add, {3, 4}, {3, 4});
  binary("sub", sub, {3, 4}, {3, 4});
  binary("mul", mul, {3, 4}, {3, 4});
  unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, {3, 4});
  unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, {3, 4});
  binary("add_rowvec", add_rowvec, {3, 4}, {4});
  binary("matmul", matmul, {3, 4}, {4, 2});
  unary("transpose", transpose, {3, 4});
  unary("reshape", [](const Tensor& x) { return reshape(x, {2, 6}); }, {3, 4});
  binary("concat_cols", [](const Tensor& a, const Tensor& b) { return concat_cols({a, b}); }, {3, 2}, {3, 3});
  unary("slice_cols", [](const Tensor& x) { return slice_cols(x, 1, 3); }, {3, 4});
  unary("sigmoid", sigmoid, {3, 4});
  unary("gelu", gelu, {3, 4});
  unary("softmax_rows", softmax_rows, {3, 5});
  unary("sum", sum, {3, 4});
  unary("mean", mean, {3, 4});
  c.push_back({"layer_norm", [](Rng& rng) {
                 Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
                 return check_out([&] { return layer_norm(x, g, b, 1e-5); }, {x, g, b}, rng);
               }});
  c.push_back({"linear", [](Rng& rng) {
                 Tensor x = random_tensor({2, 3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
                 return check_out([&] { return linear(x, w, b); }, {x, w, b}, rng);
               }});
  c.push_back({"gather", [](Rng& rng) {
                 Tensor x = random_tensor({3, 4}, rng);
                 std::vector<std::int64_t> idx{0, 5, -1, 5, 11, 2};
                 return check_out([&] { return gather(x, idx, {2, 3}); }, {x}, rng);
               }});
  c.push_back({"gather_rows", [](Rng& rng) {
                 Tensor x = random_tensor({4, 3}, rng);
                 std::vector<std::int64_t> idx{3, -1, 0, 3};
                 return check_out([&] { return gather_rows(x, idx, {4, 3}); }, {x}, rng);
               }});
  c.push_back({"scatter_add", [](Rng& rng) {
                 Tensor x = random_tensor({6}, rng);
                 std::vector<std::int64_t> idx{0, 2, 2, -1, 3, 0};
                 return check_out([&] { return scatter_add(x, idx, {4}); }, {x}, rng);
               }});
  c.push_back({"row_mix", [](Rng& rng) {
                 Tensor x = random_tensor({3, 2}, rng);
                 RowMix mix{{0, 2, 3}, {0, 2, 1}, {0.25, 0.75, 1.5}};
                 return check_out([&] { return row_mix(x, mix, {2, 2}); }, {x}, rng);
               }});
  c.push_back({"attention", [](Rng& rng) {
                 Tensor q = random_tensor({2, 3, 4}, rng), k = random_tensor({2, 5, 4}, rng), v = random_tensor({2, 5, 4}, rng);
                 Tensor bias = random_tensor({2, 3, 5}, rng);
                 std::vector<std::uint8_t> mask(2 * 3 * 5, 1);
                 mask[1] = mask[7] = mask[20] = 0;
                 return check_out([&] { return attention(q, k, v, 2, &mask, &bias); }, {q, k, v, bias}, rng);
               }});
  c.push_back({"mlp2", [](Rng& rng) {
                 Mlp m(3, 5, 3, rng);
                 ParameterList p;
                 m.collect("mlp", p);
                 randomize(p, rng, 0.5);
                 Tensor x = random_tensor({2, 3}, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 in.push_back(x);
                 return check_out([&] { return mlp2(m, x); }, in, rng);
               }});
  return c;
}

SequenceFeature random_feature(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  return SequenceFeature::make(random_tensor({h * w, c}, rng), h, w);
}

Tensor random_mask(Shape shape, Rng& rng) {
  Tensor m = random_tensor(shape, rng, 0.0, 1.0);
  for (Real& v : m.mutable_data()) v = v < 0.5 ? 0.0 : 1.0;
  return m;
}

DecoderConfig small_decoder() {
  DecoderConfig d;
  d.r = 1;
  d.d_mab = 8;
  d.window = {2, 2};
  d.head_dim = 4;
  return d;
}

std::vector<Case> block_cases() {
  std::vector<Case> c;
  c.push_back({"window_msa", [](Rng& rng) {
                 SelfAttention a(AttentionConfig{4, 2, Window{2, 2}}, rng, true);
                 ParameterList p;
                 a.collect("a", p);
                 randomize(p, rng, 0.5);
                 SequenceFeature x = random_feature(3, 5, 4, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 in.push_back(x.tokens);
                 return check_out([&] { return shifted_window_msa(x, a).tokens; }, in, rng);
               }});
  c.push_back({"swin_pair", [](Rng& rng) {
                 EncoderConfig cfg;
                 cfg.window = {2, 2};
                 cfg.head_dim = 4;
                 SwinBlock b0(8, cfg, rng), b1(8, cfg, rng);
                 ParameterList p;
                 b0.collect("b0", p);
                 b1.collect("b1", p);
                 randomize(p, rng, 0.3);
                 SequenceFeature x = random_feature(4, 4, 8, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 in.push_back(x.tokens);
                 return check_out([&] { return swin_pair(x, b0, b1).tokens; }, in, rng);
               }});
  c.push_back({"cross_attention", [](Rng& rng) {
                 CrossAttention ca(4, 6, AttentionConfig{4, 2, std::nullopt}, 4, rng);
                 ParameterList p;
                 ca.collect("ca", p);
                 randomize(p, rng, 0.5);
                 SequenceFeature lo = random_feature(4, 4, 4, rng), hi = random_feature(2, 2, 6, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 in.push_back(lo.tokens);
                 in.push_back(hi.tokens);
                 return check_out([&] { return cross_attention(lo, hi, ca); }, in, rng);
               }});
  for (InteractionMode mode : {InteractionMode::high_to_low, InteractionMode::low_to_high, InteractionMode::bidirectional}) {
    c.push_back({"mib_" + std::string(to_string(mode)), [mode](Rng& rng) {
                   DecoderConfig d = small_decoder();
                   d.interaction = mode;
                   Mib m(4, {8, 16}, d, rng);
                   ParameterList p;
                   m.collect("mib", p);
                   randomize(p, rng, 0.3);
                   SequenceFeature lo = random_feature(4, 4, 4, rng), h1 = random_feature(2, 2, 8, rng),
                                   h2 = random_feature(1, 1, 16, rng);
                   std::vector<Tensor> in = tensors_of(p);
                   for (const Tensor& t : {lo.tokens, h1.tokens, h2.tokens}) in.push_back(t);
                   return check_out([&] { return mib(lo, {h1, h2}, m).tokens; }, in, rng);
                 }});
  }
  c.push_back({"mab_stack", [](Rng& rng) {
                 DecoderConfig d = small_decoder();
                 MabStack s(6, 4, d, 2, rng);
                 ParameterList p;
                 s.collect("mab", p);
                 randomize(p, rng, 0.3);
                 SequenceFeature x = random_feature(4, 4, 6, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 in.push_back(x.tokens);
                 return check_out([&] { return mab_stack(x, s).tokens; }, in, rng);
               }});
  for (UpsampleMethod m : {UpsampleMethod::fold_overlap, UpsampleMethod::fold, UpsampleMethod::pixel_shuffle,
                           UpsampleMethod::bilinear}) {
    c.push_back({"upsample_" + std::string(to_string(m)), [m](Rng& rng) {
                   Upsampler up(m, 3, FoldGeometry{3, 2, 1}, rng);
                   ParameterList p;
                   up.collect("up", p);
                   randomize(p, rng, 0.5);
                   SequenceFeature x = random_feature(2, 3, 3, rng);
                   std::vector<Tensor> in = tensors_of(p);
                   in.push_back(x.tokens);
                   return check_out([&] { return up(x).tokens; }, in, rng);
                 }});
  }
  c.push_back({"bce", [](Rng& rng) {
                 Tensor P = random_tensor({4, 4}, rng, 0.05, 0.95), G = random_mask({4, 4}, rng);
                 return grad_check([&] { return bce(P, G); }, {P});
               }});
  c.push_back({"iou_loss", [](Rng& rng) {
                 Tensor P = random_tensor({4, 4}, rng, 0.05, 0.95), G = random_mask({4, 4}, rng);
                 return grad_check([&] { return iou_loss(P, G); }, {P});
               }});
  c.push_back({"joint_loss", [](Rng& rng) {
                 Tensor P = random_tensor({4, 4}, rng, 0.05, 0.95), G = random_mask({4, 4}, rng);
                 return grad_check([&] { return joint_loss(P, G); }, {P});
               }});
  c.push_back({"multilevel_loss", [](Rng& rng) {
                 Tensor a = random_tensor({4, 4}, rng, -3, 3), b = random_tensor({4, 4}, rng, -3, 3),
                        d = random_tensor({4, 4}, rng, -3, 3), G = random_mask({4, 4}, rng);
                 return grad_check([&] { return multilevel_loss({a, b, d}, G); }, {a, b, d});
               }});
  c.push_back({"decode_stage", [](Rng& rng) {
                 DecoderConfig d = small_decoder();
                 DecoderStage st(4, 8, {8, 16}, FoldGeometry{3, 2, 1}, d, rng);
                 ParameterList p;
                 st.collect("stage", p);
                 randomize(p, rng, 0.3);
                 SequenceFeature lo = random_feature(4, 4, 4, rng), prev = random_feature(2, 2, 8, rng),
                                 c2 = random_feature(1, 1, 16, rng);
                 std::vector<Tensor> in = tensors_of(p);
                 for (const Tensor& t : {lo.tokens, prev.tokens, c2.tokens}) in.push_back(t);
                 return check_out([&] { return decode_stage(lo, {prev, c2}, prev, st).F_P; }, in, rng);
               }});
  return c;
}

}  // namespace

ModelConfig gradcheck_model_config() {
  ModelConfig m;
  m.encoder.dims = {4, 8, 16, 32};
  m.encoder.depths = {2, 2, 2, 2};
  m.encoder.window = {2, 2};
  m.encoder.head_dim = 4;
  m.decoder.d_mab = 16;
  m.decoder.r = 1;
  m.decoder.window = {2, 2};
  m.decoder.head_dim = 8;
  return m;
}

std::vector<GradCheckLine> run_gradcheck_suite(const std::string& scope, std::size_t seeds) {
  std::vector<GradCheckLine> lines;
  std::vector<Case> cases;
  Real tol = kBlockGradTolerance;
  if (scope == "ops") {
    cases = op_cases();
  } else if (scope == "blocks") {
    cases = block_cases();
  } else if (scope == "model") {
    tol = kModelGradTolerance;
    cases.push_back({"model", [](Rng& rng) {
                       Model model(gradcheck_model_config(), rng);
                       const ParameterList p = model.parameters();
                       randomize(p, rng, 0.1);
                       Tensor image = random_tensor({3, 16, 16}, rng);
                       Tensor G = random_mask({16, 16}, rng);
                       std::vector<Tensor> in = tensors_of(p);
                       in.push_back(image);
                       GradCheckOptions opt;
                       opt.max_coords_per_tensor = 3;
                       return grad_check([&] { return multilevel_loss(model.forward(image), G); }, in, opt);
                     }});
  } else {
    throw ConfigError("unknown gradcheck scope '" + scope + "' (ops, blocks, model)");
  }
  for (const Case& c : cases) {
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(1000 + s);
      lines.push_back({scope, c.name, 1000 + s, c.run(rng), tol});
    }
  }
  return lines;
}

std::vector<std::string> ablation_axes() { return {"across_levels", "interaction", "window", "upsample"}; }

std::vector<std::string> axis_values(const std::string& axis) {
  if (axis == "across_levels") return {"1", "2", "3"};
  if (axis == "interaction") return {"h2l", "l2h", "bi"};
  if (axis == "window") return {"4", "7", "14", "global", "mixed"};
  if (axis == "upsample") return {"fold_overlap", "fold", "bilinear", "pixel_shuffle"};
  throw ConfigError("unknown ablation axis '" + axis + "'");
}

std::vector<std::string> axis_keys(const std::string& axis) {
  if (axis == "across_levels") return {"decoder.across_levels"};
  if (axis == "interaction") return {"decoder.interaction"};
  if (axis == "window") return {"decoder.window", "decoder.attention"};
  if (axis == "upsample") return {"decoder.upsample"};
  throw ConfigError("unknown ablation axis '" + axis + "'");
}

RunConfig apply_axis(const RunConfig& base, const std::string& axis, const std::string& value) {
  RunConfig cfg = base;
  if (axis == "window") {
    // N: window only; global; mixed: 7 + global; N+global: mixed with window N.
    if (value == "global") {
      set_config_value(cfg, "decoder.attention", "global");
    } else if (value == "mixed") {
      set_config_value(cfg, "decoder.attention", "mixed");
      set_config_value(cfg, "decoder.window", "7");
    } else if (const auto plus = value.find("+global"); plus != std::string::npos) {
      set_config_value(cfg, "decoder.attention", "mixed");
      set_config_value(cfg, "decoder.window", value.substr(0, plus));
    } else {
      set_config_value(cfg, "decoder.attention", "window");
      set_config_value(cfg, "decoder.window", value);
    }
  } else {
    set_config_value(cfg, axis_keys(axis).front(), value);
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> ablate(const RunConfig& base, const std::string& axis, const Split& data,
                                const std::vector<std::string>& values) {
  std::vector<AblationRow> rows;
  const std::vector<std::string> keys = axis_keys(axis);
  for (const std::string& value : values) {
    const RunConfig cfg = apply_axis(base, axis, value);
    Rng irng = init_rng(cfg.seed);
    Model model(cfg.model, irng);
    Rng trng = train_rng(cfg.seed);
    const std::vector<EpochLog> log = train_model(model, cfg, data, trng);
    const MetricReport m = dataset_metrics(model, data.val);
    rows.push_back({axis, value, hex64(config_hash(cfg)), hex64(config_hash(cfg, keys)), log.front().loss,
                    log.back().loss, m.mae, m.e_mean, m.s_measure, m.wf});
  }
  return rows;
}

std::string format_ablation_row(const AblationRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f", r.axis.c_str(), r.value.c_str(),
                r.config_hash.c_str(), r.base_hash.c_str(), r.initial_loss, r.final_loss, r.val_mae, r.e_mean,
                r.s_measure, r.wf);
  return buf;
}

}  // namespace m3net
