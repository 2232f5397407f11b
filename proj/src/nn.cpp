#include "m3net/nn.hpp"

namespace m3net {

Tensor trunc_normal(Shape shape, Real sigma, Rng& rng) {
  std::normal_distribution<Real> dist(0.0, sigma);
  std::vector<Real> data(numel(shape));
  for (Real& v : data) {
    do {
      v = dist(rng);
    } while (std::abs(v) > 2.0 * sigma);
  }
  return Tensor::from(std::move(shape), std::move(data));
}

Tensor Init::weight(std::size_t in, std::size_t out, Rng& rng) {
  Tensor w = trunc_normal({in, out}, kSigma, rng);
  w.set_requires_grad(true);
  return w;
}

Tensor Init::zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Tensor Init::ones(Shape shape) {
  Tensor t = Tensor::full(std::move(shape), 1.0);
  t.set_requires_grad(true);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(Init::weight(in, out, rng)) {
  if (with_bias) bias = Init::zeros({out});
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t c) : gamma(Init::ones({c})), beta(Init::zeros({c})) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor mlp2(const Mlp& mlp, const Tensor& x) {
  if (mlp.fc1.in_features() != x.shape().back() || mlp.fc2.out_features() != x.shape().back()) {
    throw DimensionError("mlp2: MLP does not preserve width of " + shape_str(x.shape()));
  }
  return mlp(x);
}

}  // namespace m3net
