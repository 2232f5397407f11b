#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "m3net/ops.hpp"

namespace m3net {

/// The single seeded generator every random path draws from.
using Rng = std::mt19937_64;

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

/// Truncated normal (resampled outside ±2σ) with the given σ.
Tensor trunc_normal(Shape shape, Real sigma, Rng& rng);

/// Parameter factory: projection weights ~ truncated normal(σ=0.02), biases
/// zero, norm gain one. All returned tensors require gradients.
struct Init {
  static constexpr Real kSigma = 0.02;
  static Tensor weight(std::size_t in, std::size_t out, Rng& rng);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;  // [in × out]
  Tensor bias;    // [out], may be undefined
};

class LayerNorm {
 public:
  static constexpr Real kEps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t c);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, kEps); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor gamma;
  Tensor beta;
};

/// Token-wise Linear(in→hidden) → GELU → Linear(hidden→out).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear fc1;
  Linear fc2;
};

/// mlp2: the same-width MLP used inside every transformer block.
Tensor mlp2(const Mlp& mlp, const Tensor& x);

}  // namespace m3net
