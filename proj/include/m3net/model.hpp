#pragma once

#include "m3net/decoder.hpp"

namespace m3net {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  void validate() const;
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, Rng& rng);

  /// image [3×H×W] → logits maps [H×W], coarse to fine.
  std::vector<Tensor> forward(const Tensor& image) const;
  /// Every trainable tensor with a stable dotted name, in construction order.
  ParameterList parameters() const;
  const ModelConfig& config() const { return cfg_; }

  Encoder encoder;
  Decoder decoder;

 private:
  ModelConfig cfg_;
};

}  // namespace m3net
