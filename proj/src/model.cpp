#include "m3net/model.hpp"

namespace m3net {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate(encoder.patch_size);
}

Model::Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  encoder = Encoder(cfg.encoder, rng);
  decoder = Decoder(cfg.encoder.dims, cfg.encoder.patch_size, cfg.decoder, rng);
}

std::vector<Tensor> Model::forward(const Tensor& image) const {
  MultilevelFeatures f = encoder.encode(image);
  return decoder.forward(f, image.dim(1), image.dim(2));
}

ParameterList Model::parameters() const {
  ParameterList out;
  encoder.collect("encoder", out);
  decoder.collect("decoder", out);
  return out;
}

}  // namespace m3net
