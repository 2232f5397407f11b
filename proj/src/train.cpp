#include "m3net/train.hpp"

#include <cmath>
#include <cstdio>

#include "m3net/checkpoint.hpp"

namespace m3net {

Adam::Adam(ParameterList params, const OptimConfig& cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (const NamedParameter& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step(Real lr) {
  ++t_;
  const Real c1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const Real mh = m[j] / c1, vh = v[j] / c2;
      w[j] -= lr * mh / (std::sqrt(vh) + eps_);
    }
    p.zero_grad();
  }
}

Split split_dataset(std::vector<Sample> samples, Real val_fraction) {
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<Real>(samples.size())));
  Split s;
  s.val.assign(samples.end() - static_cast<std::ptrdiff_t>(n_val), samples.end());
  samples.resize(samples.size() - n_val);
  s.train = std::move(samples);
  return s;
}

Rng init_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0u};
  return Rng(seq);
}

Rng train_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  return Rng(seq);
}

std::vector<Tensor> predict(const Model& model, const Tensor& image) {
  NoGradScope no_grad;
  std::vector<Tensor> maps = model.forward(normalize(image));
  for (Tensor& m : maps) m = sigmoid(m);
  return maps;
}

Real dataset_loss(const Model& model, const std::vector<Sample>& samples, BceReduction reduction) {
  if (samples.empty()) return 0.0;
  NoGradScope no_grad;
  Real total = 0;
  for (const Sample& s : samples) total += multilevel_loss(model.forward(normalize(s.image)), s.mask, reduction).item();
  return total / static_cast<Real>(samples.size());
}

namespace {

SaliencyMap to_saliency(const Tensor& map) {
  return SaliencyMap{map.dim(0), map.dim(1), std::vector<Real>(map.data().begin(), map.data().end())};
}

GroundTruth to_truth(const Tensor& mask) {
  GroundTruth g{mask.dim(0), mask.dim(1), std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) g.mask[i] = mask.at(i) >= 0.5 ? 1 : 0;
  return g;
}

}  // namespace

Real dataset_mae(const Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  Real total = 0;
  for (const Sample& s : samples) total += mae(to_saliency(predict(model, s.image).back()), to_truth(s.mask));
  return total / static_cast<Real>(samples.size());
}

MetricReport dataset_metrics(const Model& model, const std::vector<Sample>& samples) {
  MetricReport m;
  if (samples.empty()) return m;
  for (const Sample& s : samples) {
    // Scores use the 8-bit map that inference writes to disk.
    const Tensor p = predict(model, s.image).back();
    const Raster q = quantize_gray(std::vector<Real>(p.data().begin(), p.data().end()), p.dim(0), p.dim(1));
    const MetricReport r = evaluate(SaliencyMap::from_bytes(q.height, q.width, q.pixels), to_truth(s.mask));
    m.mae += r.mae;
    m.e_mean += r.e_mean;
    m.s_measure += r.s_measure;
    m.wf += r.wf;
  }
  const Real n = static_cast<Real>(samples.size());
  m.mae /= n;
  m.e_mean /= n;
  m.s_measure /= n;
  m.wf /= n;
  return m;
}

std::vector<EpochLog> train_model(Model& model, const RunConfig& cfg, const Split& data, Rng& rng,
                                  const EpochCallback& on_epoch) {
  if (data.train.empty()) throw DataError("train: empty training split");
  const ParameterList params = model.parameters();
  round_to_float32(params);
  Adam adam(params, cfg.optim);
  const AugmentConfig aug{cfg.data.rotate, cfg.data.crop, true};
  const std::size_t B = cfg.optim.batch;

  std::vector<EpochLog> log;
  auto record = [&](std::size_t epoch) {
    EpochLog row{epoch, dataset_loss(model, data.train, cfg.bce_reduction), dataset_mae(model, data.val)};
    log.push_back(row);
    if (on_epoch) on_epoch(row, adam.steps());
  };
  record(0);

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    const Real lr = cfg.optim.lr_at(epoch);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      const Real weight = 1.0 / static_cast<Real>(end - start);
      for (std::size_t j = start; j < end; ++j) {
        const Sample s = augment(data.train[order[j]], aug, rng);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = scale(multilevel_loss(model.forward(s.image), s.mask, cfg.bce_reduction), weight);
        tape.backward(loss);
      }
      adam.step(lr);
    }
    round_to_float32(params);
    record(epoch);
  }
  return log;
}

std::string format_log_row(const EpochLog& row) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f", row.epoch, row.loss, row.val_mae);
  return buf;
}

std::size_t infer_to_dir(const Model& model, const std::vector<Sample>& images, const std::filesystem::path& out,
                         bool all_levels) {
  std::filesystem::create_directories(out);
  for (const Sample& s : images) {
    const std::vector<Tensor> maps = predict(model, s.image);
    auto save = [&](const Tensor& m, const std::filesystem::path& path) {
      save_pgm(quantize_gray(std::vector<Real>(m.data().begin(), m.data().end()), m.dim(0), m.dim(1)), path);
    };
    save(maps.back(), out / (s.id + ".pgm"));
    if (all_levels) {
      for (std::size_t k = 0; k < maps.size(); ++k) save(maps[k], out / ("level" + std::to_string(k + 1)) / (s.id + ".pgm"));
    }
  }
  return images.size();
}

}  // namespace m3net
