#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "m3net/config.hpp"
#include "m3net/dataio.hpp"
#include "m3net/metrics.hpp"

namespace m3net {

/// Adam with bias correction; moment buffers live alongside each parameter.
class Adam {
 public:
  Adam(ParameterList params, const OptimConfig& cfg);

  /// Applies one update from the accumulated gradients, then clears them.
  void step(Real lr);
  std::uint32_t steps() const { return t_; }

 private:
  ParameterList params_;
  std::vector<std::vector<Real>> m_, v_;
  Real beta1_, beta2_, eps_;
  std::uint32_t t_ = 0;
};

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// The last floor(fraction · n) samples (id order) are held out.
Split split_dataset(std::vector<Sample> samples, Real val_fraction);

/// Independent generator streams derived from the run seed.
Rng init_rng(std::uint64_t seed);
Rng train_rng(std::uint64_t seed);

/// Sigmoid maps [H×W], coarse to fine, for an un-normalized [0,1] image.
std::vector<Tensor> predict(const Model& model, const Tensor& image);
/// Mean multilevel loss over `samples` without augmentation.
Real dataset_loss(const Model& model, const std::vector<Sample>& samples, BceReduction reduction);
/// Mean MAE of the finest map.
Real dataset_mae(const Model& model, const std::vector<Sample>& samples);
/// Dataset-mean scalar metrics of the finest map.
MetricReport dataset_metrics(const Model& model, const std::vector<Sample>& samples);

struct EpochLog {
  std::size_t epoch = 0;
  Real loss = 0;     // mean training loss after the epoch, no augmentation
  Real val_mae = 0;  // finest map on the held-out split
};

using EpochCallback = std::function<void(const EpochLog&, std::uint32_t step)>;

/// Trains in place. Row 0 of the log is the untrained model. Parameters are
/// rounded to float32 after every epoch so each logged state is exactly
/// representable in a checkpoint.
std::vector<EpochLog> train_model(Model& model, const RunConfig& cfg, const Split& data, Rng& rng,
                                  const EpochCallback& on_epoch = {});

std::string format_log_row(const EpochLog& row);
inline constexpr const char* kLogHeader = "epoch,loss,val_mae";

/// Writes <out>/<id>.pgm for the finest map; with all_levels also
/// <out>/level<k>/<id>.pgm for every head (1 = coarsest).
std::size_t infer_to_dir(const Model& model, const std::vector<Sample>& images,
                         const std::filesystem::path& out, bool all_levels);

}  // namespace m3net
