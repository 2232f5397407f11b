#pragma once

#include <string>
#include <vector>

#include "m3net/gradcheck.hpp"
#include "m3net/train.hpp"

namespace m3net {

struct GradCheckLine {
  std::string scope;  // ops | blocks | model
  std::string name;
  std::uint64_t seed = 0;
  Real error = 0;
  Real threshold = 0;
  bool pass() const { return error <= threshold; }
};

inline constexpr Real kBlockGradTolerance = 1e-4;
inline constexpr Real kModelGradTolerance = 1e-3;

/// Central-difference checks of every primitive (`ops`), every block
/// (`blocks`) or the toy model (`model`), once per seed.
std::vector<GradCheckLine> run_gradcheck_suite(const std::string& scope, std::size_t seeds = 5);

/// The model configuration used by the full-model check: 16×16 input,
/// dims [4,8,16,32], d_mab 16, r 1.
ModelConfig gradcheck_model_config();

struct AblationRow {
  std::string axis;
  std::string value;
  std::string config_hash;  // whole config
  std::string base_hash;    // config without the ablated keys
  Real initial_loss = 0;
  Real final_loss = 0;
  Real val_mae = 0;
  Real e_mean = 0;
  Real s_measure = 0;
  Real wf = 0;
};

std::vector<std::string> ablation_axes();
std::vector<std::string> axis_values(const std::string& axis);
/// Config keys an axis writes.
std::vector<std::string> axis_keys(const std::string& axis);
RunConfig apply_axis(const RunConfig& base, const std::string& axis, const std::string& value);

/// Trains and scores the pipeline once per axis value under the base seed.
std::vector<AblationRow> ablate(const RunConfig& base, const std::string& axis, const Split& data,
                                const std::vector<std::string>& values);
inline constexpr const char* kAblationHeader =
    "axis,value,config_hash,base_hash,initial_loss,final_loss,val_mae,e_mean,s_measure,wf";
std::string format_ablation_row(const AblationRow& row);

}  // namespace m3net
