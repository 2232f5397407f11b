#pragma once

#include <string_view>
#include <vector>

#include "m3net/ops.hpp"

namespace m3net {

enum class BceReduction { mean, sum };
BceReduction parse_bce_reduction(std::string_view name);
std::string_view to_string(BceReduction r);

/// Log arguments are floored at this value so log(0) never occurs.
inline constexpr Real kLossEps = 1e-7;
/// Additive smoothing of the IoU ratio.
inline constexpr Real kIouSmooth = 1.0;

/// −[G log P + (1−G) log(1−P)] reduced over pixels. G must be binary.
Tensor bce(const Tensor& P, const Tensor& G, BceReduction reduction = BceReduction::mean);
/// 1 − (ΣPG + 1) / (Σ(P + G − PG) + 1).
Tensor iou_loss(const Tensor& P, const Tensor& G);
Tensor joint_loss(const Tensor& P, const Tensor& G, BceReduction reduction = BceReduction::mean);
/// Σ over levels of joint_loss(sigmoid(map), G).
Tensor multilevel_loss(const std::vector<Tensor>& logits, const Tensor& G,
                       BceReduction reduction = BceReduction::mean);

}  // namespace m3net
