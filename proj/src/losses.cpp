#include "m3net/losses.hpp"

#include <cmath>

namespace m3net {

BceReduction parse_bce_reduction(std::string_view name) {
  if (name == "mean") return BceReduction::mean;
  if (name == "sum") return BceReduction::sum;
  throw ConfigError("unknown bce reduction '" + std::string(name) + "'");
}

std::string_view to_string(BceReduction r) { return r == BceReduction::mean ? "mean" : "sum"; }

namespace {

void check_pair(const Tensor& P, const Tensor& G, const char* op) {
  if (P.shape() != G.shape()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_str(P.shape()) +
                         " vs ground truth " + shape_str(G.shape()));
  }
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (P.at(i) < 0.0 || P.at(i) > 1.0) {
      throw ContractError(std::string(op) + ": prediction outside [0,1]");
    }
    if (G.at(i) != 0.0 && G.at(i) != 1.0) {
      throw ContractError(std::string(op) + ": ground truth is not binary");
    }
  }
}

}  // namespace

Tensor bce(const Tensor& P, const Tensor& G, BceReduction reduction) {
  check_pair(P, G, "bce");
  const std::size_t n = P.size();
  const Real norm = reduction == BceReduction::mean ? 1.0 / static_cast<Real>(n) : 1.0;
  Real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real p = P.at(i), g = G.at(i);
    if (g > 0) total -= std::log(std::max(p, kLossEps));
    else total -= std::log(std::max(1.0 - p, kLossEps));
  }
  Tensor r = make_tensor({1}, {total * norm}, "bce");
  if (should_record({&P})) {
    record_op(r, [pn = P.node(), gn = G.node(), on = r.node(), norm] {
      if (on->grad.empty() || !pn->requires_grad) return;
      const Real g0 = on->grad[0] * norm;
      auto gp = pn->ensure_grad();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const Real p = pn->data[i];
        if (gn->data[i] > 0) {
          if (p > kLossEps) gp[i] -= g0 / p;
        } else if (1.0 - p > kLossEps) {
          gp[i] += g0 / (1.0 - p);
        }
      }
    });
  }
  return r;
}

Tensor iou_loss(const Tensor& P, const Tensor& G) {
  check_pair(P, G, "iou_loss");
  Real inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const Real p = P.at(i), g = G.at(i);
    inter += p * g;
    uni += p + g - p * g;
  }
  const Real I = inter + kIouSmooth, U = uni + kIouSmooth;
  Tensor r = make_tensor({1}, {1.0 - I / U}, "iou_loss");
  if (should_record({&P})) {
    record_op(r, [pn = P.node(), gn = G.node(), on = r.node(), I, U] {
      if (on->grad.empty() || !pn->requires_grad) return;
      const Real g0 = on->grad[0];
      auto gp = pn->ensure_grad();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const Real g = gn->data[i];
        // d(I/U)/dP = (G·U − I·(1 − G)) / U²
        gp[i] -= g0 * (g * U - I * (1.0 - g)) / (U * U);
      }
    });
  }
  return r;
}

Tensor joint_loss(const Tensor& P, const Tensor& G, BceReduction reduction) {
  return add(bce(P, G, reduction), iou_loss(P, G));
}

Tensor multilevel_loss(const std::vector<Tensor>& logits, const Tensor& G, BceReduction reduction) {
  if (logits.empty()) throw ContractError("multilevel_loss: no prediction levels");
  Tensor total;
  for (const Tensor& map : logits) {
    Tensor l = joint_loss(sigmoid(map), G, reduction);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

}  // namespace m3net
