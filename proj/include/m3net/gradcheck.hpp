#pragma once

#include <functional>
#include <vector>

#include "m3net/tensor.hpp"

namespace m3net {

using ScalarFn = std::function<Tensor()>;

struct GradCheckOptions {
  Real h = 1e-5;
  /// Coordinates checked per tensor; 0 checks every coordinate. When
  /// limited, coordinates are spread evenly across the tensor.
  std::size_t max_coords_per_tensor = 0;
};

/// Max over checked coordinates of |analytic − central difference| /
/// max(1, |central difference|).
///
/// `f` must rebuild its output from the current contents of `inputs`, which
/// are perturbed in place and restored. The tensors are flagged as requiring
/// gradients for the analytic pass. h must lie in [1e-6, 1e-3].
Real grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                const GradCheckOptions& options = {});

/// Single-input form: f(x) is evaluated on the perturbed x.
Real grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, Real h = 1e-5);

}  // namespace m3net
