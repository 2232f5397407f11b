#include "m3net/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace m3net {
namespace {

std::vector<std::size_t> coords_for(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (limit == 0 || limit >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t j = 0; j < limit; ++j) idx.push_back(j * (n - 1) / std::max<std::size_t>(limit - 1, 1));
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

Real eval_scalar(const ScalarFn& f) {
  NoGradScope no_grad;
  Tensor y = f();
  const Real v = y.item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite evaluation");
  return v;
}

}  // namespace

Real grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                const GradCheckOptions& options) {
  if (!(options.h >= 1e-6 && options.h <= 1e-3)) {
    throw ConfigError("grad_check: h must lie in [1e-6, 1e-3]");
  }
  std::vector<bool> previous;
  for (const Tensor& t : inputs) {
    previous.push_back(t.requires_grad());
    Tensor(t).set_requires_grad(true).zero_grad();
  }

  std::vector<std::vector<Real>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    tape.backward(y);
    for (const Tensor& t : inputs) {
      if (t.has_grad()) {
        analytic.emplace_back(t.grad().begin(), t.grad().end());
      } else {
        analytic.emplace_back(t.size(), 0.0);
      }
    }
  }

  Real worst = 0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti];
    auto data = t.mutable_data();
    for (std::size_t i : coords_for(t.size(), options.max_coords_per_tensor)) {
      const Real saved = data[i];
      data[i] = saved + options.h;
      const Real up = eval_scalar(f);
      data[i] = saved - options.h;
      const Real down = eval_scalar(f);
      data[i] = saved;
      const Real numeric = (up - down) / (2.0 * options.h);
      const Real err = std::abs(analytic[ti][i] - numeric) / std::max<Real>(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti];
    t.zero_grad();
    t.set_requires_grad(previous[ti]);
  }
  return worst;
}

Real grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, Real h) {
  GradCheckOptions options;
  options.h = h;
  return grad_check([&] { return f(x); }, {x}, options);
}

}  // namespace m3net
