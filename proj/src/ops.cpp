#include "m3net/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "m3net/kernels.hpp"

namespace m3net {
namespace {

using NodePtr = std::shared_ptr<detail::Node>;

const kernels::KernelTable& K() { return kernels::active(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }
std::size_t leading_rows(const Tensor& t) { return t.size() / last_dim(t); }

// Gradient of `out`, or empty span when nothing reached it.
std::span<const Real> out_grad(const NodePtr& out) { return out->grad; }

void accumulate(const NodePtr& into, std::span<const Real> g) {
  if (!into->requires_grad) return;
  K().axpy(g.size(), 1.0, g.data(), into->ensure_grad().data());
}

std::vector<Real> transposed(const Real* a, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  K().add(out.size(), a.data().data(), b.data().data(), out.data());
  Tensor r = make_tensor(a.shape(), std::move(out), "add");
  if (should_record({&a, &b})) {
    record_op(r, [an = a.node(), bn = b.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty()) return;
      accumulate(an, g);
      accumulate(bn, g);
    });
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor r = make_tensor(a.shape(), std::move(out), "sub");
  if (should_record({&a, &b})) {
    record_op(r, [an = a.node(), bn = b.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty()) return;
      accumulate(an, g);
      if (bn->requires_grad) K().axpy(g.size(), -1.0, g.data(), bn->ensure_grad().data());
    });
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  K().mul(out.size(), a.data().data(), b.data().data(), out.data());
  Tensor r = make_tensor(a.shape(), std::move(out), "mul");
  if (should_record({&a, &b})) {
    record_op(r, [an = a.node(), bn = b.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty()) return;
      std::vector<Real> tmp(g.size());
      if (an->requires_grad) {
        K().mul(g.size(), g.data(), bn->data.data(), tmp.data());
        accumulate(an, tmp);
      }
      if (bn->requires_grad) {
        K().mul(g.size(), g.data(), an->data.data(), tmp.data());
        accumulate(bn, tmp);
      }
    });
  }
  return r;
}

Tensor scale(const Tensor& a, Real s) {
  std::vector<Real> out(a.size());
  K().scale(out.size(), s, a.data().data(), out.data());
  Tensor r = make_tensor(a.shape(), std::move(out), "scale");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node(), s] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      K().axpy(g.size(), s, g.data(), an->ensure_grad().data());
    });
  }
  return r;
}

Tensor add_scalar(const Tensor& a, Real s) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (Real& v : out) v += s;
  Tensor r = make_tensor(a.shape(), std::move(out), "add_scalar");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node()] {
      auto g = out_grad(on);
      if (!g.empty()) accumulate(an, g);
    });
  }
  return r;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t c = last_dim(x);
  if (v.size() != c) {
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) + " vs rows of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = leading_rows(x);
  std::vector<Real> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) K().add(c, x.data().data() + r * c, v.data().data(), out.data() + r * c);
  Tensor res = make_tensor(x.shape(), std::move(out), "add_rowvec");
  if (should_record({&x, &v})) {
    record_op(res, [xn = x.node(), vn = v.node(), on = res.node(), rows, c] {
      auto g = out_grad(on);
      if (g.empty()) return;
      accumulate(xn, g);
      if (vn->requires_grad) {
        auto gv = vn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) K().axpy(c, 1.0, g.data() + r * c, gv.data());
      }
    });
  }
  return res;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, 0.0);
  K().gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  Tensor r = make_tensor({m, n}, std::move(out), "matmul");
  if (should_record({&a, &b})) {
    record_op(r, [an = a.node(), bn = b.node(), on = r.node(), m, k, n] {
      auto g = out_grad(on);
      if (g.empty()) return;
      if (an->requires_grad) {
        auto bt = transposed(bn->data.data(), k, n);
        K().gemm_nn(m, n, k, g.data(), bt.data(), an->ensure_grad().data());
      }
      if (bn->requires_grad) K().gemm_tn(k, m, n, an->data.data(), g.data(), bn->ensure_grad().data());
    });
  }
  return r;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: needs rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor r = make_tensor({n, m}, transposed(a.data().data(), m, n), "transpose");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node(), m, n] {
      auto g = out_grad(on);
      if (g.empty()) return;
      accumulate(an, transposed(g.data(), n, m));
    });
  }
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor r = make_tensor(std::move(shape), std::vector<Real>(a.data().begin(), a.data().end()),
                         "reshape");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node()] {
      auto g = out_grad(on);
      if (!g.empty()) accumulate(an, g);
    });
  }
  return r;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = leading_rows(parts[0]);
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) {
      throw DimensionError("concat_cols: leading shape " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    total += last_dim(p);
  }
  std::vector<Real> out(rows * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = last_dim(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * c, c, out.data() + r * total + offset);
    offset += c;
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor res = make_tensor(shape, std::move(out), "concat_cols");
  bool any = false;
  for (const Tensor& p : parts) any = any || should_record({&p});
  if (any) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    record_op(res, [nodes, on = res.node(), rows, total] {
      auto g = out_grad(on);
      if (g.empty()) return;
      std::size_t off = 0;
      for (const NodePtr& n : nodes) {
        const std::size_t c = n->shape.back();
        if (n->requires_grad) {
          auto gn = n->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            K().axpy(c, 1.0, g.data() + r * total + off, gn.data() + r * c);
        }
        off += c;
      }
    });
  }
  return res;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t c = last_dim(a);
  if (begin >= end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_str(a.shape()));
  }
  const std::size_t rows = leading_rows(a), w = end - begin;
  std::vector<Real> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.data().data() + r * c + begin, w, out.data() + r * w);
  Shape shape = a.shape();
  shape.back() = w;
  Tensor res = make_tensor(shape, std::move(out), "slice_cols");
  if (should_record({&a})) {
    record_op(res, [an = a.node(), on = res.node(), rows, c, w, begin] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      auto ga = an->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) K().axpy(w, 1.0, g.data() + r * w, ga.data() + r * c + begin);
    });
  }
  return res;
}

Tensor sigmoid(const Tensor& a) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = a.at(i);
    if (x >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const Real e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  Tensor r = make_tensor(a.shape(), std::move(out), "sigmoid");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real y = on->data[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
    });
  }
  return r;
}

Tensor gelu(const Tensor& a) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  Tensor r = make_tensor(a.shape(), std::move(out), "gelu");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      auto ga = an->ensure_grad();
      const Real inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real x = an->data[i];
        const Real cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const Real pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        ga[i] += g[i] * (cdf + x * pdf);
      }
    });
  }
  return r;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t c = last_dim(a), rows = leading_rows(a);
  std::vector<Real> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * c;
    Real* y = out.data() + r * c;
    const Real mx = *std::max_element(x, x + c);
    Real s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  Tensor res = make_tensor(a.shape(), std::move(out), "softmax_rows");
  if (should_record({&a})) {
    record_op(res, [an = a.node(), on = res.node(), rows, c] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      auto ga = an->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = on->data.data() + r * c;
        const Real* gy = g.data() + r * c;
        Real dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return res;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const std::size_t c = last_dim(x), rows = leading_rows(x);
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("layer_norm: affine " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs input " + shape_str(x.shape()));
  }
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  std::vector<Real> out(x.size()), xhat(x.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xi = x.data().data() + r * c;
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<Real>(c);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xi[j] - mu) * rstd[r];
      out[r * c + j] = xhat[r * c + j] * gamma.at(j) + beta.at(j);
    }
  }
  Tensor res = make_tensor(x.shape(), std::move(out), "layer_norm");
  if (should_record({&x, &gamma, &beta})) {
    record_op(res, [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = res.node(),
                    xhat = std::move(xhat), rstd = std::move(rstd), rows, c] {
      auto g = out_grad(on);
      if (g.empty()) return;
      if (gn->requires_grad || bn->requires_grad) {
        std::vector<Real> dg(c, 0.0), db(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            dg[j] += g[r * c + j] * xhat[r * c + j];
            db[j] += g[r * c + j];
          }
        accumulate(gn, dg);
        accumulate(bn, db);
      }
      if (!xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      const Real inv_c = 1.0 / static_cast<Real>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        Real s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = g[r * c + j] * gn->data[j];
          s1 += d;
          s2 += d * xhat[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = g[r * c + j] * gn->data[j];
          gx[r * c + j] += rstd[r] * (d - inv_c * s1 - xhat[r * c + j] * inv_c * s2);
        }
      }
    });
  }
  return res;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = last_dim(x);
  if (w.rank() != 2 || w.dim(0) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  const std::size_t out_c = w.dim(1), rows = leading_rows(x);
  if (b.defined() && b.size() != out_c) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  std::vector<Real> out(rows * out_c, 0.0);
  if (b.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(b.data().data(), out_c, out.data() + r * out_c);
  }
  K().gemm_nn(rows, in, out_c, x.data().data(), w.data().data(), out.data());
  Shape shape = x.shape();
  shape.back() = out_c;
  Tensor res = make_tensor(shape, std::move(out), "linear");
  if (should_record({&x, &w, &b})) {
    NodePtr bn = b.defined() ? b.node() : nullptr;
    record_op(res, [xn = x.node(), wn = w.node(), bn, on = res.node(), rows, in, out_c] {
      auto g = out_grad(on);
      if (g.empty()) return;
      if (xn->requires_grad) {
        auto wt = transposed(wn->data.data(), in, out_c);
        K().gemm_nn(rows, out_c, in, g.data(), wt.data(), xn->ensure_grad().data());
      }
      if (wn->requires_grad) K().gemm_tn(in, rows, out_c, xn->data.data(), g.data(), wn->ensure_grad().data());
      if (bn && bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) K().axpy(out_c, 1.0, g.data() + r * out_c, gb.data());
      }
    });
  }
  return res;
}

Tensor sum(const Tensor& a) {
  Real s = 0;
  for (Real v : a.data()) s += v;
  Tensor r = make_tensor({1}, {s}, "sum");
  if (should_record({&a})) {
    record_op(r, [an = a.node(), on = r.node()] {
      auto g = out_grad(on);
      if (g.empty() || !an->requires_grad) return;
      for (Real& v : an->ensure_grad()) v += g[0];
    });
  }
  return r;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<Real>(a.size())); }

Tensor gather(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape) {
  if (numel(out_shape) != index.size()) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for output " +
                         shape_str(out_shape));
  }
  std::vector<Real> out(index.size(), 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= x.size()) throw DimensionError("gather: index out of range");
    out[i] = x.at(static_cast<std::size_t>(index[i]));
  }
  Tensor r = make_tensor(std::move(out_shape), std::move(out), "gather");
  if (should_record({&x})) {
    record_op(r, [xn = x.node(), on = r.node(), index] {
      auto g = out_grad(on);
      if (g.empty() || !xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < index.size(); ++i)
        if (index[i] >= 0) gx[static_cast<std::size_t>(index[i])] += g[i];
    });
  }
  return r;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape) {
  const std::size_t c = last_dim(x), rows = leading_rows(x);
  if (out_shape.empty() || out_shape.back() != c || numel(out_shape) != index.size() * c) {
    throw DimensionError("gather_rows: " + std::to_string(index.size()) + " rows of " +
                         shape_str(x.shape()) + " into " + shape_str(out_shape));
  }
  std::vector<Real> out(index.size() * c, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    const auto src = static_cast<std::size_t>(index[i]);
    if (src >= rows) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(x.data().data() + src * c, c, out.data() + i * c);
  }
  Tensor r = make_tensor(std::move(out_shape), std::move(out), "gather_rows");
  if (should_record({&x})) {
    record_op(r, [xn = x.node(), on = r.node(), index, c] {
      auto g = out_grad(on);
      if (g.empty() || !xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < index.size(); ++i)
        if (index[i] >= 0) K().axpy(c, 1.0, g.data() + i * c, gx.data() + static_cast<std::size_t>(index[i]) * c);
    });
  }
  return r;
}

Tensor scatter_add(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape) {
  if (index.size() != x.size()) {
    throw DimensionError("scatter_add: " + std::to_string(index.size()) + " indices for " +
                         shape_str(x.shape()));
  }
  const std::size_t n = numel(out_shape);
  std::vector<Real> out(n, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= n) throw DimensionError("scatter_add: index out of range");
    out[static_cast<std::size_t>(index[i])] += x.at(i);
  }
  Tensor r = make_tensor(std::move(out_shape), std::move(out), "scatter_add");
  if (should_record({&x})) {
    record_op(r, [xn = x.node(), on = r.node(), index] {
      auto g = out_grad(on);
      if (g.empty() || !xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < index.size(); ++i)
        if (index[i] >= 0) gx[i] += g[static_cast<std::size_t>(index[i])];
    });
  }
  return r;
}

Tensor row_mix(const Tensor& x, const RowMix& mix, Shape out_shape) {
  const std::size_t c = last_dim(x), rows = leading_rows(x);
  const std::size_t out_rows = mix.out_rows();
  if (out_shape.empty() || out_shape.back() != c || numel(out_shape) != out_rows * c) {
    throw DimensionError("row_mix: output " + shape_str(out_shape) + " for " +
                         std::to_string(out_rows) + " rows of width " + std::to_string(c));
  }
  for (std::size_t s : mix.src)
    if (s >= rows) throw DimensionError("row_mix: source row out of range");
  std::vector<Real> out(out_rows * c, 0.0);
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t e = mix.offsets[r]; e < mix.offsets[r + 1]; ++e)
      K().axpy(c, mix.weight[e], x.data().data() + mix.src[e] * c, out.data() + r * c);
  Tensor res = make_tensor(std::move(out_shape), std::move(out), "row_mix");
  if (should_record({&x})) {
    record_op(res, [xn = x.node(), on = res.node(), mix, c] {
      auto g = out_grad(on);
      if (g.empty() || !xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (std::size_t r = 0; r + 1 < mix.offsets.size(); ++r)
        for (std::size_t e = mix.offsets[r]; e < mix.offsets[r + 1]; ++e)
          K().axpy(c, mix.weight[e], g.data() + r * c, gx.data() + mix.src[e] * c);
    });
  }
  return res;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const std::vector<std::uint8_t>* mask, const Tensor* bias) {
  auto batch_of = [](const Tensor& t) { return t.rank() == 3 ? t.dim(0) : std::size_t{1}; };
  if ((q.rank() != 2 && q.rank() != 3) || k.rank() != q.rank() || v.rank() != q.rank()) {
    throw DimensionError("attention: q/k/v ranks " + shape_str(q.shape()) + " " +
                         shape_str(k.shape()) + " " + shape_str(v.shape()));
  }
  const std::size_t B = batch_of(q);
  const std::size_t lq = q.shape()[q.rank() - 2], lk = k.shape()[k.rank() - 2];
  const std::size_t d = last_dim(q);
  if (batch_of(k) != B || batch_of(v) != B || last_dim(k) != d || last_dim(v) != d ||
      v.shape()[v.rank() - 2] != lk) {
    throw DimensionError("attention: incompatible q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " +
                         std::to_string(d));
  }
  if (mask && mask->size() != B * lq * lk) throw DimensionError("attention: mask size mismatch");
  if (bias && bias->defined() && bias->size() != heads * lq * lk) {
    throw DimensionError("attention: bias " + shape_str(bias->shape()) + " for " +
                         std::to_string(heads) + " heads of " + std::to_string(lq) + "x" +
                         std::to_string(lk));
  }
  const bool has_bias = bias && bias->defined();
  const std::size_t dh = d / heads;
  const Real inv_scale = 1.0 / std::sqrt(static_cast<Real>(dh));
  const auto& KT = K();

  std::vector<Real> probs(B * heads * lq * lk);
  std::vector<Real> out(B * lq * d, 0.0);
  std::vector<Real> qh(lq * dh), kht(dh * lk), vh(lk * dh), oh(lq * dh);
  const Real* qd = q.data().data();
  const Real* kd = k.data().data();
  const Real* vd = v.data().data();

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < lq; ++i)
        std::copy_n(qd + (b * lq + i) * d + h * dh, dh, qh.data() + i * dh);
      for (std::size_t j = 0; j < lk; ++j)
        for (std::size_t t = 0; t < dh; ++t) {
          kht[t * lk + j] = kd[(b * lk + j) * d + h * dh + t];
          vh[j * dh + t] = vd[(b * lk + j) * d + h * dh + t];
        }
      Real* p = probs.data() + (b * heads + h) * lq * lk;
      std::fill_n(p, lq * lk, 0.0);
      KT.gemm_nn(lq, dh, lk, qh.data(), kht.data(), p);
      for (std::size_t i = 0; i < lq; ++i) {
        Real* row = p + i * lk;
        const std::uint8_t* mrow = mask ? mask->data() + (b * lq + i) * lk : nullptr;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
          row[j] *= inv_scale;
          if (has_bias) row[j] += bias->at((h * lq + i) * lk + j);
          if (!mrow || mrow[j]) mx = std::max(mx, row[j]);
        }
        if (mx == -std::numeric_limits<Real>::infinity()) {
          throw ContractError("attention: query row " + std::to_string(i) + " of batch " +
                              std::to_string(b) + " has every key masked");
        }
        Real s = 0;
        for (std::size_t j = 0; j < lk; ++j) {
          row[j] = (!mrow || mrow[j]) ? std::exp(row[j] - mx) : 0.0;
          s += row[j];
        }
        for (std::size_t j = 0; j < lk; ++j) row[j] /= s;
      }
      std::fill(oh.begin(), oh.end(), 0.0);
      KT.gemm_nn(lq, lk, dh, p, vh.data(), oh.data());
      for (std::size_t i = 0; i < lq; ++i)
        std::copy_n(oh.data() + i * dh, dh, out.data() + (b * lq + i) * d + h * dh);
    }
  }

  Tensor res = make_tensor(q.shape(), std::move(out), "attention");
  const Tensor* bias_t = has_bias ? bias : nullptr;
  if (should_record({&q, &k, &v, bias_t})) {
    NodePtr bn = has_bias ? bias->node() : nullptr;
    record_op(res, [qn = q.node(), kn = k.node(), vn = v.node(), bn, on = res.node(),
                    probs = std::move(probs), B, heads, lq, lk, d, dh, inv_scale] {
      auto g = out_grad(on);
      if (g.empty()) return;
      const auto& KB = K();
      std::vector<Real> qh(lq * dh), kh(lk * dh), vht(dh * lk), goh(lq * dh);
      std::vector<Real> dp(lq * lk), dq(lq * dh), dk(lk * dh), dv(lk * dh);
      std::span<Real> gq, gk, gv, gb;
      if (qn->requires_grad) gq = qn->ensure_grad();
      if (kn->requires_grad) gk = kn->ensure_grad();
      if (vn->requires_grad) gv = vn->ensure_grad();
      if (bn && bn->requires_grad) gb = bn->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const Real* p = probs.data() + (b * heads + h) * lq * lk;
          for (std::size_t i = 0; i < lq; ++i) {
            std::copy_n(qn->data.data() + (b * lq + i) * d + h * dh, dh, qh.data() + i * dh);
            std::copy_n(g.data() + (b * lq + i) * d + h * dh, dh, goh.data() + i * dh);
          }
          for (std::size_t j = 0; j < lk; ++j)
            for (std::size_t t = 0; t < dh; ++t) {
              kh[j * dh + t] = kn->data[(b * lk + j) * d + h * dh + t];
              vht[t * lk + j] = vn->data[(b * lk + j) * d + h * dh + t];
            }
          // dP = dO·Vᵀ, dV = Pᵀ·dO
          std::fill(dp.begin(), dp.end(), 0.0);
          KB.gemm_nn(lq, dh, lk, goh.data(), vht.data(), dp.data());
          if (!gv.empty()) {
            std::fill(dv.begin(), dv.end(), 0.0);
            KB.gemm_tn(lk, lq, dh, p, goh.data(), dv.data());
            for (std::size_t j = 0; j < lk; ++j)
              KB.axpy(dh, 1.0, dv.data() + j * dh, gv.data() + (b * lk + j) * d + h * dh);
          }
          // dS = P ⊙ (dP − rowsum(dP ⊙ P)); reuse dp for dS.
          for (std::size_t i = 0; i < lq; ++i) {
            Real dot = 0;
            for (std::size_t j = 0; j < lk; ++j) dot += dp[i * lk + j] * p[i * lk + j];
            for (std::size_t j = 0; j < lk; ++j) dp[i * lk + j] = p[i * lk + j] * (dp[i * lk + j] - dot);
          }
          if (!gb.empty()) KB.axpy(lq * lk, 1.0, dp.data(), gb.data() + h * lq * lk);
          if (!gq.empty()) {
            std::fill(dq.begin(), dq.end(), 0.0);
            KB.gemm_nn(lq, lk, dh, dp.data(), kh.data(), dq.data());
            for (std::size_t i = 0; i < lq; ++i)
              KB.axpy(dh, inv_scale, dq.data() + i * dh, gq.data() + (b * lq + i) * d + h * dh);
          }
          if (!gk.empty()) {
            std::fill(dk.begin(), dk.end(), 0.0);
            KB.gemm_tn(lk, lq, dh, dp.data(), qh.data(), dk.data());
            for (std::size_t j = 0; j < lk; ++j)
              KB.axpy(dh, inv_scale, dk.data() + j * dh, gk.data() + (b * lk + j) * d + h * dh);
          }
        }
      }
    });
  }
  return res;
}

}  // namespace m3net
