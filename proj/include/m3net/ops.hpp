#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "m3net/tensor.hpp"

namespace m3net {

// Element-wise arithmetic. Operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);

/// Adds v[c] to every row of x[..., c].
Tensor add_rowvec(const Tensor& x, const Tensor& v);

/// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Concatenation along the last axis; leading extents must agree.
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Columns [begin, end) of the last axis.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

Tensor sigmoid(const Tensor& a);
/// Exact GELU, x·Φ(x).
Tensor gelu(const Tensor& a);
/// Softmax over the last axis, stabilized by the row maximum.
Tensor softmax_rows(const Tensor& a);
/// Per-row normalization over the last axis followed by gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps);
/// x[..., in] · w[in×out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// out[i] = x[index[i]], or 0 where index[i] < 0.
Tensor gather(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape);
/// Row gather over the last axis: out row i = x row index[i] (zero row where negative).
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape);
/// out[index[i]] += x[i] for index[i] >= 0; the adjoint of gather.
Tensor scatter_add(const Tensor& x, const std::vector<std::int64_t>& index, Shape out_shape);

/// Sparse linear map over rows: out row r = Σ weight·x row src over the
/// entries [offsets[r], offsets[r+1]).
struct RowMix {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> src;
  std::vector<Real> weight;
  std::size_t out_rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};
Tensor row_mix(const Tensor& x, const RowMix& mix, Shape out_shape);

/// Batched multi-head scaled dot-product attention.
///
/// q[B×lq×d], k[B×lk×d], v[B×lk×d]; heads split d into equal channel slices
/// and scores are scaled by 1/√(d/heads). `mask` (B·lq·lk bytes, nonzero =
/// may attend) and `bias` ([heads×lq×lk], shared across the batch) are
/// optional. A query row with no admissible key is a ContractError.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const std::vector<std::uint8_t>* mask = nullptr, const Tensor* bias = nullptr);

}  // namespace m3net
