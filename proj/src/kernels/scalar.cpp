#include "m3net/kernels.hpp"

namespace m3net::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* ap = a + p * m;
    const Real* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real api = ap[i];
      Real* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const Real* x, const Real* y, Real* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const Real* x, const Real* y, Real* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, Real alpha, const Real* x, Real* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

constexpr KernelTable kScalar{"scalar", gemm_nn, gemm_tn, axpy, add, mul, scale};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace m3net::kernels
