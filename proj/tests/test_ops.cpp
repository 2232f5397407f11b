#include <cmath>
#include <numbers>

#include "doctest.h"
#include "m3net/gradcheck.hpp"
#include "test_util.hpp"

using namespace m3net;
using test::random_tensor;

namespace {

Tensor T(Shape s, std::vector<Real> v) { return make_tensor(std::move(s), std::move(v), "test"); }

std::vector<Real> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }


// Sum of out ⊙ w for fixed random w: every output coordinate matters.
Tensor scalarize(const Tensor& out, const Tensor& w) { return sum(mul(out, w)); }

}  // namespace

TEST_CASE("elementwise and matmul examples") {
  Tensor a = T({2, 2}, {1, 2, 3, 4}), b = T({2, 2}, {5, 6, 7, 8});
  CHECK(vec(add(a, b)) == std::vector<Real>{6, 8, 10, 12});
  CHECK(vec(sub(a, b)) == std::vector<Real>{-4, -4, -4, -4});
  CHECK(vec(mul(a, b)) == std::vector<Real>{5, 12, 21, 32});
  CHECK(vec(scale(a, 0.5)) == std::vector<Real>{0.5, 1, 1.5, 2});
  CHECK(vec(add_scalar(a, 1)) == std::vector<Real>{2, 3, 4, 5});
  CHECK(vec(add_rowvec(a, T({2}, {10, 20}))) == std::vector<Real>{11, 22, 13, 24});
  CHECK(vec(matmul(a, b)) == std::vector<Real>{19, 22, 43, 50});
  CHECK(vec(transpose(a)) == std::vector<Real>{1, 3, 2, 4});
  CHECK(sum(a).item() == 10);
  CHECK(mean(a).item() == 2.5);
  CHECK(vec(concat_cols({a, T({2, 1}, {9, 9})})) == std::vector<Real>{1, 2, 9, 3, 4, 9});
  CHECK(vec(slice_cols(T({2, 3}, {1, 2, 3, 4, 5, 6}), 1, 3)) == std::vector<Real>{2, 3, 5, 6});
  CHECK(reshape(a, {4}).shape() == Shape{4});
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tensor a = T({2, 2}, {1, 2, 3, 4}), c = T({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, c), DimensionError);
  CHECK_THROWS_AS(matmul(a, c), DimensionError);
  CHECK_THROWS_AS(reshape(a, {3}), DimensionError);
  CHECK_THROWS_AS(concat_cols({a, c}), DimensionError);
}

TEST_CASE("non-finite values are rejected at construction") {
  CHECK_THROWS_AS(T({1}, {std::nan("")}), NumericalError);
  CHECK_THROWS_AS(T({1}, {INFINITY}), NumericalError);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(1);
  Tensor x = random_tensor({5, 7}, rng, -30, 30);
  auto s = vec(softmax_rows(x));
  auto s2 = vec(softmax_rows(add_scalar(x, 100)));
  for (std::size_t r = 0; r < 5; ++r) {
    Real tot = 0;
    for (std::size_t c = 0; c < 7; ++c) tot += s[r * 7 + c];
    CHECK(tot == doctest::Approx(1).epsilon(1e-14));
  }
  CHECK(test::max_abs_diff(s, s2) < 1e-14);
}

TEST_CASE("sigmoid and gelu reference values") {
  auto s = vec(sigmoid(T({3}, {0, 2, -2})));
  CHECK(s[0] == 0.5);
  CHECK(s[1] == doctest::Approx(1 / (1 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(s[1] + s[2] == doctest::Approx(1).epsilon(1e-15));
  auto g = vec(gelu(T({3}, {0, 1, -1})));
  CHECK(g[0] == 0);
  CHECK(g[1] == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(g[1] - g[2] == doctest::Approx(1).epsilon(1e-14));
}

TEST_CASE("layer norm normalizes every row") {
  Rng rng(2);
  Tensor x = random_tensor({4, 6}, rng, -5, 5);
  auto y = vec(layer_norm(x, T({6}, std::vector<Real>(6, 1)), T({6}, std::vector<Real>(6, 0)), 1e-5));
  for (std::size_t r = 0; r < 4; ++r) {
    Real m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y[r * 6 + c];
    m /= 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y[r * 6 + c] - m) * (y[r * 6 + c] - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 6 == doctest::Approx(1).epsilon(1e-4));
  }
}

TEST_CASE("gather and scatter_add are adjoint") {
  Rng rng(4);
  Tensor x = random_tensor({6}, rng), y = random_tensor({5}, rng);
  std::vector<std::int64_t> idx{3, -1, 0, 3, 5};
  // <gather(x), y> == <x, scatter_add(y)>
  const Real lhs = sum(mul(gather(x, idx, {5}), y)).item();
  const Real rhs = sum(mul(x, scatter_add(y, idx, {6}))).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
  CHECK(gather(x, idx, {5}).at(1) == 0);
}

TEST_CASE("attention with uniform scores averages values") {
  Tensor q = T({1, 1, 2}, {0, 0}), k = T({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor v = T({1, 3, 2}, {1, 10, 2, 20, 3, 30});
  auto o = vec(attention(q, k, v, 1));
  CHECK(o[0] == doctest::Approx(2).epsilon(1e-15));
  CHECK(o[1] == doctest::Approx(20).epsilon(1e-15));
  std::vector<std::uint8_t> mask{1, 0, 0};
  auto om = vec(attention(q, k, v, 1, &mask));
  CHECK(om == std::vector<Real>{1, 10});
  std::vector<std::uint8_t> none{0, 0, 0};
  CHECK_THROWS_AS(attention(q, k, v, 1, &none), ContractError);
}

TEST_CASE("backward accumulates on the tape and is single-use") {
  Tensor x = T({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = sum(mul(x, x));
    tape.backward(y);
  }
  CHECK(x.grad()[0] == 2);
  CHECK(x.grad()[1] == 4);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("no-grad scope records nothing") {
  Tensor x = T({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope ng;
    (void)sum(mul(x, x));
  }
  CHECK(tape.size() == 0);
}

TEST_CASE("every primitive passes a central-difference check") {
  Rng rng(11);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  auto m = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng);
  auto gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng), v4 = random_tensor({4}, rng);
  const GradCheckOptions opt{};
  auto wa = random_tensor({3, 4}, rng);
  CHECK(grad_check([&] { return scalarize(mul(a, b), wa); }, {a, b}, opt) < 1e-7);
  CHECK(grad_check([&] { return scalarize(matmul(a, m), w); }, {a, m}, opt) < 1e-7);
  CHECK(grad_check([&] { return scalarize(softmax_rows(a), wa); }, {a}, opt) < 1e-7);
  CHECK(grad_check([&] { return scalarize(gelu(a), wa); }, {a}, opt) < 1e-7);
  CHECK(grad_check([&] { return scalarize(sigmoid(a), wa); }, {a}, opt) < 1e-7);
  CHECK(grad_check([&] { return scalarize(layer_norm(a, gamma, beta, 1e-5), wa); }, {a, gamma, beta}, opt) <
        1e-6);
  CHECK(grad_check([&] { return scalarize(add_rowvec(a, v4), wa); }, {a, v4}, opt) < 1e-7);
  auto q = random_tensor({2, 3, 4}, rng), k = random_tensor({2, 5, 4}, rng), vv = random_tensor({2, 5, 4}, rng);
  auto wq = random_tensor({2, 3, 4}, rng);
  CHECK(grad_check([&] { return scalarize(attention(q, k, vv, 2), wq); }, {q, k, vv}, opt) < 1e-7);
}
