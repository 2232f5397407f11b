#include "m3net/tensor.hpp"

#include <cmath>
#include <sstream>

namespace m3net {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<Real> Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape, std::size_t n) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != n) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(n) +
                         " values");
  }
}

}  // namespace

Tensor make_tensor(Shape shape, std::vector<Real> data, std::string_view op) {
  check_shape(shape, data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericalError(std::string(op) + ": non-finite value at index " + std::to_string(i));
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, Real value) {
  std::size_t n = numel(shape);
  return make_tensor(std::move(shape), std::vector<Real>(n, value), "full");
}

Tensor Tensor::from(Shape shape, std::vector<Real> data) {
  return make_tensor(std::move(shape), std::move(data), "from");
}

Tensor Tensor::scalar(Real value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data.size(); }

std::span<const Real> Tensor::data() const { return node_->data; }

std::span<Real> Tensor::mutable_data() { return node_->data; }

Real Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const Real> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone() const { return make_tensor(node_->shape, node_->data, "clone"); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(Backward fn) {
  if (consumed_) throw ContractError("tape already replayed; reset() before recording again");
  records_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& scalar_output) {
  if (consumed_) throw ContractError("backward called twice without reset");
  if (scalar_output.size() != 1) {
    throw DimensionError("backward needs a scalar output, got " + shape_str(scalar_output.shape()));
  }
  consumed_ = true;
  if (!scalar_output.requires_grad()) return;
  scalar_output.node()->ensure_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

void Tape::reset() {
  records_.clear();
  consumed_ = false;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record_op(const Tensor& out, Tape::Backward fn) {
  out.node()->requires_grad = true;
  g_active_tape->record(std::move(fn));
}

}  // namespace m3net
