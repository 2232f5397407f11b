#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m3net/error.hpp"

namespace m3net {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;

  std::span<Real> ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage, the way framework
/// tensors do; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor from(Shape shape, std::vector<Real> data);
  static Tensor scalar(Real value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const Real> data() const;
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const Real> grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Same data, detached from any recorded graph.
  Tensor detach() const { return clone(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_tensor(Shape, std::vector<Real>, std::string_view);
};

/// Builds an op result, rejecting non-finite values.
Tensor make_tensor(Shape shape, std::vector<Real> data, std::string_view op);

/// Ordered record of executed differentiable primitives.
///
/// Ops append one backward closure per execution while a tape is active on
/// the calling thread. backward() replays the closures in exact reverse
/// order; gradients accumulate additively into every node that requires
/// them. A tape can be replayed once; reset() clears it for reuse.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn);
  void backward(const Tensor& scalar_output);
  void reset();
  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<Backward> records_;
  bool consumed_ = false;
};

/// Tape receiving records on this thread, or nullptr (inference mode).
Tape* active_tape();

/// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// True when a tape is active and any input needs a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Marks `out` as differentiable and appends `fn` to the active tape.
void record_op(const Tensor& out, Tape::Backward fn);

}  // namespace m3net
