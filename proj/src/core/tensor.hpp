#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace capsnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles. Copies share storage; the value array is
/// only written by initializers and the optimizer, never by operations.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  Tensor& requires_grad_(bool on = true);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Fresh leaf holding a copy of the values, with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

/// Records differentiable operations in execution order. Operations record
/// into the tape installed on the current thread by a TapeScope; with no
/// tape installed they compute values only.
class Tape {
 public:
  /// Receives the output gradient and output value and accumulates into
  /// the inputs' gradients.
  using BackwardFn = std::function<void(std::span<const double> out_grad, std::span<const double> out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  /// Reverse sweep from a scalar loss. Leaf gradients accumulate across
  /// calls; intermediate gradients are reset at the start of each sweep.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  bool produced(const Tensor& t) const;

  static Tape* active();

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;

  friend class TapeScope;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread (evaluation passes, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

void backward(const Tensor& loss, Tape& tape);

/// Gradient sink for an op input: the input's grad buffer when it takes
/// gradients, otherwise an empty span.
std::span<double> grad_sink(const Tensor& t);

/// Builds an op result and, when a tape is active and some input requires
/// gradients, records the backward rule for it.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   Tape::BackwardFn fn);

}  // namespace capsnet
