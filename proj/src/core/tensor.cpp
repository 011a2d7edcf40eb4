#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/errors.hpp"

namespace capsnet {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) : Tensor(shape, std::vector<double>(capsnet::numel(shape), fill)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  for (auto e : shape)
    if (e == 0) raise(ErrorKind::dimension, "tensor extents must be positive, got " + to_string(shape));
  if (capsnet::numel(shape) != values.size())
    raise(ErrorKind::dimension, "shape " + to_string(shape) + " holds " + std::to_string(capsnet::numel(shape)) +
                                    " values, got " + std::to_string(values.size()));
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->value = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

const Shape& Tensor::shape() const {
  if (!impl_) raise(ErrorKind::contract, "use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    raise(ErrorKind::dimension, "axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return impl_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) raise(ErrorKind::contract, "use of undefined tensor");
  return impl_->value;
}

double Tensor::item() const {
  if (numel() != 1) raise(ErrorKind::contract, "item() on tensor of shape " + to_string(shape()));
  return impl_->value[0];
}

double Tensor::at(std::size_t flat_index) const {
  if (flat_index >= numel()) raise(ErrorKind::contract, "flat index out of range");
  return impl_->value[flat_index];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::requires_grad_(bool on) {
  if (!impl_) raise(ErrorKind::contract, "use of undefined tensor");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->value); }

// ---------------------------------------------------------------------------

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  Node node;
  node.output = output.impl();
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.impl());
  node.fn = std::move(fn);
  output.impl()->requires_grad = true;
  nodes_.push_back(std::move(node));
}

bool Tape::produced(const Tensor& t) const {
  return std::any_of(nodes_.rbegin(), nodes_.rend(), [&](const Node& n) { return n.output == t.impl(); });
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    raise(ErrorKind::contract, "backward needs a scalar loss, got " +
                                   (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  if (!produced(loss)) raise(ErrorKind::contract, "loss was not produced on this tape");

  for (auto& n : nodes_) n.output->grad.clear();
  loss.impl()->grad_buffer()[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->fn(it->output->grad, it->output->value);
  }
}

void Tape::clear() { nodes_.clear(); }

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

std::span<double> grad_sink(const Tensor& t) {
  if (!t.requires_grad()) return {};
  return t.impl()->grad_buffer();
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  for (double v : values)
    if (!std::isfinite(v)) raise(ErrorKind::domain, "operation produced a non-finite value");
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (!tape) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) tape->record(out, std::move(inputs), std::move(fn));
  return out;
}

}  // namespace capsnet
