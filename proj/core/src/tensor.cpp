#include "moma/tensor.hpp"

#include <sstream>

namespace moma {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->values.assign(shape_numel(shape), value);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) +
                         " expects " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return from_values({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("tensor: use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return values().size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.empty()) throw DimensionError("tensor: rank-0 tensor has no rows");
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() != 2) {
    throw DimensionError("tensor: cols() needs a rank-2 tensor, shape is " +
                         shape_to_string(s));
  }
  return s[1];
}

std::span<const double> Tensor::values() const& {
  if (!impl_) throw ContractError("tensor: use of an undefined tensor");
  return impl_->values;
}

std::span<double> Tensor::values_mut() & {
  if (!impl_) throw ContractError("tensor: use of an undefined tensor");
  return impl_->values;
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return values()[i * cols() + j];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("tensor: item() on non-scalar of shape " +
                        shape_to_string(shape()));
  }
  return values()[0];
}

bool Tensor::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

std::span<const double> Tensor::grad() const& {
  if (!has_grad()) {
    throw ContractError("tensor: gradient requested but none was computed");
  }
  return *impl_->grad;
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.reset();
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (!impl_) throw ContractError("tensor: use of an undefined tensor");
  if (delta.size() != impl_->values.size()) {
    throw DimensionError("tensor: gradient size mismatch");
  }
  if (!impl_->grad) impl_->grad.emplace(impl_->values.size(), 0.0);
  auto& g = *impl_->grad;
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

Tensor Tensor::detached() const {
  Tensor t = Tensor::from_values(shape(), {values().begin(), values().end()});
  return t;
}

Tensor Tensor::clone() const {
  return Tensor::from_values(shape(), {values().begin(), values().end()},
                             requires_grad());
}

void Tape::record(Tensor result, std::function<void()> backprop) {
  if (consumed_) {
    throw ContractError("tape: recording onto a consumed tape");
  }
  nodes_.push_back({std::move(result), std::move(backprop)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw ContractError("tape: backward called twice on the same tape");
  }
  if (!loss.defined() || !loss.is_scalar()) {
    throw ContractError("tape: backward requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("tape: loss does not depend on any trainable tensor");
  }
  bool on_tape = false;
  for (const auto& node : nodes_) {
    if (node.result.id() == loss.id()) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) {
    throw ContractError("tape: loss was not produced by this tape");
  }
  consumed_ = true;

  Tensor seed = loss;
  const double one = 1.0;
  seed.accumulate_grad(std::span<const double>(&one, 1));
  // Reverse replay; nodes whose result never received a gradient are not
  // reachable from the loss and are skipped.
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->result.has_grad()) it->backprop();
  }
  nodes_.clear();
}

}  // namespace moma
