#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moma/errors.hpp"

namespace moma {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense 64-bit tensor with an optional gradient slot. Copies are shallow:
// two Tensor handles may refer to the same storage, which is how parameters
// are shared between a model stack, the optimizer, and a recording tape.
// Values are only mutated off-tape (optimizer step, momentum update).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Extents for the common 2-d case.
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return numel() == 1; }

  // Spans alias the underlying storage, so they may not be taken from a
  // temporary handle; bind the Tensor first.
  std::span<const double> values() const&;
  std::span<const double> values() && = delete;
  // Off-tape mutation; never call while a tape recorded this tensor's step.
  std::span<double> values_mut() &;
  std::span<double> values_mut() && = delete;
  double at(std::size_t i, std::size_t j) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() && = delete;
  void clear_grad();
  void accumulate_grad(std::span<const double> delta);

  // Value copy that does not require gradient.
  Tensor detached() const;
  // Deep copy with the same requires_grad flag.
  Tensor clone() const;

  // Identity of the underlying storage; used to dedupe tape leaves.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;
  };
  std::shared_ptr<Impl> impl_;
};

// Single-use record of differentiable operations. Ops append a node when at
// least one input requires grad; backward replays the nodes in reverse and
// accumulates into each reachable tensor's grad slot.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor result, std::function<void()> backprop);
  // Seeds d(loss)/d(loss) = 1 and propagates. Throws ContractError if the
  // loss is not a recorded scalar or if the tape was already consumed.
  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor result;
    std::function<void()> backprop;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace moma
