#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "thermocast/tensor.hpp"

namespace thermocast {

class GradTape;

/// Handle to a value recorded on a GradTape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  GradTape& tape() const noexcept { return *tape_; }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class GradTape;
  Var(GradTape* tape, std::size_t id) : tape_(tape), id_(id) {}

  GradTape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to every node of the tape that
/// reached it.
class Gradients {
 public:
  /// d(loss)/d(v). Nodes the loss does not depend on get zeros.
  Tensor of(const Var& v) const;
  bool reached(const Var& v) const;

 private:
  friend class GradTape;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
};

/// Append-only record of primitive operations for reverse-mode
/// differentiation. Not copyable: Vars refer back to their tape.
class GradTape {
 public:
  /// Adds `grad_out` times the local Jacobian into each non-null entry of
  /// `grad_in` (one per recorded input, null when that input needs no
  /// gradient). Entries arrive zero-initialized on first use. `output` is the
  /// node's own forward value.
  using BackwardRule =
      std::function<void(const Tensor& output, const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Leaf that receives a gradient.
  Var parameter(Tensor value);
  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Records an operation result. The rule is dropped when no input needs a
  /// gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  /// Reverse sweep from a single-element loss.
  Gradients backward(const Var& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
  };

  // deque keeps references to node values stable while recording continues.
  std::deque<Node> nodes_;
};

}  // namespace thermocast
