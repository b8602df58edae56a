#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cortical/numcore/tensor.hpp"

namespace cortical {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  DType dtype() const { return value().dtype(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records primitive operations in execution order and replays them in
// reverse to accumulate gradients. Creation order is a topological order, so
// backward() is a single reverse sweep. A tape is single-threaded; use one
// tape per sample or batch to parallelize.
class Tape {
 public:
  // Receives the gradient of the node's output and accumulates into parents
  // through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose requires_grad flag is taken from the tensor.
  Var leaf(Tensor value);
  Var param(Tensor value);
  Var constant(Tensor value);

  // Records an op output. The node requires grad iff any parent does; when
  // none does, backward is dropped.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. The loss must
  // be a single-element tensor. Gradients of previous calls are cleared.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;
  // Gradient of the last backward(); zeros if the node received none.
  Tensor grad(Var v) const;

  // Adds delta into v's gradient buffer (no-op unless v requires grad).
  void accumulate(Var v, const Tensor& delta);
  // Same, but takes ownership of delta to avoid a copy on first arrival.
  void accumulate(Var v, Tensor&& delta);

  std::size_t size() const { return nodes_.size(); }
  // Number of nodes whose backward ran in the last sweep.
  std::size_t visited_count() const { return visited_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var push(Node node);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

}  // namespace cortical
