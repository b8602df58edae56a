#include "cortical/numcore/tape.hpp"

#include "cortical/numcore/kernels.hpp"

namespace cortical {

Tape& Var::tape() const {
  if (tape_ == nullptr) throw Error("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool Var::requires_grad() const { return tape().requires_grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("Var does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.requires_grad = value.requires_grad();
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Tensor value) {
  value.set_requires_grad(true);
  return leaf(std::move(value));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.value.set_requires_grad(false);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    check(p);
    n.parents.push_back(p.id_);
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id_].requires_grad;
}

bool Tape::has_grad(Var v) const {
  check(v);
  return nodes_[v.id_].has_grad;
}

Tensor Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id_];
  if (n.has_grad) return n.grad;
  return Tensor::zeros(n.value.shape(), n.value.dtype());
}

void Tape::accumulate(Var v, const Tensor& delta) {
  check(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (delta.numel() != n.value.numel() || delta.dtype() != n.value.dtype()) {
    throw ShapeError("gradient " + shape_str(delta.shape()) + " does not match value " +
                     shape_str(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = delta.reshaped(n.value.shape());
    n.has_grad = true;
    return;
  }
  dispatch_dtype(n.grad.dtype(), [&]<typename T>(std::type_identity<T>) {
    auto dst = n.grad.data<T>();
    auto src = delta.data<T>();
    kernels::active<T>().add(dst.size(), dst.data(), src.data(), dst.data());
  });
}

void Tape::accumulate(Var v, Tensor&& delta) {
  check(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (!n.has_grad && delta.numel() == n.value.numel() && delta.dtype() == n.value.dtype()) {
    n.grad = std::move(delta).reshaped(n.value.shape());
    n.has_grad = true;
    return;
  }
  accumulate(v, static_cast<const Tensor&>(delta));
}

void Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id_].value.numel() != 1) {
    throw ShapeError("backward() needs a single-element loss, got " +
                     shape_str(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  visited_ = 0;
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return;
  root.grad = Tensor::full(root.value.shape(), 1.0, root.value.dtype());
  root.has_grad = true;

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    ++visited_;
    // Callbacks only touch parents (lower ids) and never grow the tape.
    if (n.backward) n.backward(*this, n.grad);
  }
}

}  // namespace cortical
