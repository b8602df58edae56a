#include "cortical/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cortical/numcore/kernels.hpp"

namespace cortical::ops {
namespace {

template <typename T>
using Id = std::type_identity<T>;

void require_same_dtype(Var a, Var b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw TypeError(std::string(op) + ": dtype mismatch " + std::string(dtype_name(a.dtype())) +
                    " vs " + std::string(dtype_name(b.dtype())));
  }
}

// ---------------------------------------------------------------------------
// Broadcasting machinery

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;  // in a's buffer, per out axis (0 = broadcast)
  std::vector<std::size_t> b_strides;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t in_axis = in.size() - 1 - k;
    const std::size_t out_axis = rank - 1 - k;
    strides[out_axis] = (in[in_axis] == 1 && out[out_axis] != 1) ? 0 : stride;
    stride *= in[in_axis];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a, b);
  p.a_strides = aligned_strides(a, p.out);
  p.b_strides = aligned_strides(b, p.out);
  return p;
}

// Calls row(a_offset, a_inner_stride, b_offset, b_inner_stride, out_offset, n)
// for every innermost row of the broadcast output, in row-major order.
template <typename RowFn>
void for_each_row(const BroadcastPlan& p, RowFn&& row) {
  const std::size_t rank = p.out.size();
  if (rank == 0) {
    row(0, 0, 0, 0, 0, 1);
    return;
  }
  const std::size_t n = p.out[rank - 1];
  const std::size_t rows = n == 0 ? 0 : shape_numel(p.out) / n;
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ao = 0, bo = 0;
    for (std::size_t ax = 0; ax + 1 < rank; ++ax) {
      ao += idx[ax] * p.a_strides[ax];
      bo += idx[ax] * p.b_strides[ax];
    }
    row(ao, p.a_strides[rank - 1], bo, p.b_strides[rank - 1], r * n, n);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      if (++idx[ax] < p.out[ax]) break;
      idx[ax] = 0;
    }
  }
}

enum class BinKind { add, sub, mul, div };

template <typename T>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinKind kind) {
  const BroadcastPlan p = plan_broadcast(a.shape(), b.shape());
  Tensor out(p.out, dtype_of<T>());
  const T* pa = a.data<T>().data();
  const T* pb = b.data<T>().data();
  T* po = out.data<T>().data();
  const auto& k = kernels::active<T>();
  auto vec = kind == BinKind::add ? k.add : kind == BinKind::sub ? k.sub
           : kind == BinKind::mul ? k.mul : k.div;
  for_each_row(p, [&](std::size_t ao, std::size_t as, std::size_t bo, std::size_t bs,
                      std::size_t oo, std::size_t n) {
    if (as == 1 && bs == 1) {
      vec(n, pa + ao, pb + bo, po + oo);
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const T x = pa[ao + i * as];
      const T y = pb[bo + i * bs];
      T r;
      switch (kind) {
        case BinKind::add: r = x + y; break;
        case BinKind::sub: r = x - y; break;
        case BinKind::mul: r = x * y; break;
        default: r = x / y; break;
      }
      po[oo + i] = r;
    }
  });
  return out;
}

// Sums g (broadcast output shape) down to `shape`, visiting g in row-major
// order so the accumulation order is fixed.
template <typename T>
Tensor reduce_to(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out(shape, dtype_of<T>());
  const auto strides = aligned_strides(shape, g.shape());
  const std::size_t rank = g.shape().size();
  const T* pg = g.data<T>().data();
  T* po = out.data<T>().data();
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = g.numel();
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t o = 0;
    for (std::size_t ax = 0; ax < rank; ++ax) o += idx[ax] * strides[ax];
    po[o] += pg[i];
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < g.shape()[ax]) break;
      idx[ax] = 0;
    }
  }
  return out;
}

template <typename T, typename Fn>
Tensor map_unary(const Tensor& a, Fn&& fn) {
  Tensor out(a.shape(), dtype_of<T>());
  auto src = a.data<T>();
  auto dst = out.data<T>();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

template <typename T>
T stable_sigmoid(T x) {
  const T c = std::clamp<T>(x, T(-kSigmoidClamp), T(kSigmoidClamp));
  if (c >= T(0)) return T(1) / (T(1) + std::exp(-c));
  const T e = std::exp(c);
  return e / (T(1) + e);
}

Var binary(Elementwise op, Var a, Var b) {
  require_same_dtype(a, b, "elementwise");
  Tape& tape = a.tape();
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    switch (op) {
      case Elementwise::add:
        return tape.record(binary_broadcast<T>(av, bv, BinKind::add), {a, b},
                           [a, b](Tape& t, const Tensor& g) {
                             t.accumulate(a, reduce_to<T>(g, a.shape()));
                             t.accumulate(b, reduce_to<T>(g, b.shape()));
                           });
      case Elementwise::sub:
        return tape.record(binary_broadcast<T>(av, bv, BinKind::sub), {a, b},
                           [a, b](Tape& t, const Tensor& g) {
                             t.accumulate(a, reduce_to<T>(g, a.shape()));
                             if (b.requires_grad()) {
                               Tensor ng = g;
                               auto d = ng.data<T>();
                               kernels::active<T>().scale(d.size(), T(-1), d.data(), d.data());
                               t.accumulate(b, reduce_to<T>(ng, b.shape()));
                             }
                           });
      case Elementwise::mul:
        return tape.record(binary_broadcast<T>(av, bv, BinKind::mul), {a, b},
                           [a, b](Tape& t, const Tensor& g) {
                             if (a.requires_grad()) {
                               t.accumulate(a, reduce_to<T>(binary_broadcast<T>(g, b.value(), BinKind::mul), a.shape()));
                             }
                             if (b.requires_grad()) {
                               t.accumulate(b, reduce_to<T>(binary_broadcast<T>(g, a.value(), BinKind::mul), b.shape()));
                             }
                           });
      case Elementwise::div: {
        for (T y : bv.data<T>()) {
          if (y == T(0)) throw DomainError("division by zero");
        }
        Tensor out = binary_broadcast<T>(av, bv, BinKind::div);
        return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
          const Tensor ga = binary_broadcast<T>(g, b.value(), BinKind::div);
          if (a.requires_grad()) t.accumulate(a, reduce_to<T>(ga, a.shape()));
          if (b.requires_grad()) {
            // d(a/b)/db = -(a/b)/b
            Tensor gb = binary_broadcast<T>(ga, a.value(), BinKind::mul);
            gb = binary_broadcast<T>(gb, b.value(), BinKind::div);
            auto d = gb.data<T>();
            kernels::active<T>().scale(d.size(), T(-1), d.data(), d.data());
            t.accumulate(b, reduce_to<T>(gb, b.shape()));
          }
        });
      }
      default:
        throw Error("not a binary op");
    }
  });
}

Var unary(Elementwise op, Var a, ClampRange range) {
  Tape& tape = a.tape();
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    const Tensor& av = a.value();
    switch (op) {
      case Elementwise::exp: {
        Tensor out = map_unary<T>(av, [](T x) { return std::exp(x); });
        Var r = tape.record(std::move(out), {}, nullptr);
        return tape.record(r.value(), {a}, [a, r](Tape& t, const Tensor& g) {
          Tensor d = binary_broadcast<T>(g, r.value(), BinKind::mul);
          t.accumulate(a, std::move(d));
        });
      }
      case Elementwise::log: {
        for (T x : av.data<T>()) {
          if (!(x > T(0))) throw DomainError("log of non-positive value");
        }
        return tape.record(map_unary<T>(av, [](T x) { return std::log(x); }), {a},
                           [a](Tape& t, const Tensor& g) {
                             t.accumulate(a, binary_broadcast<T>(g, a.value(), BinKind::div));
                           });
      }
      case Elementwise::sigmoid: {
        Tensor out = map_unary<T>(av, [](T x) { return stable_sigmoid(x); });
        return tape.record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
          const auto x = a.value().data<T>();
          const auto gd = g.data<T>();
          Tensor d(a.shape(), dtype_of<T>());
          auto dd = d.data<T>();
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::abs(x[i]) > T(kSigmoidClamp)) continue;
            const T s = stable_sigmoid(x[i]);
            dd[i] = gd[i] * s * (T(1) - s);
          }
          t.accumulate(a, std::move(d));
        });
      }
      case Elementwise::clamp: {
        const T lo = static_cast<T>(range.lo);
        const T hi = static_cast<T>(range.hi);
        if (lo > hi) throw DomainError("clamp with lo > hi");
        Tensor out = map_unary<T>(av, [&](T x) { return std::clamp(x, lo, hi); });
        return tape.record(std::move(out), {a}, [a, lo, hi](Tape& t, const Tensor& g) {
          const auto x = a.value().data<T>();
          const auto gd = g.data<T>();
          Tensor d(a.shape(), dtype_of<T>());
          auto dd = d.data<T>();
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] >= lo && x[i] <= hi) dd[i] = gd[i];
          }
          t.accumulate(a, std::move(d));
        });
      }
      default:
        throw Error("not a unary op");
    }
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[rank - 1 - k] = da == 1 ? db : da;
  }
  return out;
}

Var elementwise(Elementwise op, Var a, std::optional<Var> b, ClampRange range) {
  switch (op) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
    case Elementwise::div:
      if (!b) throw ShapeError("binary elementwise op needs two operands");
      return binary(op, a, *b);
    default:
      if (b) throw ShapeError("unary elementwise op takes one operand");
      return unary(op, a, range);
  }
}

Var add(Var a, Var b) { return elementwise(Elementwise::add, a, b); }
Var sub(Var a, Var b) { return elementwise(Elementwise::sub, a, b); }
Var mul(Var a, Var b) { return elementwise(Elementwise::mul, a, b); }
Var div(Var a, Var b) { return elementwise(Elementwise::div, a, b); }
Var exp(Var a) { return elementwise(Elementwise::exp, a); }
Var log(Var a) { return elementwise(Elementwise::log, a); }
Var sigmoid(Var a) { return elementwise(Elementwise::sigmoid, a); }
Var clamp(Var a, double lo, double hi) {
  return elementwise(Elementwise::clamp, a, std::nullopt, ClampRange{lo, hi});
}

Var relu(Var a) {
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(a.shape(), dtype_of<T>());
    const auto x = a.value().data<T>();
    kernels::active<T>().relu(x.size(), x.data(), out.data<T>().data());
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
      Tensor d(a.shape(), dtype_of<T>());
      const auto x = a.value().data<T>();
      kernels::active<T>().relu_grad(x.size(), x.data(), g.data<T>().data(), d.data<T>().data());
      t.accumulate(a, std::move(d));
    });
  });
}

Var sqrt(Var a) {
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    for (T x : a.value().data<T>()) {
      if (x < T(0)) throw DomainError("sqrt of negative value");
    }
    Tensor out = map_unary<T>(a.value(), [](T x) { return std::sqrt(x); });
    Var r = a.tape().record(std::move(out), {}, nullptr);
    return a.tape().record(r.value(), {a}, [a, r](Tape& t, const Tensor& g) {
      const auto s = r.value().data<T>();
      const auto gd = g.data<T>();
      Tensor d(a.shape(), dtype_of<T>());
      auto dd = d.data<T>();
      for (std::size_t i = 0; i < s.size(); ++i) dd[i] = gd[i] / (T(2) * s[i]);
      t.accumulate(a, std::move(d));
    });
  });
}

Var scale(Var a, double factor) {
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(a.shape(), dtype_of<T>());
    const auto x = a.value().data<T>();
    const T f = static_cast<T>(factor);
    kernels::active<T>().scale(x.size(), f, x.data(), out.data<T>().data());
    return a.tape().record(std::move(out), {a}, [a, f](Tape& t, const Tensor& g) {
      Tensor d(a.shape(), dtype_of<T>());
      const auto gd = g.data<T>();
      kernels::active<T>().scale(gd.size(), f, gd.data(), d.data<T>().data());
      t.accumulate(a, std::move(d));
    });
  });
}

Var add_scalar(Var a, double value) {
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    const T v = static_cast<T>(value);
    Tensor out = map_unary<T>(a.value(), [v](T x) { return x + v; });
    return a.tape().record(std::move(out), {a},
                           [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var constant_like(Var a, const Tensor& value) {
  return a.tape().constant(value.astype(a.dtype()));
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    double acc = 0.0;
    for (T x : a.value().data<T>()) acc += static_cast<double>(x);
    return a.tape().record(Tensor::scalar(acc, dtype_of<T>()), {a},
                           [a](Tape& t, const Tensor& g) {
                             t.accumulate(a, Tensor::full(a.shape(), g.item(), dtype_of<T>()));
                           });
  });
}

Var mean(Var a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

}  // namespace

Var sum_axis(Var a, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  const Shape out_shape = reduced_shape(a.shape(), axis, keepdim);
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    const T* x = a.value().data<T>().data();
    T* o = out.data<T>().data();
    const auto& k = kernels::active<T>();
    for (std::size_t p = 0; p < sp.outer; ++p) {
      T* dst = o + p * sp.inner;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        k.add(sp.inner, dst, x + (p * sp.extent + e) * sp.inner, dst);
      }
    }
    return a.tape().record(std::move(out), {a}, [a, sp](Tape& t, const Tensor& g) {
      Tensor d(a.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      const T* gd = g.data<T>().data();
      for (std::size_t p = 0; p < sp.outer; ++p) {
        for (std::size_t e = 0; e < sp.extent; ++e) {
          std::copy_n(gd + p * sp.inner, sp.inner, dd + (p * sp.extent + e) * sp.inner);
        }
      }
      t.accumulate(a, std::move(d));
    });
  });
}

Var max_axis(Var a, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (sp.extent == 0) throw ShapeError("max over empty axis");
  const Shape out_shape = reduced_shape(a.shape(), axis, keepdim);
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    std::vector<std::size_t> argmax(sp.outer * sp.inner);
    const T* x = a.value().data<T>().data();
    T* o = out.data<T>().data();
    for (std::size_t p = 0; p < sp.outer; ++p) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        std::size_t best = p * sp.extent * sp.inner + i;
        for (std::size_t e = 1; e < sp.extent; ++e) {
          const std::size_t at = (p * sp.extent + e) * sp.inner + i;
          if (x[at] > x[best]) best = at;
        }
        o[p * sp.inner + i] = x[best];
        argmax[p * sp.inner + i] = best;
      }
    }
    return a.tape().record(std::move(out), {a},
                           [a, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                             Tensor d(a.shape(), dtype_of<T>());
                             T* dd = d.data<T>().data();
                             const T* gd = g.data<T>().data();
                             for (std::size_t i = 0; i < argmax.size(); ++i) dd[argmax[i]] += gd[i];
                             t.accumulate(a, std::move(d));
                           });
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation

namespace {

// out (m x n) += a (m x k) * b (k x n); i-k-j order so every output element
// accumulates over k sequentially.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* out) {
  const auto axpy = kernels::active<T>().axpy;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = arow[p];
      if (s == T(0)) continue;
      axpy(n, s, b + p * n, row);
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_dtype(a, b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out({m, n}, dtype_of<T>());
    gemm_accumulate<T>(m, k, n, a.value().data<T>().data(), b.value().data<T>().data(),
                       out.data<T>().data());
    return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
      const T* gd = g.data<T>().data();
      if (a.requires_grad()) {
        const auto bt = transposed(b.value().data<T>().data(), k, n);
        Tensor ga({m, k}, dtype_of<T>());
        gemm_accumulate<T>(m, n, k, gd, bt.data(), ga.data<T>().data());
        t.accumulate(a, std::move(ga));
      }
      if (b.requires_grad()) {
        const auto at = transposed(a.value().data<T>().data(), m, k);
        Tensor gb({k, n}, dtype_of<T>());
        gemm_accumulate<T>(k, m, n, at.data(), gd, gb.data<T>().data());
        t.accumulate(b, std::move(gb));
      }
    });
  });
}

Var gather(Var a, std::vector<std::size_t> flat_indices, Shape out_shape) {
  if (shape_numel(out_shape) != flat_indices.size()) {
    throw ShapeError("gather: index count does not match " + shape_str(out_shape));
  }
  const std::size_t n = a.numel();
  for (std::size_t i : flat_indices) {
    if (i >= n) throw ShapeError("gather: index out of range");
  }
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    const T* x = a.value().data<T>().data();
    T* o = out.data<T>().data();
    for (std::size_t i = 0; i < flat_indices.size(); ++i) o[i] = x[flat_indices[i]];
    return a.tape().record(std::move(out), {a},
                           [a, idx = std::move(flat_indices)](Tape& t, const Tensor& g) {
                             Tensor d(a.shape(), dtype_of<T>());
                             T* dd = d.data<T>().data();
                             const T* gd = g.data<T>().data();
                             for (std::size_t i = 0; i < idx.size(); ++i) dd[idx[i]] += gd[i];
                             t.accumulate(a, std::move(d));
                           });
  });
}

Var transpose(Var a) {
  if (a.shape().size() != 2) throw ShapeError("transpose needs a 2-D tensor");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<std::size_t> idx(r * c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < r; ++j) idx[i * r + j] = j * c + i;
  }
  return gather(a, std::move(idx), {c, r});
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    require_same_dtype(parts.front(), p, "concat");
    if (p.shape().size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit sp = split_axis(out_shape, axis);
  return dispatch_dtype(first.empty() ? DType::f64 : parts.front().dtype(),
                        [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    T* o = out.data<T>().data();
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t e = p.shape()[axis];
      const T* x = p.value().data<T>().data();
      for (std::size_t q = 0; q < sp.outer; ++q) {
        std::copy_n(x + q * e * sp.inner, e * sp.inner, o + (q * sp.extent + offset) * sp.inner);
      }
      offsets.push_back(offset);
      offset += e;
    }
    return parts.front().tape().record(
        std::move(out), parts, [parts, offsets, sp, axis](Tape& t, const Tensor& g) {
          const T* gd = g.data<T>().data();
          for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!parts[i].requires_grad()) continue;
            const std::size_t e = parts[i].shape()[axis];
            Tensor d(parts[i].shape(), dtype_of<T>());
            T* dd = d.data<T>().data();
            for (std::size_t q = 0; q < sp.outer; ++q) {
              std::copy_n(gd + (q * sp.extent + offsets[i]) * sp.inner, e * sp.inner,
                          dd + q * e * sp.inner);
            }
            t.accumulate(parts[i], std::move(d));
          }
        });
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (begin > end || end > sp.extent) throw ShapeError("slice bounds out of range");
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  std::vector<std::size_t> idx;
  idx.reserve(shape_numel(out_shape));
  for (std::size_t q = 0; q < sp.outer; ++q) {
    for (std::size_t e = begin; e < end; ++e) {
      for (std::size_t i = 0; i < sp.inner; ++i) idx.push_back((q * sp.extent + e) * sp.inner + i);
    }
  }
  return gather(a, std::move(idx), std::move(out_shape));
}

Var index_select(Var a, std::size_t axis, std::span<const std::size_t> indices) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = indices.size();
  std::vector<std::size_t> idx;
  idx.reserve(shape_numel(out_shape));
  for (std::size_t q = 0; q < sp.outer; ++q) {
    for (std::size_t e : indices) {
      if (e >= sp.extent) throw ShapeError("index_select: index out of range");
      for (std::size_t i = 0; i < sp.inner; ++i) idx.push_back((q * sp.extent + e) * sp.inner + i);
    }
  }
  return gather(a, std::move(idx), std::move(out_shape));
}

Var diagonal(Var a) {
  if (a.shape().size() != 2 || a.shape()[0] != a.shape()[1]) {
    throw ShapeError("diagonal needs a square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[0];
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i * n + i;
  return gather(a, std::move(idx), {n});
}

// ---------------------------------------------------------------------------
// Softmax family

Var log_softmax(Var a) {
  if (a.shape().empty()) throw ShapeError("log_softmax of a scalar");
  const std::size_t k = a.shape().back();
  const std::size_t rows = k == 0 ? 0 : a.numel() / k;
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(a.shape(), dtype_of<T>());
    const T* x = a.value().data<T>().data();
    T* o = out.data<T>().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = x + r * k;
      const T m = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += std::exp(static_cast<double>(row[i] - m));
      const T lse = m + static_cast<T>(std::log(s));
      for (std::size_t i = 0; i < k; ++i) o[r * k + i] = row[i] - lse;
    }
    Var r = a.tape().record(out, {}, nullptr);
    return a.tape().record(std::move(out), {a}, [a, r, k, rows](Tape& t, const Tensor& g) {
      const T* ls = r.value().data<T>().data();
      const T* gd = g.data<T>().data();
      Tensor d(a.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      for (std::size_t q = 0; q < rows; ++q) {
        double gs = 0.0;
        for (std::size_t i = 0; i < k; ++i) gs += static_cast<double>(gd[q * k + i]);
        for (std::size_t i = 0; i < k; ++i) {
          dd[q * k + i] = gd[q * k + i] - static_cast<T>(std::exp(static_cast<double>(ls[q * k + i])) * gs);
        }
      }
      t.accumulate(a, std::move(d));
    });
  });
}

Var softmax(Var a) {
  if (a.shape().empty()) throw ShapeError("softmax of a scalar");
  const std::size_t k = a.shape().back();
  const std::size_t rows = k == 0 ? 0 : a.numel() / k;
  return dispatch_dtype(a.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(a.shape(), dtype_of<T>());
    const T* x = a.value().data<T>().data();
    T* o = out.data<T>().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = x + r * k;
      const T m = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += std::exp(static_cast<double>(row[i] - m));
      for (std::size_t i = 0; i < k; ++i) {
        o[r * k + i] = static_cast<T>(std::exp(static_cast<double>(row[i] - m)) / s);
      }
    }
    Var r = a.tape().record(out, {}, nullptr);
    return a.tape().record(std::move(out), {a}, [a, r, k, rows](Tape& t, const Tensor& g) {
      const T* s = r.value().data<T>().data();
      const T* gd = g.data<T>().data();
      Tensor d(a.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      for (std::size_t q = 0; q < rows; ++q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          dot += static_cast<double>(gd[q * k + i]) * static_cast<double>(s[q * k + i]);
        }
        for (std::size_t i = 0; i < k; ++i) {
          dd[q * k + i] = s[q * k + i] * (gd[q * k + i] - static_cast<T>(dot));
        }
      }
      t.accumulate(a, std::move(d));
    });
  });
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
  if (logits.shape().size() != 1) {
    throw ShapeError("softmax_cross_entropy expects 1-D logits, got " + shape_str(logits.shape()));
  }
  if (target >= logits.shape()[0]) throw ShapeError("cross-entropy target out of range");
  return neg(gather(log_softmax(logits), {target}, {}));
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvGeom {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw, stride, pad, out_h, out_w;
  std::size_t ckk() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* cols, T* x) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dst[static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var kernel, Conv2dOptions options) {
  require_same_dtype(x, kernel, "conv2d");
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4 || ks[1] != xs[1]) {
    throw ShapeError("conv2d: input " + shape_str(xs) + " kernel " + shape_str(ks));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (options.stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3], options.stride, options.padding, 0, 0};
  if (g.height + 2 * g.pad < g.kh || g.width + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.kw) / g.stride + 1;

  return dispatch_dtype(x.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out({g.batch, g.out_channels, g.out_h, g.out_w}, dtype_of<T>());
    const T* xd = x.value().data<T>().data();
    const T* wd = kernel.value().data<T>().data();
    T* od = out.data<T>().data();
    std::vector<T> cols(g.ckk() * g.pixels());
    const std::size_t in_plane = g.channels * g.height * g.width;
    const std::size_t out_plane = g.out_channels * g.pixels();
    for (std::size_t b = 0; b < g.batch; ++b) {
      im2col(g, xd + b * in_plane, cols.data());
      gemm_accumulate<T>(g.out_channels, g.ckk(), g.pixels(), wd, cols.data(), od + b * out_plane);
    }
    return x.tape().record(std::move(out), {x, kernel}, [x, kernel, g](Tape& t, const Tensor& grad) {
      const T* xd = x.value().data<T>().data();
      const T* wd = kernel.value().data<T>().data();
      const T* gd = grad.data<T>().data();
      const std::size_t in_plane = g.channels * g.height * g.width;
      const std::size_t out_plane = g.out_channels * g.pixels();
      std::vector<T> cols(g.ckk() * g.pixels());
      Tensor gw(kernel.shape(), dtype_of<T>());
      Tensor gx(x.shape(), dtype_of<T>());
      const bool want_w = kernel.requires_grad();
      const bool want_x = x.requires_grad();
      const auto wt = transposed(wd, g.out_channels, g.ckk());
      for (std::size_t b = 0; b < g.batch; ++b) {
        if (want_w) {
          im2col(g, xd + b * in_plane, cols.data());
          const auto cols_t = transposed(cols.data(), g.ckk(), g.pixels());
          gemm_accumulate<T>(g.out_channels, g.pixels(), g.ckk(), gd + b * out_plane,
                             cols_t.data(), gw.data<T>().data());
        }
        if (want_x) {
          std::fill(cols.begin(), cols.end(), T(0));
          gemm_accumulate<T>(g.ckk(), g.out_channels, g.pixels(), wt.data(), gd + b * out_plane,
                             cols.data());
          col2im_add(g, cols.data(), gx.data<T>().data() + b * in_plane);
        }
      }
      if (want_w) t.accumulate(kernel, std::move(gw));
      if (want_x) t.accumulate(x, std::move(gx));
    });
  });
}

Var conv3d_temporal(Var x, Var kernel) {
  require_same_dtype(x, kernel, "conv3d_temporal");
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  if (xs.size() != 5 || ks.size() != 5 || ks[1] != xs[1] || ks[3] != 1 || ks[4] != 1) {
    throw ShapeError("conv3d_temporal: input " + shape_str(xs) + " kernel " + shape_str(ks));
  }
  const std::size_t batch = xs[0], cin = xs[1], frames = xs[2], hw = xs[3] * xs[4];
  const std::size_t cout = ks[0], kt = ks[2];
  if (kt == 0 || kt > frames) throw ShapeError("conv3d_temporal: kernel depth exceeds T");
  const std::size_t out_t = frames - kt + 1;

  return dispatch_dtype(x.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out({batch, cout, out_t, xs[3], xs[4]}, dtype_of<T>());
    const T* xd = x.value().data<T>().data();
    const T* kd = kernel.value().data<T>().data();
    T* od = out.data<T>().data();
    const auto axpy = kernels::active<T>().axpy;
    auto xplane = [&](std::size_t b, std::size_t c, std::size_t f) {
      return ((b * cin + c) * frames + f) * hw;
    };
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t f = 0; f < out_t; ++f) {
          T* dst = od + ((b * cout + o) * out_t + f) * hw;
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t dt = 0; dt < kt; ++dt) {
              axpy(hw, kd[(o * cin + c) * kt + dt], xd + xplane(b, c, f + dt), dst);
            }
          }
        }
      }
    }
    return x.tape().record(
        std::move(out), {x, kernel},
        [x, kernel, batch, cin, frames, hw, cout, kt, out_t](Tape& t, const Tensor& g) {
          const T* xd = x.value().data<T>().data();
          const T* kd = kernel.value().data<T>().data();
          const T* gd = g.data<T>().data();
          const auto axpy = kernels::active<T>().axpy;
          Tensor gx(x.shape(), dtype_of<T>());
          Tensor gk(kernel.shape(), dtype_of<T>());
          T* gxd = gx.data<T>().data();
          T* gkd = gk.data<T>().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              for (std::size_t f = 0; f < out_t; ++f) {
                const T* gp = gd + ((b * cout + o) * out_t + f) * hw;
                for (std::size_t c = 0; c < cin; ++c) {
                  for (std::size_t dt = 0; dt < kt; ++dt) {
                    const std::size_t xo = ((b * cin + c) * frames + f + dt) * hw;
                    axpy(hw, kd[(o * cin + c) * kt + dt], gp, gxd + xo);
                    T acc = T(0);
                    for (std::size_t i = 0; i < hw; ++i) acc += gp[i] * xd[xo + i];
                    gkd[(o * cin + c) * kt + dt] += acc;
                  }
                }
              }
            }
          }
          t.accumulate(x, std::move(gx));
          t.accumulate(kernel, std::move(gk));
        });
  });
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Var resize_bilinear(Var x, std::size_t height, std::size_t width) {
  const Shape xs = x.shape();
  if (xs.size() < 2 || height == 0 || width == 0 || xs[xs.size() - 2] == 0 || xs.back() == 0) {
    throw ShapeError("resize_bilinear: bad shape " + shape_str(xs));
  }
  const std::size_t ih = xs[xs.size() - 2], iw = xs.back();
  const std::size_t planes = x.numel() / (ih * iw);
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = height;
  out_shape.back() = width;
  const auto ty = resize_taps(ih, height);
  const auto tx = resize_taps(iw, width);
  return dispatch_dtype(x.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    const T* xd = x.value().data<T>().data();
    T* od = out.data<T>().data();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = xd + p * ih * iw;
      T* dst = od + p * height * width;
      for (std::size_t oy = 0; oy < height; ++oy) {
        const Tap& a = ty[oy];
        for (std::size_t ox = 0; ox < width; ++ox) {
          const Tap& b = tx[ox];
          const double top = (1.0 - b.w1) * src[a.i0 * iw + b.i0] + b.w1 * src[a.i0 * iw + b.i1];
          const double bot = (1.0 - b.w1) * src[a.i1 * iw + b.i0] + b.w1 * src[a.i1 * iw + b.i1];
          dst[oy * width + ox] = static_cast<T>((1.0 - a.w1) * top + a.w1 * bot);
        }
      }
    }
    return x.tape().record(std::move(out), {x},
                           [x, ty, tx, planes, ih, iw, height, width](Tape& t, const Tensor& g) {
      Tensor d(x.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      const T* gd = g.data<T>().data();
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = dd + p * ih * iw;
        const T* src = gd + p * height * width;
        for (std::size_t oy = 0; oy < height; ++oy) {
          const Tap& a = ty[oy];
          for (std::size_t ox = 0; ox < width; ++ox) {
            const Tap& b = tx[ox];
            const double v = src[oy * width + ox];
            dst[a.i0 * iw + b.i0] += static_cast<T>(v * (1.0 - a.w1) * (1.0 - b.w1));
            dst[a.i0 * iw + b.i1] += static_cast<T>(v * (1.0 - a.w1) * b.w1);
            dst[a.i1 * iw + b.i0] += static_cast<T>(v * a.w1 * (1.0 - b.w1));
            dst[a.i1 * iw + b.i1] += static_cast<T>(v * a.w1 * b.w1);
          }
        }
      }
      t.accumulate(x, std::move(d));
    });
  });
}

Var sum_pool2d(Var x, std::size_t factor) {
  const Shape xs = x.shape();
  if (xs.size() < 2 || factor == 0 || xs[xs.size() - 2] % factor != 0 || xs.back() % factor != 0) {
    throw ShapeError("sum_pool2d: " + shape_str(xs) + " not divisible by " + std::to_string(factor));
  }
  const std::size_t ih = xs[xs.size() - 2], iw = xs.back();
  const std::size_t oh = ih / factor, ow = iw / factor;
  const std::size_t planes = x.numel() / (ih * iw);
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = oh;
  out_shape.back() = ow;
  std::vector<std::size_t> owner(x.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < ih; ++y) {
      for (std::size_t xx = 0; xx < iw; ++xx) {
        owner[(p * ih + y) * iw + xx] = (p * oh + y / factor) * ow + xx / factor;
      }
    }
  }
  return dispatch_dtype(x.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out(out_shape, dtype_of<T>());
    const T* xd = x.value().data<T>().data();
    T* od = out.data<T>().data();
    for (std::size_t i = 0; i < owner.size(); ++i) od[owner[i]] += xd[i];
    return x.tape().record(std::move(out), {x}, [x, owner](Tape& t, const Tensor& g) {
      Tensor d(x.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      const T* gd = g.data<T>().data();
      for (std::size_t i = 0; i < owner.size(); ++i) dd[i] = gd[owner[i]];
      t.accumulate(x, std::move(d));
    });
  });
}

Var bilinear_sample_points(Var fm, std::span<const std::array<double, 2>> uv) {
  const Shape fs = fm.shape();
  if (fs.size() != 3) throw ShapeError("bilinear_sample: feature map must be C x H x W");
  const std::size_t c = fs[0], h = fs[1], w = fs[2];
  struct Corner {
    std::size_t x0, x1, y0, y1;
    double wx, wy;
  };
  std::vector<Corner> corners;
  corners.reserve(uv.size());
  for (const auto& p : uv) {
    const double u = p[0], v = p[1];
    if (!(u >= 0.0 && u <= static_cast<double>(w - 1) && v >= 0.0 && v <= static_cast<double>(h - 1))) {
      throw SampleError("sample point (" + std::to_string(u) + ", " + std::to_string(v) +
                        ") outside feature map " + shape_str(fs));
    }
    const auto x0 = static_cast<std::size_t>(std::floor(u));
    const auto y0 = static_cast<std::size_t>(std::floor(v));
    corners.push_back({x0, std::min(x0 + 1, w - 1), y0, std::min(y0 + 1, h - 1),
                       u - static_cast<double>(x0), v - static_cast<double>(y0)});
  }
  const std::size_t k = uv.size();
  return dispatch_dtype(fm.dtype(), [&]<typename T>(Id<T>) -> Var {
    Tensor out({k, c}, dtype_of<T>());
    const T* fd = fm.value().data<T>().data();
    T* od = out.data<T>().data();
    for (std::size_t i = 0; i < k; ++i) {
      const Corner& q = corners[i];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = fd + ch * h * w;
        const double top = (1.0 - q.wx) * plane[q.y0 * w + q.x0] + q.wx * plane[q.y0 * w + q.x1];
        const double bot = (1.0 - q.wx) * plane[q.y1 * w + q.x0] + q.wx * plane[q.y1 * w + q.x1];
        od[i * c + ch] = static_cast<T>((1.0 - q.wy) * top + q.wy * bot);
      }
    }
    return fm.tape().record(std::move(out), {fm}, [fm, corners, c, h, w](Tape& t, const Tensor& g) {
      Tensor d(fm.shape(), dtype_of<T>());
      T* dd = d.data<T>().data();
      const T* gd = g.data<T>().data();
      for (std::size_t i = 0; i < corners.size(); ++i) {
        const Corner& q = corners[i];
        for (std::size_t ch = 0; ch < c; ++ch) {
          T* plane = dd + ch * h * w;
          const double v = gd[i * c + ch];
          plane[q.y0 * w + q.x0] += static_cast<T>(v * (1.0 - q.wy) * (1.0 - q.wx));
          plane[q.y0 * w + q.x1] += static_cast<T>(v * (1.0 - q.wy) * q.wx);
          plane[q.y1 * w + q.x0] += static_cast<T>(v * q.wy * (1.0 - q.wx));
          plane[q.y1 * w + q.x1] += static_cast<T>(v * q.wy * q.wx);
        }
      }
      t.accumulate(fm, std::move(d));
    });
  });
}

Var bilinear_sample(Var fm, double u, double v) {
  const std::array<double, 2> p{u, v};
  const std::size_t c = fm.shape().empty() ? 0 : fm.shape()[0];
  return reshape(bilinear_sample_points(fm, std::span(&p, 1)), {c});
}

Var l2_normalize_rows(Var x, double eps) {
  if (x.shape().size() != 2) throw ShapeError("l2_normalize_rows needs a 2-D tensor");
  Var sq = sum_axis(mul(x, x), 1, true);
  Var norm = sqrt(add_scalar(sq, eps));
  return div(x, norm);
}

}  // namespace cortical::ops
