#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cortical/numcore/tape.hpp"

namespace cortical::ops {

enum class Elementwise { add, sub, mul, div, exp, log, sigmoid, clamp };

struct ClampRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

// Sigmoid inputs are clamped to [-kSigmoidClamp, kSigmoidClamp]; the gradient
// is exactly zero outside that band.
inline constexpr double kSigmoidClamp = 40.0;

// Binary kinds broadcast numpy-style (right-aligned, size-1 dims stretch).
// Throws ShapeError on incompatible shapes, DomainError for log of a
// non-positive value or division by zero.
Var elementwise(Elementwise op, Var a, std::optional<Var> b = std::nullopt,
                ClampRange range = {});

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var clamp(Var a, double lo, double hi);
Var relu(Var a);
Var sqrt(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var neg(Var a);

// A constant on a's tape, converted to a's dtype.
Var constant_like(Var a, const Tensor& value);

Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis, bool keepdim = false);
// Ties resolve to the first maximal element along the axis.
Var max_axis(Var a, std::size_t axis, bool keepdim = false);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var index_select(Var a, std::size_t axis, std::span<const std::size_t> indices);
// out.flat[i] = a.flat[flat_indices[i]]
Var gather(Var a, std::vector<std::size_t> flat_indices, Shape out_shape);
Var diagonal(Var a);

// Along the last axis.
Var log_softmax(Var a);
Var softmax(Var a);
// -log softmax(logits)[target] for 1-D logits.
Var softmax_cross_entropy(Var logits, std::size_t target);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: B x C x H x W, kernel: C' x C x kh x kw (odd extents).
Var conv2d(Var x, Var kernel, Conv2dOptions options = {});

// x: B x C x T x H x W, kernel: C' x C x kt x 1 x 1. Output T' = T - kt + 1.
Var conv3d_temporal(Var x, Var kernel);

// Resizes the last two axes with pixel-center aligned bilinear weights.
Var resize_bilinear(Var x, std::size_t height, std::size_t width);

// Sums non-overlapping factor x factor blocks of the last two axes.
Var sum_pool2d(Var x, std::size_t factor);

// fm: C x H x W. uv = (column, row) in pixel-center coordinates, inside
// [0, W-1] x [0, H-1]; throws SampleError otherwise. Differentiable w.r.t. fm.
Var bilinear_sample(Var fm, double u, double v);
// K points -> K x C.
Var bilinear_sample_points(Var fm, std::span<const std::array<double, 2>> uv);

// Rows of a 2-D tensor scaled to unit L2 norm.
Var l2_normalize_rows(Var x, double eps = 1e-12);

// Shape helpers shared with tests.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace cortical::ops
