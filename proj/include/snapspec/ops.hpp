#pragma once

#include <cstddef>

#include "snapspec/tensor.hpp"

// Differentiable operations on Tensor<T>. Feature maps use channel-first
// [C, H, W] layout throughout.
//
// Broadcasting rule for the binary elementwise ops: shapes are aligned on
// their trailing axes; an operand may miss leading axes, and any of its axes
// of size 1 stretches to the other operand's extent. The result takes the
// larger operand's shape. Nothing more general is supported.
namespace snapspec::op {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> reciprocal(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);  // inputs must be >= 0
template <typename T> Tensor<T> neg(const Tensor<T>& a) { return scale(a, T(-1)); }

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
// Reduces one axis away (the result has rank - 1, or shape {1} for rank 1).
template <typename T> Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);  // rank-2 only
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// Concatenation along axis 0.
template <typename T> Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Output extent of a strided window op, floor((in + 2p - k)/s) + 1; throws
// ShapeError when the window does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding);

// Cross-correlation. x: [Cin, H, W], weight: [Cout, Cin/groups, k, k], bias: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt = {});
// weight: [C, 1, k, k].
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t padding);
// x: [Cin, H, W], weight: [Cin, Cout, k, k].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding, std::size_t output_padding);
// Odd spatial extents are zero-padded on the right/bottom first. Gradient goes
// to the first (row-major) maximum of each window.
template <typename T> Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window = 2, std::size_t stride = 2);
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);
// [C, H, W] -> [C, 1, 1].
template <typename T> Tensor<T> global_avgpool(const Tensor<T>& x);

// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
// Zero-mean/unit-variance normalisation along `axis` (no affine part).
template <typename T> Tensor<T> layernorm(const Tensor<T>& x, std::size_t axis, T eps = T(1e-5));
// Exact (erf-based) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> softplus(const Tensor<T>& x);

}  // namespace snapspec::op
