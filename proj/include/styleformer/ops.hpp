#pragma once

// Dense kernels shared by the generator, the autodiff graph and the
// verification harness. Every function is pure and returns a fresh tensor.

#include <vector>

#include "styleformer/tensor.hpp"

namespace styleformer {

inline constexpr double kLayerNormEps = 1e-5;
/// Lower bound applied to every root-sum-square used as a divisor.
inline constexpr double kDemodFloor = 1e-12;

enum class Trans { No, Yes };

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Trans ta = Trans::No,
                 Trans tb = Trans::No);
template <class T>
Tensor<T> transpose(const Tensor<T>& a);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// a(r, c) + v(0, c)
template <class T>
Tensor<T> add_row_vector(const Tensor<T>& a, const Tensor<T>& v);
/// a(r, c) * v(0, c)
template <class T>
Tensor<T> scale_columns(const Tensor<T>& a, const Tensor<T>& v);
/// a(r, c) / v(0, c)
template <class T>
Tensor<T> divide_columns(const Tensor<T>& a, const Tensor<T>& v);
/// a(r, c) * v(0, r); v is a 1 x rows(a) row vector.
template <class T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& v);

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope);

/// Row-wise softmax, stabilized by subtracting the row maximum.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a);

/// Per-row normalization to zero mean / unit variance (biased variance,
/// epsilon inside the square root), without gain or bias.
template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, double eps = kLayerNormEps);
/// Per-row normalization followed by per-channel gain and bias (1 x C each).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     double eps = kLayerNormEps);

/// 1 x C vector of sqrt(sum_i a(i, c)^2), floored at `floor`.
template <class T>
Tensor<T> column_rss(const Tensor<T>& a, double floor = kDemodFloor);

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count);
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count);
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

/// 2x bilinear upsampling of a square sheet (side*side rows) with half-pixel
/// centers and edge clamping. Returns a (2*side)^2 x C sheet.
template <class T>
Tensor<T> upsample_sheet_2x(const Tensor<T>& sheet, std::size_t side);
/// Adjoint of upsample_sheet_2x: maps a (2*side)^2 x C gradient back to side^2 x C.
template <class T>
Tensor<T> upsample_sheet_2x_adjoint(const Tensor<T>& grad, std::size_t side);
/// Square feature map convenience wrapper; throws on non-square input.
template <class T>
FeatureMap<T> bilinear_upsample_2x(const FeatureMap<T>& map);

/// 3x3 same-padded convolution on a square sheet. `weight` is (9*C_in) x C_out
/// with row index tap*C_in + c_in and tap = (dy+1)*3 + (dx+1).
template <class T>
Tensor<T> conv3x3(const Tensor<T>& sheet, std::size_t side, const Tensor<T>& weight);
/// Gradients of conv3x3 with respect to its input and weight.
template <class T>
Tensor<T> conv3x3_input_grad(const Tensor<T>& grad_out, std::size_t side,
                             const Tensor<T>& weight);
template <class T>
Tensor<T> conv3x3_weight_grad(const Tensor<T>& sheet, std::size_t side,
                              const Tensor<T>& grad_out);

/// Singular values in descending order (length min(rows, cols)), computed in
/// double precision by one-sided Jacobi rotations.
template <class T>
std::vector<double> svd_singular_values(const Tensor<T>& m);

template <class T>
double sum(const Tensor<T>& a);
template <class T>
bool all_finite(const Tensor<T>& a);
/// Throws NumericError naming `what` if any element is NaN/Inf.
template <class T>
void require_finite(const Tensor<T>& a, const char* what);

}  // namespace styleformer
