#include "styleformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "styleformer/op_counter.hpp"

namespace styleformer {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::size_t square_side(std::size_t pixels) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
  if (side * side != pixels) {
    throw ShapeError("sheet with " + std::to_string(pixels) + " pixels is not square");
  }
  return side;
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMat<T>> view(const Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

template <class T>
Eigen::Map<RowMat<T>> view(Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

template <class T>
std::string shapes(const Tensor<T>& a, const Tensor<T>& b) {
  return shape_string(a.rows(), a.cols()) + " vs " + shape_string(b.rows(), b.cols());
}

template <class T>
void require_row_vector(const Tensor<T>& v, std::size_t length, const char* op) {
  require(v.rows() == 1 && v.cols() == length, op,
          "expected 1x" + std::to_string(length) + " vector, got " +
              shape_string(v.rows(), v.cols()));
}

// Source taps of 2x bilinear upsampling along one axis (half-pixel centers,
// indices clamped to the border).
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(std::size_t side) {
  std::vector<Tap> taps(2 * side);
  for (std::size_t o = 0; o < 2 * side; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, side - 1);
    const std::size_t i1 = std::min(i0 + 1, side - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

// Rows of `sheet` shifted by (dy, dx) with zero fill: out(y, x) = in(y + dy, x + dx).
template <class T>
Tensor<T> shifted(const Tensor<T>& sheet, std::size_t side, int dy, int dx) {
  Tensor<T> out(sheet.rows(), sheet.cols());
  const auto s = static_cast<int>(side);
  for (int y = 0; y < s; ++y) {
    const int sy = y + dy;
    if (sy < 0 || sy >= s) continue;
    for (int x = 0; x < s; ++x) {
      const int sx = x + dx;
      if (sx < 0 || sx >= s) continue;
      auto src = sheet.row(static_cast<std::size_t>(sy * s + sx));
      std::copy(src.begin(), src.end(), out.row(static_cast<std::size_t>(y * s + x)).begin());
    }
  }
  return out;
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Trans ta, Trans tb) {
  const std::size_t m = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::No ? b.cols() : b.rows();
  require(k == kb, "matmul", "inner dimensions differ: " + shapes(a, b));
  Tensor<T> out(m, n);
  OpCounter::add_matmul(2ULL * m * k * n);
  if (m == 0 || n == 0 || k == 0) return out;
  auto A = view(a);
  auto B = view(b);
  auto R = view(out);
  if (ta == Trans::No && tb == Trans::No) {
    R.noalias() = A * B;
  } else if (ta == Trans::No) {
    R.noalias() = A * B.transpose();
  } else if (tb == Trans::No) {
    R.noalias() = A.transpose() * B;
  } else {
    R.noalias() = A.transpose() * B.transpose();
  }
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "add", shapes(a, b));
  Tensor<T> out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  OpCounter::add_elementwise(o.size());
  return out;
}

template <class T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "subtract", shapes(a, b));
  Tensor<T> out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  OpCounter::add_elementwise(o.size());
  return out;
}

template <class T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "hadamard", shapes(a, b));
  Tensor<T> out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  OpCounter::add_elementwise(o.size());
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> add_row_vector(const Tensor<T>& a, const Tensor<T>& v) {
  require_row_vector(v, a.cols(), "add_row_vector");
  Tensor<T> out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += v[c];
  }
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> scale_columns(const Tensor<T>& a, const Tensor<T>& v) {
  require_row_vector(v, a.cols(), "scale_columns");
  Tensor<T> out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= v[c];
  }
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> divide_columns(const Tensor<T>& a, const Tensor<T>& v) {
  require_row_vector(v, a.cols(), "divide_columns");
  Tensor<T> out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] /= v[c];
  }
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& v) {
  require_row_vector(v, a.rows(), "scale_rows");
  Tensor<T> out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const T s = v[r];
    for (auto& x : out.row(r)) x *= s;
  }
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v = v >= T{0} ? v : v * slope;
  OpCounter::add_elementwise(out.size());
  return out;
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_finite(a, "softmax_rows input");
  Tensor<T> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const T mx = *std::max_element(in.begin(), in.end());
    T total{0};
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (auto& v : o) v /= total;
  }
  OpCounter::add_softmax(kSoftmaxFlopsPerElement * a.size());
  return out;
}

template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, double eps) {
  if (x.cols() == 0) throw ShapeError("layer_norm: zero channels");
  Tensor<T> out(x.rows(), x.cols());
  const double c = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (T v : in) mean += static_cast<double>(v);
    mean /= c;
    double var = 0.0;
    for (T v : in) {
      const double d = static_cast<double>(v) - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = static_cast<T>((static_cast<double>(in[j]) - mean) * inv);
    }
  }
  OpCounter::add_elementwise(5ULL * x.size());
  return out;
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     double eps) {
  return add_row_vector(scale_columns(layer_norm_rows(x, eps), gain), bias);
}

template <class T>
Tensor<T> column_rss(const Tensor<T>& a, double floor) {
  std::vector<double> acc(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      acc[c] += static_cast<double>(row[c]) * static_cast<double>(row[c]);
    }
  }
  Tensor<T> out(1, a.cols());
  for (std::size_t c = 0; c < acc.size(); ++c) {
    out[c] = static_cast<T>(std::max(std::sqrt(acc[c]), floor));
  }
  OpCounter::add_elementwise(2ULL * a.size());
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
  require(start + count <= a.cols(), "slice_cols",
          "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
              ") exceeds " + std::to_string(a.cols()) + " columns");
  Tensor<T> out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r).subspan(start, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", "row counts differ");
    cols += p.cols();
  }
  Tensor<T> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r).begin();
    for (const auto& p : parts) dst = std::copy(p.row(r).begin(), p.row(r).end(), dst);
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
  require(start + count <= a.rows(), "slice_rows", "range exceeds row count");
  std::vector<T> data(a.data().begin() + static_cast<std::ptrdiff_t>(start * a.cols()),
                      a.data().begin() + static_cast<std::ptrdiff_t>((start + count) * a.cols()));
  return Tensor<T>(count, a.cols(), std::move(data));
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::vector<T> data;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows", "column counts differ");
    data.insert(data.end(), p.data().begin(), p.data().end());
    rows += p.rows();
  }
  return Tensor<T>(rows, cols, std::move(data));
}

template <class T>
Tensor<T> upsample_sheet_2x(const Tensor<T>& sheet, std::size_t side) {
  require(side >= 1 && sheet.rows() == side * side, "upsample_sheet_2x",
          "sheet has " + std::to_string(sheet.rows()) + " rows, expected " +
              std::to_string(side * side));
  const auto taps = upsample_taps(side);
  const std::size_t out_side = 2 * side;
  const std::size_t ch = sheet.cols();
  Tensor<T> out(out_side * out_side, ch);
  for (std::size_t oy = 0; oy < out_side; ++oy) {
    const Tap& ty = taps[oy];
    for (std::size_t ox = 0; ox < out_side; ++ox) {
      const Tap& tx = taps[ox];
      auto o = out.row(oy * out_side + ox);
      const std::size_t idx[4] = {ty.i0 * side + tx.i0, ty.i0 * side + tx.i1,
                                  ty.i1 * side + tx.i0, ty.i1 * side + tx.i1};
      const double w[4] = {ty.w0 * tx.w0, ty.w0 * tx.w1, ty.w1 * tx.w0, ty.w1 * tx.w1};
      for (int k = 0; k < 4; ++k) {
        if (w[k] == 0.0) continue;
        auto in = sheet.row(idx[k]);
        const T wk = static_cast<T>(w[k]);
        for (std::size_t c = 0; c < ch; ++c) o[c] += wk * in[c];
      }
    }
  }
  OpCounter::add_elementwise(8ULL * out.size());
  return out;
}

template <class T>
Tensor<T> upsample_sheet_2x_adjoint(const Tensor<T>& grad, std::size_t side) {
  const std::size_t out_side = 2 * side;
  require(grad.rows() == out_side * out_side, "upsample_sheet_2x_adjoint",
          "gradient row count does not match side");
  const auto taps = upsample_taps(side);
  const std::size_t ch = grad.cols();
  Tensor<T> out(side * side, ch);
  for (std::size_t oy = 0; oy < out_side; ++oy) {
    const Tap& ty = taps[oy];
    for (std::size_t ox = 0; ox < out_side; ++ox) {
      const Tap& tx = taps[ox];
      auto g = grad.row(oy * out_side + ox);
      const std::size_t idx[4] = {ty.i0 * side + tx.i0, ty.i0 * side + tx.i1,
                                  ty.i1 * side + tx.i0, ty.i1 * side + tx.i1};
      const double w[4] = {ty.w0 * tx.w0, ty.w0 * tx.w1, ty.w1 * tx.w0, ty.w1 * tx.w1};
      for (int k = 0; k < 4; ++k) {
        if (w[k] == 0.0) continue;
        auto o = out.row(idx[k]);
        const T wk = static_cast<T>(w[k]);
        for (std::size_t c = 0; c < ch; ++c) o[c] += wk * g[c];
      }
    }
  }
  return out;
}

template <class T>
FeatureMap<T> bilinear_upsample_2x(const FeatureMap<T>& map) {
  if (map.height != map.width) {
    throw ShapeError("bilinear_upsample_2x: non-square input " + std::to_string(map.height) +
                     "x" + std::to_string(map.width));
  }
  if (map.height == 0) throw ShapeError("bilinear_upsample_2x: empty input");
  auto up = upsample_sheet_2x(flatten(map), map.height);
  return unflatten(up, 2 * map.height, 2 * map.width);
}

template <class T>
Tensor<T> conv3x3(const Tensor<T>& sheet, std::size_t side, const Tensor<T>& weight) {
  const std::size_t cin = sheet.cols();
  require(sheet.rows() == side * side, "conv3x3", "sheet is not side x side");
  require(weight.rows() == 9 * cin, "conv3x3",
          "weight rows " + std::to_string(weight.rows()) + " != 9*C_in " +
              std::to_string(9 * cin));
  Tensor<T> out(sheet.rows(), weight.cols());
  auto R = view(out);
  auto W = view(weight);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const auto tap = static_cast<Eigen::Index>((dy + 1) * 3 + (dx + 1));
      const Tensor<T> s = shifted(sheet, side, dy, dx);
      R.noalias() += view(s) * W.middleRows(tap * static_cast<Eigen::Index>(cin),
                                           static_cast<Eigen::Index>(cin));
    }
  }
  OpCounter::add_matmul(2ULL * sheet.rows() * weight.rows() * weight.cols());
  return out;
}

template <class T>
Tensor<T> conv3x3_input_grad(const Tensor<T>& grad_out, std::size_t side,
                             const Tensor<T>& weight) {
  const std::size_t cin = weight.rows() / 9;
  Tensor<T> out(grad_out.rows(), cin);
  auto W = view(weight);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const auto tap = static_cast<Eigen::Index>((dy + 1) * 3 + (dx + 1));
      Tensor<T> partial(grad_out.rows(), cin);
      view(partial).noalias() =
          view(grad_out) * W.middleRows(tap * static_cast<Eigen::Index>(cin),
                                        static_cast<Eigen::Index>(cin))
                               .transpose();
      // Forward read in(y+dy, x+dx) into out(y, x); the adjoint scatters back.
      const Tensor<T> back = shifted(partial, side, -dy, -dx);
      auto o = out.data();
      auto b = back.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
    }
  }
  OpCounter::add_matmul(2ULL * grad_out.rows() * weight.rows() * weight.cols());
  return out;
}

template <class T>
Tensor<T> conv3x3_weight_grad(const Tensor<T>& sheet, std::size_t side,
                              const Tensor<T>& grad_out) {
  const std::size_t cin = sheet.cols();
  Tensor<T> out(9 * cin, grad_out.cols());
  auto R = view(out);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const auto tap = static_cast<Eigen::Index>((dy + 1) * 3 + (dx + 1));
      const Tensor<T> s = shifted(sheet, side, dy, dx);
      R.middleRows(tap * static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cin))
          .noalias() = view(s).transpose() * view(grad_out);
    }
  }
  OpCounter::add_matmul(2ULL * sheet.rows() * out.rows() * out.cols());
  return out;
}

template <class T>
std::vector<double> svd_singular_values(const Tensor<T>& m) {
  require_finite(m, "svd_singular_values input");
  // Work on the orientation with fewer columns; columns stored contiguously.
  const bool by_rows = m.rows() < m.cols();
  const std::size_t len = by_rows ? m.cols() : m.rows();
  const std::size_t count = by_rows ? m.rows() : m.cols();
  std::vector<std::vector<double>> col(count, std::vector<double>(len));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = static_cast<double>(m(r, c));
      if (by_rows) {
        col[r][c] = v;
      } else {
        col[c][r] = v;
      }
    }
  }
  auto dot = [len](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += a[i] * b[i];
    return s;
  };

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  std::vector<double> norm2(count);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (std::size_t i = 0; i < count; ++i) norm2[i] = dot(col[i], col[i]);
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < count; ++p) {
      for (std::size_t q = p + 1; q < count; ++q) {
        const double alpha = norm2[p];
        const double beta = norm2[q];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = dot(col[p], col[q]);
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        auto& a = col[p];
        auto& b = col[q];
        for (std::size_t i = 0; i < len; ++i) {
          const double ai = a[i];
          const double bi = b[i];
          a[i] = c * ai - s * bi;
          b[i] = s * ai + c * bi;
        }
        norm2[p] = alpha - t * gamma;
        norm2[q] = beta + t * gamma;
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(count);
  for (std::size_t i = 0; i < count; ++i) sv[i] = std::sqrt(dot(col[i], col[i]));
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

template <class T>
double sum(const Tensor<T>& a) {
  double s = 0.0;
  for (T v : a.data()) s += static_cast<double>(v);
  return s;
}

template <class T>
bool all_finite(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class T>
void require_finite(const Tensor<T>& a, const char* what) {
  if (!all_finite(a)) throw NumericError(std::string("non-finite values in ") + what);
}

#define STYLEFORMER_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, Trans, Trans);             \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> subtract(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> add_row_vector(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale_columns(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> divide_columns(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale_rows(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                      \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                       \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, double);                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                double);                                                   \
  template Tensor<T> column_rss(const Tensor<T>&, double);                                 \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> upsample_sheet_2x(const Tensor<T>&, std::size_t);                     \
  template Tensor<T> upsample_sheet_2x_adjoint(const Tensor<T>&, std::size_t);             \
  template FeatureMap<T> bilinear_upsample_2x(const FeatureMap<T>&);                       \
  template Tensor<T> conv3x3(const Tensor<T>&, std::size_t, const Tensor<T>&);             \
  template Tensor<T> conv3x3_input_grad(const Tensor<T>&, std::size_t, const Tensor<T>&);  \
  template Tensor<T> conv3x3_weight_grad(const Tensor<T>&, std::size_t, const Tensor<T>&); \
  template std::vector<double> svd_singular_values(const Tensor<T>&);                      \
  template double sum(const Tensor<T>&);                                                   \
  template bool all_finite(const Tensor<T>&);                                              \
  template void require_finite(const Tensor<T>&, const char*);

STYLEFORMER_INSTANTIATE_OPS(float)
STYLEFORMER_INSTANTIATE_OPS(double)

}  // namespace styleformer
