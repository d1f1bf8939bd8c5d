#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library kernels.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "styleformer/tensor.hpp"

namespace oracle {

using styleformer::Tensor;

template <class T>
Tensor<double> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

template <class T>
Tensor<double> transpose(const Tensor<T>& a) {
  Tensor<double> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Tensor<double> softmax_rows(const Tensor<double>& a) {
  Tensor<double> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    long double total = 0;
    for (std::size_t j = 0; j < a.cols(); ++j) total += std::exp(static_cast<long double>(a(i, j)));
    for (std::size_t j = 0; j < a.cols(); ++j)
      out(i, j) = static_cast<double>(std::exp(static_cast<long double>(a(i, j))) / total);
  }
  return out;
}

/// softmax(Q K^T / sqrt(d)) entry by entry.
template <class T>
Tensor<double> attention(const Tensor<T>& q, const Tensor<T>& k) {
  Tensor<double> logits(q.rows(), k.rows());
  const long double inv = 1.0L / std::sqrt(static_cast<long double>(q.cols()));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < k.rows(); ++j) {
      long double dot = 0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += static_cast<long double>(q(i, c)) * k(j, c);
      logits(i, j) = static_cast<double>(dot * inv);
    }
  }
  return softmax_rows(logits);
}

template <class T>
std::vector<double> column_norms(const Tensor<T>& a) {
  std::vector<double> out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    long double acc = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) acc += static_cast<long double>(a(i, j)) * a(i, j);
    out[j] = static_cast<double>(std::sqrt(acc));
  }
  return out;
}

/// Singular values from the eigenvalues of the Gram matrix M^T M (or M M^T).
template <class T>
std::vector<double> singular_values_via_gram(const Tensor<T>& m) {
  const bool tall = m.rows() >= m.cols();
  const std::size_t r = m.rows(), c = m.cols();
  Eigen::MatrixXd mat(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) mat(i, j) = m(i, j);
  Eigen::MatrixXd gram = tall ? Eigen::MatrixXd(mat.transpose() * mat)
                              : Eigen::MatrixXd(mat * mat.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    out.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i))));
  std::sort(out.rbegin(), out.rend());
  return out;
}

template <class T>
double column_std(const Tensor<T>& a, std::size_t col) {
  long double mean = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) mean += a(i, col);
  mean /= a.rows();
  long double var = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) var += (a(i, col) - mean) * (a(i, col) - mean);
  return static_cast<double>(std::sqrt(var / a.rows()));
}

template <class A, class B>
double max_abs_diff(const Tensor<A>& a, const Tensor<B>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <class A, class B>
double max_rel_diff(const Tensor<A>& a, const Tensor<B>& b) {
  double scale = 0;
  for (std::size_t i = 0; i < b.size(); ++i) scale = std::max(scale, std::abs(static_cast<double>(b[i])));
  return max_abs_diff(a, b) / std::max(scale, 1e-300);
}

}  // namespace oracle
