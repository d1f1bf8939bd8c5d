#include "styleformer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace styleformer {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set(bool on) noexcept { g_grad_enabled = on; }

template <class T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (!g.same_shape(value)) {
    throw ShapeError("gradient shape " + shape_string(g.rows(), g.cols()) +
                     " does not match value " + shape_string(value.rows(), value.cols()));
  }
  if (grad.empty() && !value.empty()) {
    grad = g;
    return;
  }
  auto dst = grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Var<T>::grad() const {
  if (node_->grad.empty()) return Tensor<T>(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

template <class T>
void Var<T>::backward() const {
  if (value().rows() != 1 || value().cols() != 1) {
    throw ShapeError("backward() requires a 1x1 output, got " +
                     shape_string(value().rows(), value().cols()));
  }
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are scratch space for this pass; only leaves accumulate
  // across calls.
  for (Node<T>* n : order) {
    if (n->backward_fn) n->grad = Tensor<T>();
  }
  node_->accumulate(Tensor<T>(1, 1, T{1}));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      n->grad = Tensor<T>();
    }
  }
}

namespace ag {
namespace {

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

// Creates a result node; records parents and the backward closure only when
// gradient recording is on and some parent needs a gradient.
template <class T>
Var<T> make(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (GradMode::enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var<T>& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& v : inputs) node->parents.push_back(v.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var<T>(std::move(node));
}

template <class T>
void push(Node<T>& n, std::size_t i, const Tensor<T>& g) {
  auto& p = n.parents[i];
  if (p->requires_grad) p->accumulate(g);
}

template <class T>
bool wants(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

template <class T>
Tensor<T> column_sums(const Tensor<T>& g) {
  Tensor<T> out(1, g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto row = g.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  return out;
}

}  // namespace

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, Trans ta, Trans tb) {
  return make<T>(styleformer::matmul(a.value(), b.value(), ta, tb), {a, b},
                 [ta, tb](Node<T>& n) {
                   const auto& A = n.parents[0]->value;
                   const auto& B = n.parents[1]->value;
                   const auto& G = n.grad;
                   using styleformer::matmul;
                   const bool tA = ta == Trans::Yes;
                   const bool tB = tb == Trans::Yes;
                   if (wants(n, 0)) {
                     if (!tA && !tB) push(n, 0, matmul(G, B, Trans::No, Trans::Yes));
                     if (!tA && tB) push(n, 0, matmul(G, B));
                     if (tA && !tB) push(n, 0, matmul(B, G, Trans::No, Trans::Yes));
                     if (tA && tB) push(n, 0, matmul(B, G, Trans::Yes, Trans::Yes));
                   }
                   if (wants(n, 1)) {
                     if (!tA && !tB) push(n, 1, matmul(A, G, Trans::Yes, Trans::No));
                     if (!tA && tB) push(n, 1, matmul(G, A, Trans::Yes, Trans::No));
                     if (tA && !tB) push(n, 1, matmul(A, G));
                     if (tA && tB) push(n, 1, matmul(G, A, Trans::Yes, Trans::Yes));
                   }
                 });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make<T>(styleformer::add(a.value(), b.value()), {a, b}, [](Node<T>& n) {
    push(n, 0, n.grad);
    push(n, 1, n.grad);
  });
}

template <class T>
Var<T> subtract(const Var<T>& a, const Var<T>& b) {
  return make<T>(styleformer::subtract(a.value(), b.value()), {a, b}, [](Node<T>& n) {
    push(n, 0, n.grad);
    if (wants(n, 1)) push(n, 1, styleformer::scale(n.grad, T{-1}));
  });
}

template <class T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
  return make<T>(styleformer::hadamard(a.value(), b.value()), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) push(n, 0, styleformer::hadamard(n.grad, n.parents[1]->value));
    if (wants(n, 1)) push(n, 1, styleformer::hadamard(n.grad, n.parents[0]->value));
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  return make<T>(styleformer::scale(a.value(), factor), {a},
                 [factor](Node<T>& n) { push(n, 0, styleformer::scale(n.grad, factor)); });
}

template <class T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: scalar must be 1x1");
  return make<T>(styleformer::scale(a.value(), s.value()[0]), {a, s}, [](Node<T>& n) {
    const T sv = n.parents[1]->value[0];
    if (wants(n, 0)) push(n, 0, styleformer::scale(n.grad, sv));
    if (wants(n, 1)) {
      double acc = 0.0;
      auto g = n.grad.data();
      auto x = n.parents[0]->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * x[i];
      push(n, 1, Tensor<T>(1, 1, static_cast<T>(acc)));
    }
  });
}

template <class T>
Var<T> add_row_vector(const Var<T>& a, const Var<T>& v) {
  return make<T>(styleformer::add_row_vector(a.value(), v.value()), {a, v}, [](Node<T>& n) {
    push(n, 0, n.grad);
    if (wants(n, 1)) push(n, 1, column_sums(n.grad));
  });
}

template <class T>
Var<T> scale_columns(const Var<T>& a, const Var<T>& v) {
  return make<T>(styleformer::scale_columns(a.value(), v.value()), {a, v}, [](Node<T>& n) {
    const auto& A = n.parents[0]->value;
    const auto& V = n.parents[1]->value;
    if (wants(n, 0)) push(n, 0, styleformer::scale_columns(n.grad, V));
    if (wants(n, 1)) push(n, 1, column_sums(styleformer::hadamard(n.grad, A)));
  });
}

template <class T>
Var<T> divide_columns(const Var<T>& a, const Var<T>& v) {
  return make<T>(styleformer::divide_columns(a.value(), v.value()), {a, v}, [](Node<T>& n) {
    const auto& V = n.parents[1]->value;
    if (wants(n, 0)) push(n, 0, styleformer::divide_columns(n.grad, V));
    if (wants(n, 1)) {
      // d(a/v)/dv = -(a/v)/v
      Tensor<T> gv = column_sums(styleformer::hadamard(n.grad, n.value));
      for (std::size_t c = 0; c < gv.cols(); ++c) gv[c] = -gv[c] / V[c];
      push(n, 1, gv);
    }
  });
}

template <class T>
Var<T> scale_rows(const Var<T>& a, const Var<T>& v) {
  return make<T>(styleformer::scale_rows(a.value(), v.value()), {a, v}, [](Node<T>& n) {
    const auto& A = n.parents[0]->value;
    const auto& V = n.parents[1]->value;
    if (wants(n, 0)) push(n, 0, styleformer::scale_rows(n.grad, V));
    if (wants(n, 1)) {
      Tensor<T> gv(1, A.rows());
      for (std::size_t r = 0; r < A.rows(); ++r) {
        double acc = 0.0;
        auto g = n.grad.row(r);
        auto x = A.row(r);
        for (std::size_t c = 0; c < g.size(); ++c) acc += static_cast<double>(g[c]) * x[c];
        gv[r] = static_cast<T>(acc);
      }
      push(n, 1, gv);
    }
  });
}

template <class T>
Var<T> column_rss(const Var<T>& a, double floor) {
  return make<T>(styleformer::column_rss(a.value(), floor), {a}, [floor](Node<T>& n) {
    const auto& A = n.parents[0]->value;
    Tensor<T> g(A.rows(), A.cols());
    for (std::size_t c = 0; c < A.cols(); ++c) {
      const T sigma = n.value[c];
      // The floor is a constant; no gradient flows through it.
      if (static_cast<double>(sigma) <= floor) continue;
      const T k = n.grad[c] / sigma;
      for (std::size_t r = 0; r < A.rows(); ++r) g(r, c) = k * A(r, c);
    }
    push(n, 0, g);
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return make<T>(styleformer::leaky_relu(a.value(), slope), {a}, [slope](Node<T>& n) {
    Tensor<T> g = n.grad;
    auto x = n.parents[0]->value.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      if (x[i] < T{0}) gd[i] *= slope;
    }
    push(n, 0, g);
  });
}

template <class T>
Var<T> leaky_relu_slopes(const Var<T>& a, T slope) {
  Tensor<T> mask(a.rows(), a.cols());
  auto x = a.value().data();
  auto m = mask.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = x[i] >= T{0} ? T{1} : slope;
  return constant(std::move(mask));
}

template <class T>
Var<T> softmax_rows(const Var<T>& a) {
  return make<T>(styleformer::softmax_rows(a.value()), {a}, [](Node<T>& n) {
    const auto& Y = n.value;
    Tensor<T> g(Y.rows(), Y.cols());
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      auto y = Y.row(r);
      auto gy = n.grad.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < y.size(); ++c) dot += static_cast<double>(gy[c]) * y[c];
      auto out = g.row(r);
      for (std::size_t c = 0; c < y.size(); ++c) {
        out[c] = static_cast<T>(y[c] * (static_cast<double>(gy[c]) - dot));
      }
    }
    push(n, 0, g);
  });
}

template <class T>
Var<T> layer_norm_rows(const Var<T>& a, double eps) {
  return make<T>(styleformer::layer_norm_rows(a.value(), eps), {a}, [eps](Node<T>& n) {
    const auto& X = n.parents[0]->value;
    const auto& Y = n.value;
    const double c = static_cast<double>(X.cols());
    Tensor<T> g(X.rows(), X.cols());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      auto x = X.row(r);
      double mean = 0.0;
      for (T v : x) mean += v;
      mean /= c;
      double var = 0.0;
      for (T v : x) var += (v - mean) * (v - mean);
      var /= c;
      const double inv = 1.0 / std::sqrt(var + eps);
      auto y = Y.row(r);
      auto gy = n.grad.row(r);
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        mean_g += gy[j];
        mean_gy += static_cast<double>(gy[j]) * y[j];
      }
      mean_g /= c;
      mean_gy /= c;
      auto out = g.row(r);
      for (std::size_t j = 0; j < y.size(); ++j) {
        out[j] = static_cast<T>(inv * (gy[j] - mean_g - static_cast<double>(y[j]) * mean_gy));
      }
    }
    push(n, 0, g);
  });
}

template <class T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> out(a.rows(), a.cols());
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = std::max(x[i], T{0}) + std::log1p(std::exp(-std::abs(x[i])));
  }
  return make<T>(std::move(out), {a}, [](Node<T>& n) {
    Tensor<T> g = n.grad;
    auto x = n.parents[0]->value.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= T{1} / (T{1} + std::exp(-x[i]));
    push(n, 0, g);
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count) {
  return make<T>(styleformer::slice_cols(a.value(), start, count), {a},
                 [start, count](Node<T>& n) {
                   const auto& A = n.parents[0]->value;
                   Tensor<T> g(A.rows(), A.cols());
                   for (std::size_t r = 0; r < A.rows(); ++r) {
                     auto src = n.grad.row(r);
                     std::copy(src.begin(), src.end(), g.row(r).begin() + static_cast<std::ptrdiff_t>(start));
                   }
                   (void)count;
                   push(n, 0, g);
                 });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  return make<T>(styleformer::concat_cols(values), parts, [](Node<T>& n) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const std::size_t w = n.parents[i]->value.cols();
      if (wants(n, i)) push(n, i, styleformer::slice_cols(n.grad, offset, w));
      offset += w;
    }
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  return make<T>(styleformer::concat_rows(values), parts, [](Node<T>& n) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const std::size_t h = n.parents[i]->value.rows();
      if (wants(n, i)) push(n, i, styleformer::slice_rows(n.grad, offset, h));
      offset += h;
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: " + shape_string(a.rows(), a.cols()) + " -> " +
                     shape_string(rows, cols));
  }
  return make<T>(Tensor<T>(rows, cols, a.value().values()), {a}, [](Node<T>& n) {
    const auto& A = n.parents[0]->value;
    push(n, 0, Tensor<T>(A.rows(), A.cols(), n.grad.values()));
  });
}

template <class T>
Var<T> upsample_2x(const Var<T>& sheet, std::size_t side) {
  return make<T>(styleformer::upsample_sheet_2x(sheet.value(), side), {sheet},
                 [side](Node<T>& n) {
                   push(n, 0, styleformer::upsample_sheet_2x_adjoint(n.grad, side));
                 });
}

template <class T>
Var<T> conv3x3(const Var<T>& sheet, std::size_t side, const Var<T>& weight) {
  return make<T>(styleformer::conv3x3(sheet.value(), side, weight.value()), {sheet, weight},
                 [side](Node<T>& n) {
                   const auto& X = n.parents[0]->value;
                   const auto& W = n.parents[1]->value;
                   if (wants(n, 0)) push(n, 0, styleformer::conv3x3_input_grad(n.grad, side, W));
                   if (wants(n, 1)) push(n, 1, styleformer::conv3x3_weight_grad(X, side, n.grad));
                 });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  return make<T>(Tensor<T>(1, 1, static_cast<T>(styleformer::sum(a.value()))), {a},
                 [](Node<T>& n) {
                   const auto& A = n.parents[0]->value;
                   push(n, 0, Tensor<T>(A.rows(), A.cols(), n.grad[0]));
                 });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const auto count = static_cast<T>(a.value().size());
  return scale(sum(a), T{1} / count);
}

#define STYLEFORMER_INSTANTIATE_AG(T)                                                  \
  template Var<T> matmul(const Var<T>&, const Var<T>&, Trans, Trans);                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                  \
  template Var<T> subtract(const Var<T>&, const Var<T>&);                             \
  template Var<T> hadamard(const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(const Var<T>&, T);                                            \
  template Var<T> scale_by(const Var<T>&, const Var<T>&);                             \
  template Var<T> add_row_vector(const Var<T>&, const Var<T>&);                       \
  template Var<T> scale_columns(const Var<T>&, const Var<T>&);                        \
  template Var<T> divide_columns(const Var<T>&, const Var<T>&);                       \
  template Var<T> scale_rows(const Var<T>&, const Var<T>&);                           \
  template Var<T> column_rss(const Var<T>&, double);                                  \
  template Var<T> leaky_relu(const Var<T>&, T);                                       \
  template Var<T> leaky_relu_slopes(const Var<T>&, T);                                \
  template Var<T> softmax_rows(const Var<T>&);                                        \
  template Var<T> layer_norm_rows(const Var<T>&, double);                             \
  template Var<T> softplus(const Var<T>&);                                            \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                            \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                            \
  template Var<T> reshape(const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> upsample_2x(const Var<T>&, std::size_t);                            \
  template Var<T> conv3x3(const Var<T>&, std::size_t, const Var<T>&);                 \
  template Var<T> sum(const Var<T>&);                                                 \
  template Var<T> mean(const Var<T>&);

STYLEFORMER_INSTANTIATE_AG(float)
STYLEFORMER_INSTANTIATE_AG(double)

}  // namespace ag

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;

}  // namespace styleformer
