#include "styleformer/attention.hpp"

#include <cmath>
#include <string>

namespace styleformer {

HeadConfig HeadConfig::standard(std::size_t hidden_dim) {
  if (hidden_dim == 0 || hidden_dim % kHeadDepth != 0) {
    throw ConfigError("hidden dimension " + std::to_string(hidden_dim) +
                      " is not a positive multiple of " + std::to_string(kHeadDepth));
  }
  return {hidden_dim, kHeadDepth, hidden_dim / kHeadDepth};
}

HeadConfig HeadConfig::with_heads(std::size_t hidden_dim, std::size_t heads) {
  if (heads == 0 || hidden_dim == 0 || hidden_dim % heads != 0) {
    throw ConfigError("hidden dimension " + std::to_string(hidden_dim) +
                      " is not divisible into " + std::to_string(heads) + " heads");
  }
  return {hidden_dim, hidden_dim / heads, heads};
}

template <class T>
std::vector<Tensor<T>> split_heads(const Tensor<T>& x, const HeadConfig& cfg) {
  if (x.cols() != cfg.hidden_dim) {
    throw ShapeError("split_heads: sheet has " + std::to_string(x.cols()) +
                     " columns, config expects " + std::to_string(cfg.hidden_dim));
  }
  std::vector<Tensor<T>> out;
  out.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) out.push_back(slice_cols(x, h * cfg.depth, cfg.depth));
  return out;
}

template <class T>
Tensor<T> merge_heads(const std::vector<Tensor<T>>& heads) {
  return concat_cols(heads);
}

template <class T>
Tensor<T> attention_map(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention_map: query depth " + std::to_string(q.cols()) +
                     " != key depth " + std::to_string(k.cols()));
  }
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols())));
  Tensor<T> a = softmax_rows(scale(matmul(q, k, Trans::No, Trans::Yes), inv));
  OpCounter::note_attention_map(a.size());
  return a;
}

template <class T>
Tensor<T> attend(const Tensor<T>& a, const Tensor<T>& v) {
  if (a.cols() != v.rows()) {
    throw ShapeError("attend: attention has " + std::to_string(a.cols()) +
                     " columns, value has " + std::to_string(v.rows()) + " rows");
  }
  return matmul(a, v);
}

template <class T>
Tensor<T> integrate_heads(const std::vector<Tensor<T>>& heads, const ModulatedWeight<T>& wo) {
  if (heads.empty()) throw ShapeError("integrate_heads: no heads");
  for (const auto& h : heads) {
    if (!h.same_shape(heads.front())) throw ShapeError("integrate_heads: mismatched head shapes");
  }
  return apply_demodulated(merge_heads(heads), wo);
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> linformer_project(const Tensor<T>& k, const Tensor<T>& v,
                                                  const Tensor<T>& e) {
  if (e.rows() != k.rows() || k.rows() != v.rows()) {
    throw ShapeError("linformer_project: E is " + shape_string(e.rows(), e.cols()) +
                     " but keys/values have " + std::to_string(k.rows()) + "/" +
                     std::to_string(v.rows()) + " rows");
  }
  return {matmul(e, k, Trans::Yes), matmul(e, v, Trans::Yes)};
}

AttentionCost attention_stage_cost(std::size_t pixels, std::size_t hidden, std::size_t heads,
                                   std::size_t linformer_k) {
  const std::uint64_t n = pixels;
  const std::uint64_t m = linformer_k == 0 ? pixels : linformer_k;
  const std::uint64_t d = hidden / heads;
  AttentionCost cost;
  cost.map_elements_per_head = n * m;
  if (linformer_k != 0) cost.flops += 2 * (2 * m * n * hidden);  // E^T K and E^T V
  const std::uint64_t per_head = 2 * n * m * d                   // Q K^T
                                 + n * m                         // 1/sqrt(d) scaling
                                 + kSoftmaxFlopsPerElement * n * m  // softmax
                                 + 2 * n * m * d;                // A V
  cost.flops += heads * per_head;
  return cost;
}

template <class T>
Tensor<T> attention_stage(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const HeadConfig& cfg, const std::type_identity_t<Tensor<T>>* e,
                          AttentionTensor<T>* maps) {
  if (k.rows() != v.rows()) throw ShapeError("attention_stage: key/value rows differ");
  const Tensor<T>* keys = &k;
  const Tensor<T>* values = &v;
  std::pair<Tensor<T>, Tensor<T>> projected;
  if (e) {
    projected = linformer_project(k, v, *e);
    keys = &projected.first;
    values = &projected.second;
  }
  const auto qh = split_heads(q, cfg);
  const auto kh = split_heads(*keys, cfg);
  const auto vh = split_heads(*values, cfg);
  std::vector<Tensor<T>> heads;
  heads.reserve(cfg.heads);
  if (maps) maps->heads.clear();
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Tensor<T> a = attention_map(qh[h], kh[h]);
    heads.push_back(attend(a, vh[h]));
    if (maps) maps->heads.push_back(std::move(a));
  }
  return merge_heads(heads);
}

template <class T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                            const HeadConfig& cfg, std::vector<Var<T>>* maps) {
  if (q.cols() != cfg.hidden_dim || k.cols() != cfg.hidden_dim || v.cols() != cfg.hidden_dim) {
    throw ShapeError("multi_head_attention: Q/K/V width does not match hidden dimension " +
                     std::to_string(cfg.hidden_dim));
  }
  if (k.rows() != v.rows()) throw ShapeError("multi_head_attention: key/value rows differ");
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.depth)));
  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  // Heads are evaluated in index order and merged in index order.
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t off = h * cfg.depth;
    Var<T> qh = ag::slice_cols(q, off, cfg.depth);
    Var<T> kh = ag::slice_cols(k, off, cfg.depth);
    Var<T> vh = ag::slice_cols(v, off, cfg.depth);
    Var<T> a = ag::softmax_rows(ag::scale(ag::matmul(qh, kh, Trans::No, Trans::Yes), inv));
    OpCounter::note_attention_map(a.value().size());
    heads.push_back(ag::matmul(a, vh));
    if (maps) maps->push_back(a);
  }
  return ag::concat_cols(heads);
}

#define STYLEFORMER_INSTANTIATE_ATTENTION(T)                                                 \
  template std::vector<Tensor<T>> split_heads(const Tensor<T>&, const HeadConfig&);         \
  template Tensor<T> merge_heads(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> attention_map(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> attend(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> integrate_heads(const std::vector<Tensor<T>>&,                         \
                                     const ModulatedWeight<T>&);                            \
  template std::pair<Tensor<T>, Tensor<T>> linformer_project(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> attention_stage(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                     const HeadConfig&, const Tensor<T>*, AttentionTensor<T>*); \
  template Var<T> multi_head_attention(const Var<T>&, const Var<T>&, const Var<T>&,         \
                                       const HeadConfig&, std::vector<Var<T>>*);

STYLEFORMER_INSTANTIATE_ATTENTION(float)
STYLEFORMER_INSTANTIATE_ATTENTION(double)

}  // namespace styleformer
