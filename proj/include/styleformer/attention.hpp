#pragma once

#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

#include "styleformer/autodiff.hpp"
#include "styleformer/op_counter.hpp"
#include "styleformer/style.hpp"

namespace styleformer {

/// Channels per attention head.
inline constexpr std::size_t kHeadDepth = 32;
inline constexpr std::size_t kLinformerK = 256;
inline constexpr std::size_t kLinformerMinPixels = 1024;

struct HeadConfig {
  std::size_t hidden_dim = 0;
  std::size_t depth = kHeadDepth;
  std::size_t heads = 0;

  /// heads = hidden / 32; hidden must be a positive multiple of 32.
  static HeadConfig standard(std::size_t hidden_dim);
  /// Explicit head count for head-sweep experiments; depth = hidden / heads.
  static HeadConfig with_heads(std::size_t hidden_dim, std::size_t heads);

  bool operator==(const HeadConfig&) const = default;
};

/// Per-head n x m row-stochastic attention maps.
template <class T>
struct AttentionTensor {
  std::vector<Tensor<T>> heads;
  std::size_t head_count() const noexcept { return heads.size(); }
  std::size_t rows() const { return heads.empty() ? 0 : heads.front().rows(); }
  std::size_t cols() const { return heads.empty() ? 0 : heads.front().cols(); }
};

template <class T>
std::vector<Tensor<T>> split_heads(const Tensor<T>& x, const HeadConfig& cfg);
template <class T>
Tensor<T> merge_heads(const std::vector<Tensor<T>>& heads);

/// softmax(Q K^T / sqrt(depth)); K may have fewer rows than Q (Linformer).
template <class T>
Tensor<T> attention_map(const Tensor<T>& q, const Tensor<T>& k);
/// head = A V
template <class T>
Tensor<T> attend(const Tensor<T>& a, const Tensor<T>& v);
/// Concat(heads) W' with column k divided by sigma''_k.
template <class T>
Tensor<T> integrate_heads(const std::vector<Tensor<T>>& heads, const ModulatedWeight<T>& wo);

/// (E^T K, E^T V): projects keys and values along the pixel axis with one
/// shared n x k matrix.
template <class T>
std::pair<Tensor<T>, Tensor<T>> linformer_project(const Tensor<T>& k, const Tensor<T>& v,
                                                  const Tensor<T>& e);

/// When the Linformer projection is used in an encoder block.
struct LinformerRule {
  bool enabled = false;           // styleformer-L mode
  std::size_t k = kLinformerK;
  std::size_t min_pixels = kLinformerMinPixels;
  bool force = false;             // apply regardless of n (experiments/tests)

  bool active(std::size_t pixels) const noexcept {
    return enabled && (force || pixels >= min_pixels);
  }
  bool operator==(const LinformerRule&) const = default;
};

/// Analytic cost of one attention stage (all heads), matching what the
/// dense kernels report to OpCounter.
struct AttentionCost {
  std::uint64_t flops = 0;
  std::uint64_t map_elements_per_head = 0;
};
AttentionCost attention_stage_cost(std::size_t pixels, std::size_t hidden, std::size_t heads,
                                   std::size_t linformer_k /*0 = full*/);

/// Dense multi-head attention over already demodulated/modulated Q, K, V:
/// optional shared Linformer projection of K and V, per-head attention in
/// index order, concatenation. Per-head maps are stored when `maps` is set.
template <class T>
Tensor<T> attention_stage(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const HeadConfig& cfg,
                          const std::type_identity_t<Tensor<T>>* e = nullptr,
                          AttentionTensor<T>* maps = nullptr);

/// Graph form: per-head attention over already demodulated/modulated Q, K, V.
/// Returns the concatenated heads (n x hidden). When `maps` is non-null the
/// per-head attention matrices are appended to it.
template <class T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                            const HeadConfig& cfg, std::vector<Var<T>>* maps = nullptr);

}  // namespace styleformer
