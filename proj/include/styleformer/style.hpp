#pragma once

// Latent mapping, per-layer affine styles and the modulation/demodulation
// algebra shared by the encoder, ToRGB and convolutional style blocks.

#include <map>
#include <string>

#include "styleformer/autodiff.hpp"
#include "styleformer/parameters.hpp"

namespace styleformer {

inline constexpr double kLeakySlope = 0.2;

/// Input latent, 1 x Z, standard normal.
template <class T>
struct LatentZ {
  Tensor<T> values;
  std::size_t dim() const noexcept { return values.cols(); }
  static LatentZ sample(std::size_t dim, RngStream& rng) {
    return {rng.normal_tensor<T>(1, dim)};
  }
};

/// Intermediate latent, 1 x W. Produced by MappingNetwork::map.
template <class T>
struct LatentW {
  Tensor<T> values;
  std::size_t dim() const noexcept { return values.cols(); }
  bool operator==(const LatentW&) const = default;
};

enum class StyleRole { Input, Value, Rgb, Conv };

const char* to_string(StyleRole role);

/// Per-channel scales for one modulated tensor axis.
template <class T>
struct StyleVector {
  Tensor<T> scales;  // 1 x channels
  StyleRole role = StyleRole::Input;
  std::size_t size() const noexcept { return scales.cols(); }
};

/// W' = diag(s) W together with its demodulation coefficients
/// sigma_j = sqrt(sum_i W'_ij^2), floored at kDemodFloor.
template <class T>
struct ModulatedWeight {
  Tensor<T> weight;
  Tensor<T> demod;  // 1 x out
};

template <class T>
ModulatedWeight<T> modulate(const Tensor<T>& weight, const Tensor<T>& style);

/// (X W') with column j divided by sigma_j.
template <class T>
Tensor<T> apply_demodulated(const Tensor<T>& x, const ModulatedWeight<T>& mw);

/// sigma''_k for an integration weight modulated by the value style. Dividing
/// the integrated output by it leaves per-pixel std sqrt(sum_m A_lm^2).
template <class T>
Tensor<T> output_demod_coeffs(const ModulatedWeight<T>& integration) {
  return integration.demod;
}

/// Predicted per-pixel std of the demodulated attention branch for each row
/// of a row-stochastic attention matrix: sqrt(sum_m A_lm^2).
template <class T>
std::vector<double> residual_std_prediction(const Tensor<T>& attention);

/// Graph form of modulate + demodulate: returns (x W) / sigma(diag(s) W).
/// `x` is expected to carry the style already (Mod Input / Mod Value), so
/// modulation of activations and of weights agree exactly in value.
template <class T>
Var<T> demodulated_linear(const Var<T>& x, const Var<T>& weight, const Var<T>& style,
                          bool demodulate = true);

/// Two fully connected layers with a leaky ReLU (slope 0.2) between them.
template <class T>
class MappingNetwork {
 public:
  MappingNetwork() = default;
  MappingNetwork(ParameterStore<T>& store, std::uint64_t seed, std::size_t z_dim,
                 std::size_t w_dim);

  std::size_t z_dim() const noexcept { return z_dim_; }
  std::size_t w_dim() const noexcept { return w_dim_; }
  /// Number of weight matrices (always 2).
  static constexpr std::size_t depth() noexcept { return 2; }

  Var<T> forward(const Var<T>& z) const;
  LatentW<T> map(const LatentZ<T>& z) const;

  Var<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;

 private:
  std::size_t z_dim_ = 0;
  std::size_t w_dim_ = 0;
};

/// s = w A + b with bias initialized to 1.
template <class T>
struct AffineStyle {
  Var<T> weight;  // W x C
  Var<T> bias;    // 1 x C
  StyleRole role = StyleRole::Input;

  std::size_t channels() const { return bias.cols(); }
  Var<T> forward(const Var<T>& w) const;
};

/// Registry of per-layer affine transforms keyed by layer id.
template <class T>
class AffineBank {
 public:
  AffineBank() = default;
  AffineBank(ParameterStore<T>* store, std::uint64_t seed, std::size_t w_dim)
      : store_(store), seed_(seed), w_dim_(w_dim) {}

  /// Creates parameters "<id>.weight" / "<id>.bias" in the store.
  const AffineStyle<T>& register_layer(const std::string& layer_id, std::size_t channels,
                                       StyleRole role);
  bool contains(const std::string& layer_id) const { return layers_.count(layer_id) != 0; }
  const AffineStyle<T>& at(const std::string& layer_id) const;

  /// affine_style(w, layer_id); throws std::out_of_range for unknown ids.
  StyleVector<T> style(const LatentW<T>& w, const std::string& layer_id) const;

 private:
  ParameterStore<T>* store_ = nullptr;
  std::uint64_t seed_ = 0;
  std::size_t w_dim_ = 0;
  std::map<std::string, AffineStyle<T>> layers_;
};

}  // namespace styleformer
