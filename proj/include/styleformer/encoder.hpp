#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "styleformer/attention.hpp"
#include "styleformer/parameters.hpp"
#include "styleformer/style.hpp"

namespace styleformer {

enum class LayerNormPosition { Pre, A, B, None };
enum class ResidualMode { Modified, A, B, None };
enum class StyleValueMode { On, Off, TiedToInput };
enum class StyleInputMode { On, Off };

/// Encoder wiring switches. The default-constructed value is the baseline.
///
/// Layer norm: Pre = after Mod Input, before the Q/K/V projection;
/// A = after multi-head integration; B = at the end of the block.
/// Residual: Modified = demodulated linear map of the value-modulated
/// features; A = plain linear map of the unmodulated block input;
/// B = plain linear map of the (normalized) modulated input.
struct AblationVariant {
  LayerNormPosition layernorm = LayerNormPosition::Pre;
  ResidualMode residual = ResidualMode::Modified;
  StyleValueMode style_value = StyleValueMode::On;
  StyleInputMode style_input = StyleInputMode::On;
  bool feed_forward = false;

  static AblationVariant baseline() { return {}; }
  /// One of ablation_variant_names(); throws ConfigError otherwise.
  static AblationVariant named(std::string_view name);
  std::string name() const;

  /// Columns: Style1, Style2, Style1=Style2, Residual A, Residual B,
  /// Residual C, Layernorm A, Layernorm B, Layernorm C, Feed-Forward.
  std::array<bool, 10> table_pattern() const;

  bool operator==(const AblationVariant&) const = default;
};

/// Baseline first, then one entry per single-component ablation.
const std::vector<std::string>& ablation_variant_names();

/// Toggles used by the verification harness for negative controls.
struct DemodSwitches {
  bool qk = true;
  bool v = true;
  bool output = true;
  bool residual = true;
  bool operator==(const DemodSwitches&) const = default;
};

enum class NoiseMode { Random, None, FixedBuffer };

struct NoiseSpec {
  NoiseMode mode = NoiseMode::None;
  /// Random mode: noise for block b of sample s is drawn from stream
  /// (seed, "noise") -> sample -> block name.
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  /// One spatial noise column broadcast across channels instead of
  /// independent noise per (pixel, channel).
  bool shared_across_channels = false;
  /// FixedBuffer mode: per-block buffers (pixels x channels, or pixels x 1).
  std::map<std::string, Tensor<double>> buffers;

  static NoiseSpec none() { return {}; }
  static NoiseSpec random(std::uint64_t seed, std::uint64_t sample = 0) {
    NoiseSpec n;
    n.mode = NoiseMode::Random;
    n.seed = seed;
    n.sample = sample;
    return n;
  }
};

/// Noise sheet for one block, or nullopt when noise is off.
template <class T>
std::optional<Tensor<T>> noise_for_block(const NoiseSpec& spec, const std::string& block,
                                         std::size_t pixels, std::size_t channels);

struct EncoderConfig {
  std::string name = "encoder";
  std::size_t in_channels = 0;
  std::size_t hidden = 0;
  std::size_t out_channels = 0;
  std::size_t pixels = 0;
  /// Zero means the standard hidden/32 heads.
  std::size_t heads_override = 0;
  AblationVariant variant;
  LinformerRule linformer;
  DemodSwitches demod;
  bool bias_before_noise = true;

  HeadConfig head_config() const {
    return heads_override == 0 ? HeadConfig::standard(hidden)
                               : HeadConfig::with_heads(hidden, heads_override);
  }
};

/// Intermediate values captured during one forward pass.
template <class T>
struct EncoderTrace {
  std::vector<std::string> stages;
  Tensor<T> style_input, style_value;
  Tensor<T> normalized;            // input to the Q/K/V projection
  Tensor<T> q, k, v;               // after demodulation
  Tensor<T> value_modulated;       // V after Mod Value
  std::vector<Tensor<T>> attention;
  Tensor<T> integrated;            // after sigma'' division, before residual
  Tensor<T> residual;
  Tensor<T> pre_activation;        // after bias and noise
  Tensor<T> output;
};

template <class T>
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParameterStore<T>& store, AffineBank<T>& bank, std::uint64_t seed,
               EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  void set_demod(DemodSwitches d) { config_.demod = d; }
  bool linformer_active() const noexcept { return e_.defined(); }
  const std::string& style_input_id() const noexcept { return style_input_id_; }
  const std::string& style_value_id() const noexcept { return style_value_id_; }

  /// Full block: styles come from the block's affines applied to `w` (1 x W).
  Var<T> forward(const Var<T>& x, const Var<T>& w, const NoiseSpec& noise,
                 EncoderTrace<T>* trace = nullptr) const;
  /// Same pipeline with explicit style vectors (1 x C_in, 1 x hidden).
  Var<T> forward_with_styles(const Var<T>& x, const Var<T>& style_input,
                             const Var<T>& style_value, const NoiseSpec& noise,
                             EncoderTrace<T>* trace = nullptr) const;

  /// Parameter count of this block including its affines.
  std::size_t parameter_count() const;

  Var<T> ln_gain, ln_bias, qkv_weight, wo, residual_weight, bias, noise_strength, e_;
  Var<T> ff1, ff2;

 private:
  EncoderConfig config_;
  AffineStyle<T> style_input_;
  AffineStyle<T> style_value_;
  std::string style_input_id_, style_value_id_;
};

/// Table columns (same order as AblationVariant::table_pattern) recovered from
/// the stage labels a traced forward pass actually executed.
std::array<bool, 10> observed_table_pattern(const std::vector<std::string>& stages);

/// One encoder block with its own parameter store and affine bank, for
/// experiments that do not need a full generator. Not movable: the bank
/// points into the store.
template <class T>
class StandaloneEncoder {
 public:
  StandaloneEncoder(EncoderConfig config, std::uint64_t seed, std::size_t w_dim = 512)
      : bank(&store, seed, w_dim), block(store, bank, seed, std::move(config)), w_dim_(w_dim) {}
  StandaloneEncoder(const StandaloneEncoder&) = delete;
  StandaloneEncoder& operator=(const StandaloneEncoder&) = delete;

  std::size_t w_dim() const noexcept { return w_dim_; }

  ParameterStore<T> store;
  AffineBank<T> bank;
  EncoderBlock<T> block;

 private:
  std::size_t w_dim_;
};

/// Optional transformer feed-forward: y + lrelu(y W1) W2 (expansion 4, no biases).
template <class T>
Var<T> feed_forward_optional(const Var<T>& y, const Var<T>& w1, const Var<T>& w2);

}  // namespace styleformer
