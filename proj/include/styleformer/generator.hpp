#pragma once

// Full generators: constant input -> per-resolution encoder (or convolutional)
// stages -> ToRGB output-skip accumulation, plus style mixing and attention
// export.

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "styleformer/encoder.hpp"
#include "styleformer/op_counter.hpp"

namespace styleformer {

enum class GeneratorMode { Styleformer, StyleformerL, StyleformerC };

const char* to_string(GeneratorMode mode);
GeneratorMode parse_generator_mode(std::string_view text);

struct GeneratorConfig {
  std::string preset = "custom";
  std::size_t start_resolution = 8;
  std::size_t target_resolution = 32;
  std::vector<std::size_t> layers;
  std::vector<std::size_t> hidden;
  /// Optional per-stage head counts (0 = hidden / 32). Needed for stages whose
  /// hidden size is not a multiple of 32.
  std::vector<std::size_t> heads;
  GeneratorMode mode = GeneratorMode::Styleformer;
  std::size_t linformer_k = kLinformerK;
  std::size_t linformer_min_pixels = kLinformerMinPixels;
  /// Styleformer-C: stages above this resolution use convolutional blocks.
  /// Style mixing uses it as the low/high split for every mode.
  std::size_t hybrid_cutoff = 32;
  std::size_t rgb_channels = 3;
  std::size_t z_dim = 512;
  std::size_t w_dim = 512;
  std::uint64_t seed = 0;
  AblationVariant variant;
  /// Add a learned positional encoding at every stage entry (default) or only
  /// to the constant input.
  bool positional_encoding_every_stage = true;
  bool bias_before_noise = true;

  std::size_t stage_count() const noexcept { return layers.size(); }
  std::size_t resolution(std::size_t stage) const;
  bool is_conv_stage(std::size_t stage) const;
  /// Channels entering stage t (hidden[t-1], or hidden[0] for the constant).
  std::size_t incoming_channels(std::size_t stage) const;
  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  static GeneratorConfig preset_config(std::string_view name);
  static const std::vector<std::string>& preset_names();

  bool operator==(const GeneratorConfig&) const = default;
};

struct StageSummary {
  std::size_t index = 0;
  std::size_t resolution = 0;
  std::size_t pixels = 0;
  std::size_t in_channels = 0;
  std::size_t hidden = 0;
  std::size_t blocks = 0;
  bool conv = false;
  std::size_t heads = 0;
  bool linformer = false;
  std::size_t parameters = 0;
  /// Analytic attention cost summed over the stage's encoder blocks.
  std::uint64_t attention_flops = 0;
  std::uint64_t attention_map_elements = 0;
};

/// One style-consuming layer. Encoder blocks take one w (feeding both of their
/// affines), each convolution takes one, each ToRGB takes one.
struct StyleSlot {
  std::string layer;
  std::size_t stage = 0;
  std::size_t resolution = 0;
  StyleRole role = StyleRole::Input;
};

template <class T>
struct StageTrace {
  std::size_t resolution = 0;
  Tensor<T> entry;   // sheet entering the first block (after positional encoding)
  Tensor<T> output;  // sheet after the last block
  Tensor<T> rgb;     // this stage's ToRGB contribution, pixels x rgb_channels
  Tensor<T> image;   // accumulated output-skip image at this resolution
  std::vector<AttentionTensor<T>> attention;  // one per encoder block
  OpCounts ops;
};

template <class T>
struct GeneratorTrace {
  std::vector<StageTrace<T>> stages;
};

/// Attention maps of every encoder block for one latent.
template <class T>
struct AttentionExport {
  struct Block {
    std::size_t stage = 0;
    std::size_t block = 0;
    std::size_t resolution = 0;
    bool linformer = false;
    AttentionTensor<T> maps;
  };
  std::vector<Block> blocks;

  /// Attention of one query pixel over the pixel grid, as a side x side map.
  /// Throws ConfigError for Linformer blocks (columns are not pixels).
  Tensor<T> heatmap(std::size_t block, std::size_t head, std::size_t query_pixel) const;
};

/// Two modulated, demodulated 3x3 convolutions, each followed by bias, noise
/// and leaky ReLU.
template <class T>
struct HybridConvBlock {
  std::string name;
  std::size_t in_channels = 0, channels = 0, side = 0;
  Var<T> weight[2], bias[2], noise_strength[2];
  AffineStyle<T> style[2];

  Var<T> forward(const Var<T>& x, const Var<T>& w0, const Var<T>& w1, const NoiseSpec& noise) const;
  std::size_t parameter_count() const;
};

/// Modulated, demodulated 3x3 convolution: conv(x * s, W) / sigma(s, W).
template <class T>
Var<T> modulated_conv3x3(const Var<T>& x, std::size_t side, const Var<T>& weight,
                         const Var<T>& style, bool demodulate = true);

template <class T>
class Generator {
 public:
  explicit Generator(GeneratorConfig config);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  const GeneratorConfig& config() const noexcept { return config_; }
  const std::vector<StageSummary>& stages() const noexcept { return summaries_; }
  const std::vector<StyleSlot>& style_slots() const noexcept { return slots_; }
  std::size_t parameter_count() const { return store_.scalar_count(); }
  ParameterStore<T>& parameters() noexcept { return store_; }
  const ParameterStore<T>& parameters() const noexcept { return store_; }
  const MappingNetwork<T>& mapping() const noexcept { return mapping_; }

  LatentZ<T> sample_latent(RngStream& rng) const { return LatentZ<T>::sample(config_.z_dim, rng); }
  LatentW<T> map(const LatentZ<T>& z) const { return mapping_.map(z); }

  /// Inference (no graph). Returns target x target x rgb_channels.
  FeatureMap<T> synthesize(const LatentZ<T>& z, const NoiseSpec& noise,
                           GeneratorTrace<T>* trace = nullptr) const;
  /// One w per style slot.
  FeatureMap<T> synthesize_with_styles(const std::vector<LatentW<T>>& ws, const NoiseSpec& noise,
                                       GeneratorTrace<T>* trace = nullptr) const;

  /// Graph forms for training; return the (target^2) x rgb_channels sheet.
  Var<T> forward(const Var<T>& z, const NoiseSpec& noise, GeneratorTrace<T>* trace = nullptr) const;
  Var<T> forward_styles(const std::vector<Var<T>>& ws, const NoiseSpec& noise,
                        GeneratorTrace<T>* trace = nullptr) const;

  /// Slots at resolution <= cutoff take `low`, the rest take `high`.
  std::vector<LatentW<T>> mixed_styles(const LatentW<T>& low, const LatentW<T>& high,
                                       std::size_t cutoff) const;
  std::vector<LatentW<T>> mixed_styles(const LatentW<T>& low, const LatentW<T>& high) const {
    return mixed_styles(low, high, config_.hybrid_cutoff);
  }

  AttentionExport<T> export_attention(const LatentZ<T>& z,
                                      const NoiseSpec& noise = NoiseSpec::none()) const;

 private:
  struct Stage {
    std::size_t resolution = 0;
    Var<T> positional;  // may be undefined
    std::vector<EncoderBlock<T>> encoders;
    std::vector<HybridConvBlock<T>> convs;
    Var<T> rgb_weight, rgb_bias;
    AffineStyle<T> rgb_style;
  };

  GeneratorConfig config_;
  ParameterStore<T> store_;
  AffineBank<T> bank_;
  MappingNetwork<T> mapping_;
  Var<T> constant_;
  std::vector<Stage> stages_;
  std::vector<StageSummary> summaries_;
  std::vector<StyleSlot> slots_;
};

}  // namespace styleformer
