#pragma once

// JSON form of generator configurations.
//
// Schema (every key optional except where a preset is absent):
//   preset            string, a known preset name fills in every other key first
//   start_resolution, target_resolution, linformer_k, linformer_min_pixels,
//   hybrid_cutoff, rgb_channels, z_dim, w_dim, seed     unsigned integers
//   layers, hidden, heads                               arrays of unsigned integers
//   mode              "styleformer" | "styleformer-l" | "styleformer-c"
//   variant           a variant name ("baseline", "layernorm-a", ...) or an object
//                     {layernorm: pre|a|b|none, residual: modified|a|b|none,
//                      style_value: on|off|tied, style_input: on|off, feed_forward: bool}
//   positional_encoding_every_stage, bias_before_noise  booleans
// Unknown keys are rejected with ConfigError.

#include <cstdint>
#include <string>
#include <string_view>

#include "styleformer/generator.hpp"

namespace styleformer {

/// Canonical JSON (fixed key order, every key present).
std::string generator_config_to_json(const GeneratorConfig& config, int indent = 2);
/// Parses and validates; throws ConfigError on malformed input or a config
/// that fails GeneratorConfig::validate().
GeneratorConfig generator_config_from_json(std::string_view text);

std::string variant_to_json(const AblationVariant& v);
AblationVariant variant_from_json(std::string_view text);

/// FNV-1a of the canonical compact JSON; equal configs hash equal.
std::uint64_t config_hash(const GeneratorConfig& config);
std::string hex64(std::uint64_t value);

}  // namespace styleformer
