#include "styleformer/config_io.hpp"

#include <algorithm>
#include <cstdio>

#include "json_detail.hpp"

namespace styleformer {
namespace detail {

namespace {

const char* ln_name(LayerNormPosition p) {
  switch (p) {
    case LayerNormPosition::Pre: return "pre";
    case LayerNormPosition::A: return "a";
    case LayerNormPosition::B: return "b";
    case LayerNormPosition::None: return "none";
  }
  return "pre";
}

const char* residual_name(ResidualMode m) {
  switch (m) {
    case ResidualMode::Modified: return "modified";
    case ResidualMode::A: return "a";
    case ResidualMode::B: return "b";
    case ResidualMode::None: return "none";
  }
  return "modified";
}

template <class E, std::size_t N>
E parse_enum(const Json& j, const char* key, const std::pair<const char*, E> (&table)[N]) {
  if (!j.is_string()) throw ConfigError(std::string("variant.") + key + " must be a string");
  const auto s = j.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ConfigError(std::string("variant.") + key + ": unknown value '" + s + "'");
}

std::size_t get_size(const Json& j, const char* key) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ConfigError(std::string(key) + " must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

std::vector<std::size_t> get_sizes(const Json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string(key) + " must be an array");
  std::vector<std::size_t> out;
  for (const auto& e : j) out.push_back(get_size(e, key));
  return out;
}

bool get_bool(const Json& j, const char* key) {
  if (!j.is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
  return j.get<bool>();
}

}  // namespace

Json parse_json(std::string_view text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

Json to_json_value(const AblationVariant& v) {
  Json j;
  j["layernorm"] = ln_name(v.layernorm);
  j["residual"] = residual_name(v.residual);
  j["style_value"] = v.style_value == StyleValueMode::On    ? "on"
                     : v.style_value == StyleValueMode::Off ? "off"
                                                            : "tied";
  j["style_input"] = v.style_input == StyleInputMode::On ? "on" : "off";
  j["feed_forward"] = v.feed_forward;
  return j;
}

AblationVariant variant_from(const Json& j) {
  if (j.is_string()) return AblationVariant::named(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("variant must be a name or an object");
  static const std::pair<const char*, LayerNormPosition> ln[] = {
      {"pre", LayerNormPosition::Pre}, {"a", LayerNormPosition::A},
      {"b", LayerNormPosition::B},     {"none", LayerNormPosition::None}};
  static const std::pair<const char*, ResidualMode> res[] = {
      {"modified", ResidualMode::Modified}, {"a", ResidualMode::A},
      {"b", ResidualMode::B},               {"none", ResidualMode::None}};
  static const std::pair<const char*, StyleValueMode> sv[] = {
      {"on", StyleValueMode::On}, {"off", StyleValueMode::Off}, {"tied", StyleValueMode::TiedToInput}};
  static const std::pair<const char*, StyleInputMode> si[] = {{"on", StyleInputMode::On},
                                                              {"off", StyleInputMode::Off}};
  AblationVariant v;
  for (const auto& [key, value] : j.items()) {
    if (key == "layernorm") v.layernorm = parse_enum(value, "layernorm", ln);
    else if (key == "residual") v.residual = parse_enum(value, "residual", res);
    else if (key == "style_value") v.style_value = parse_enum(value, "style_value", sv);
    else if (key == "style_input") v.style_input = parse_enum(value, "style_input", si);
    else if (key == "feed_forward") v.feed_forward = get_bool(value, "variant.feed_forward");
    else throw ConfigError("variant: unknown key '" + key + "'");
  }
  return v;
}

Json to_json_value(const GeneratorConfig& c) {
  Json j;
  j["preset"] = c.preset;
  j["start_resolution"] = c.start_resolution;
  j["target_resolution"] = c.target_resolution;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["mode"] = to_string(c.mode);
  j["linformer_k"] = c.linformer_k;
  j["linformer_min_pixels"] = c.linformer_min_pixels;
  j["hybrid_cutoff"] = c.hybrid_cutoff;
  j["rgb_channels"] = c.rgb_channels;
  j["z_dim"] = c.z_dim;
  j["w_dim"] = c.w_dim;
  j["seed"] = c.seed;
  j["variant"] = to_json_value(c.variant);
  j["positional_encoding_every_stage"] = c.positional_encoding_every_stage;
  j["bias_before_noise"] = c.bias_before_noise;
  return j;
}

GeneratorConfig generator_config_from(const Json& j) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  GeneratorConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset must be a string");
    const auto name = j["preset"].get<std::string>();
    const auto& names = GeneratorConfig::preset_names();
    if (std::find(names.begin(), names.end(), name) != names.end()) {
      c = GeneratorConfig::preset_config(name);
    } else {
      c.preset = name;
      if (!j.contains("layers")) throw ConfigError("unknown preset '" + name + "' and no explicit layers");
    }
  } else if (!j.contains("layers")) {
    throw ConfigError("generator config needs a preset or explicit layers/hidden");
  }
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "preset") continue;
    else if (key == "start_resolution") c.start_resolution = get_size(v, k);
    else if (key == "target_resolution") c.target_resolution = get_size(v, k);
    else if (key == "layers") c.layers = get_sizes(v, k);
    else if (key == "hidden") c.hidden = get_sizes(v, k);
    else if (key == "heads") c.heads = get_sizes(v, k);
    else if (key == "mode") {
      if (!v.is_string()) throw ConfigError("mode must be a string");
      c.mode = parse_generator_mode(v.get<std::string>());
    } else if (key == "linformer_k") c.linformer_k = get_size(v, k);
    else if (key == "linformer_min_pixels") c.linformer_min_pixels = get_size(v, k);
    else if (key == "hybrid_cutoff") c.hybrid_cutoff = get_size(v, k);
    else if (key == "rgb_channels") c.rgb_channels = get_size(v, k);
    else if (key == "z_dim") c.z_dim = get_size(v, k);
    else if (key == "w_dim") c.w_dim = get_size(v, k);
    else if (key == "seed") c.seed = get_size(v, k);
    else if (key == "variant") c.variant = variant_from(v);
    else if (key == "positional_encoding_every_stage") c.positional_encoding_every_stage = get_bool(v, k);
    else if (key == "bias_before_noise") c.bias_before_noise = get_bool(v, k);
    else throw ConfigError("generator config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace detail

std::string generator_config_to_json(const GeneratorConfig& config, int indent) {
  return detail::to_json_value(config).dump(indent);
}

GeneratorConfig generator_config_from_json(std::string_view text) {
  return detail::generator_config_from(detail::parse_json(text, "generator config"));
}

std::string variant_to_json(const AblationVariant& v) { return detail::to_json_value(v).dump(); }

AblationVariant variant_from_json(std::string_view text) {
  return detail::variant_from(detail::parse_json(text, "variant"));
}

std::uint64_t config_hash(const GeneratorConfig& config) {
  return fnv1a64(detail::to_json_value(config).dump());
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace styleformer
