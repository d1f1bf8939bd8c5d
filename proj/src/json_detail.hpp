#pragma once

// nlohmann-level helpers shared by the config, checkpoint and report code.

#include "json.hpp"
#include "styleformer/generator.hpp"

namespace styleformer::detail {

using Json = nlohmann::ordered_json;

Json to_json_value(const GeneratorConfig& config);
GeneratorConfig generator_config_from(const Json& j);
Json to_json_value(const AblationVariant& v);
AblationVariant variant_from(const Json& j);

/// Parses, converting nlohmann's exceptions to ConfigError.
Json parse_json(std::string_view text, const char* what);

}  // namespace styleformer::detail
