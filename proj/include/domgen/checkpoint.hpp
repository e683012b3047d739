#pragma once

#include <string>

#include "domgen/mlp.hpp"

#include <json.hpp>

namespace domgen {

// {"layers": [{"rows", "cols", "w": [...], "b": [...]}], "activation": "relu"}
// Round-trips are bit-exact for finite doubles.
nlohmann::json mlp_to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);

void save_mlp(const MlpParams& params, const std::string& path);
MlpParams load_mlp(const std::string& path);

}  // namespace domgen
