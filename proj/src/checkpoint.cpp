#include "domgen/checkpoint.hpp"

#include <fstream>

#include "domgen/errors.hpp"

using nlohmann::json;

namespace domgen {

json mlp_to_json(const MlpParams& params) {
  validate_mlp(params);
  json layers = json::array();
  for (const MlpLayer& l : params.layers) {
    layers.push_back({{"rows", l.w.rows},
                      {"cols", l.w.cols},
                      {"w", l.w.data},
                      {"b", l.b.data}});
  }
  return json{{"layers", layers}, {"activation", "relu"}};
}

MlpParams mlp_from_json(const json& j) {
  if (!j.is_object() || !j.contains("layers") || !j.contains("activation")) {
    throw parse_error("mlp checkpoint: missing layers/activation");
  }
  if (j.at("activation").get<std::string>() != "relu") {
    throw config_error("mlp checkpoint: unsupported activation \"" +
                       j.at("activation").get<std::string>() + "\"");
  }
  MlpParams params;
  for (const json& jl : j.at("layers")) {
    MlpLayer layer;
    const auto rows = jl.at("rows").get<std::size_t>();
    const auto cols = jl.at("cols").get<std::size_t>();
    layer.w = Matrix(rows, cols, jl.at("w").get<std::vector<double>>());
    layer.b = Matrix(1, cols, jl.at("b").get<std::vector<double>>());
    params.layers.push_back(std::move(layer));
  }
  validate_mlp(params);
  for (const MlpLayer& l : params.layers) {
    ensure_finite(l.w, "mlp checkpoint weights");
    ensure_finite(l.b, "mlp checkpoint biases");
  }
  return params;
}

void save_mlp(const MlpParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << mlp_to_json(params).dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

MlpParams load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error("checkpoint " + path + ": " + e.what());
  }
  return mlp_from_json(j);
}

}  // namespace domgen
