#pragma once

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "voxseg/features.hpp"
#include "voxseg/forest.hpp"
#include "voxseg/mlp.hpp"

namespace voxseg {

// A trained segmenter in one self-describing file: format version, the
// feature recipe, label names, and the classifier payload. Everything a
// `segment` run needs besides the volume itself.

struct TrainedModel {
  static constexpr int kFormatVersion = 1;

  FeatureSpec features;
  std::vector<std::string> label_names;
  std::variant<RandomForest, MlpModel> classifier;

  std::string kind() const {
    return std::holds_alternative<RandomForest>(classifier) ? "forest" : "network";
  }
  int n_classes() const { return int(label_names.size()); }

  std::vector<double> predict_proba(std::span<const double> row) const {
    return std::visit([&](const auto& c) { return c.predict_proba(row); }, classifier);
  }
  int predict(std::span<const double> row) const {
    return std::visit([&](const auto& c) { return c.predict(row); }, classifier);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"format_version", kFormatVersion},
                     {"kind", kind()},
                     {"features", features},
                     {"label_names", label_names}};
    if (const auto* f = std::get_if<RandomForest>(&classifier))
      j["classifier"] = forest_to_json(*f);
    else
      j["classifier"] = mlp_to_json(std::get<MlpModel>(classifier));
    return j;
  }

  static TrainedModel from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
      throw IoError(IoError::Kind::bad_metadata, "model file missing format_version");
    const int ver = j.at("format_version").get<int>();
    if (ver != kFormatVersion)
      throw IoError(IoError::Kind::bad_metadata,
                    "unsupported model format_version " + std::to_string(ver));
    TrainedModel m;
    j.at("features").get_to(m.features);
    j.at("label_names").get_to(m.label_names);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "forest")
      m.classifier = forest_from_json(j.at("classifier"));
    else if (kind == "network")
      m.classifier = mlp_from_json(j.at("classifier"));
    else
      throw IoError(IoError::Kind::bad_metadata, "unknown classifier kind '" + kind + "'");
    if (m.label_names.size() < 2)
      throw IoError(IoError::Kind::bad_metadata, "model needs at least two labels");
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoError::Kind::write_failure, "cannot write " + path);
    os << to_json().dump(1, '\t') << "\n";
    if (!os) throw IoError(IoError::Kind::write_failure, "short write to " + path);
  }

  static TrainedModel load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::missing_file, "cannot open " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(IoError::Kind::bad_metadata, std::string("bad model file: ") + e.what());
    }
    return from_json(j);
  }
};

}  // namespace voxseg
