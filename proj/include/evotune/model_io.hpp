#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "evotune/dataset.hpp"
#include "evotune/mlp.hpp"
#include "evotune/pipeline.hpp"

namespace evotune {

inline constexpr int model_format_version = 1;

// A trained classifier together with the preprocessing that feeds it.
// Serialized layout is described in docs/model-format.md.
struct SavedModel {
  MlpConfig config;
  MlpModel<double> mlp;
  Preprocessor preprocessor;
  nlohmann::json metadata = nlohmann::json::object();

  Eigen::MatrixXd predict_proba(const TabularDataset& rows) const;
  Eigen::VectorXi predict(const TabularDataset& rows) const;
};

nlohmann::json to_json(const SavedModel& model);
// Throws InvalidInput when the document is malformed or of another version.
SavedModel model_from_json(const nlohmann::json& j);

void save_model(const SavedModel& model, const std::string& path);
SavedModel load_model(const std::string& path);

nlohmann::json to_json(const MlpConfig& config);
MlpConfig mlp_config_from_json(const nlohmann::json& j);

}  // namespace evotune
