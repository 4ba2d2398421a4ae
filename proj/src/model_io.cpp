#include "evotune/model_io.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "evotune/errors.hpp"

namespace evotune {

namespace {

using json = nlohmann::json;

template <typename Derived>
json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (std::isnan(v)) {
        row.push_back(nullptr);
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Derived>
json vector_to_json(const Eigen::MatrixBase<Derived>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

double number_or_nan(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index expected_cols = -1) {
  if (!j.is_array()) throw InvalidInput("model file: expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : std::max<Eigen::Index>(expected_cols, 0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidInput("model file: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number_or_nan(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidInput("model file: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json kpca_to_json(const KpcaModel<double>& k) {
  return {{"gamma", k.gamma},
          {"n_components", k.n_components},
          {"variance_target", k.variance_target},
          {"eigenvalues", vector_to_json(k.eigenvalues)},
          {"k_row_means", vector_to_json(k.k_row_means)},
          {"k_grand_mean", k.k_grand_mean},
          {"train_rows", matrix_to_json(k.train_rows)},
          {"alphas", matrix_to_json(k.alphas)}};
}

KpcaModel<double> kpca_from_json(const json& j) {
  KpcaModel<double> k;
  k.gamma = j.at("gamma").get<double>();
  k.n_components = j.at("n_components").get<Eigen::Index>();
  k.variance_target = j.at("variance_target").get<double>();
  k.eigenvalues = vector_from_json(j.at("eigenvalues"));
  k.k_row_means = vector_from_json(j.at("k_row_means"));
  k.k_grand_mean = j.at("k_grand_mean").get<double>();
  k.train_rows = matrix_from_json(j.at("train_rows"));
  k.alphas = matrix_from_json(j.at("alphas"), k.n_components);
  if (k.alphas.rows() != k.train_rows.rows() || k.alphas.cols() != k.n_components ||
      k.k_row_means.size() != k.train_rows.rows()) {
    throw InvalidInput("model file: inconsistent kpca dimensions");
  }
  if (!(k.gamma > 0)) throw InvalidInput("model file: kpca gamma must be positive");
  return k;
}

}  // namespace

nlohmann::json to_json(const MlpConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"activation", to_string(c.activation)},
          {"learning_rate_init", c.learning_rate_init},
          {"solver", to_string(c.solver)},
          {"max_iter", c.max_iter},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"tol", c.tol}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.learning_rate_init = j.at("learning_rate_init").get<double>();
  c.solver = parse_solver(j.at("solver").get<std::string>());
  c.max_iter = j.at("max_iter").get<int>();
  c.batch_size = j.value("batch_size", 0);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tol = j.value("tol", 0.0);
  return c;
}

Eigen::MatrixXd SavedModel::predict_proba(const TabularDataset& rows) const {
  return evotune::predict_proba(mlp, preprocessor.transform(rows));
}

Eigen::VectorXi SavedModel::predict(const TabularDataset& rows) const {
  return evotune::predict(mlp, preprocessor.transform(rows));
}

nlohmann::json to_json(const SavedModel& model) {
  const Preprocessor& pre = model.preprocessor;
  json columns = json::array();
  for (const auto& c : pre.columns) {
    json col{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.kind == ColumnKind::categorical) {
      col["categories"] = c.categories;
      col["mode"] = c.mode;
    }
    columns.push_back(std::move(col));
  }
  json preprocessing{{"columns", std::move(columns)},
                     {"feature_names", pre.feature_names},
                     {"knn_k", pre.knn_k},
                     {"impute_reference", matrix_to_json(pre.impute_reference)},
                     {"standardization", nullptr}};
  if (pre.standardization) {
    preprocessing["standardization"] = {{"means", vector_to_json(pre.standardization->means)},
                                        {"stds", vector_to_json(pre.standardization->stds)}};
  }

  json layers = json::array();
  for (std::size_t l = 0; l < model.mlp.layer_count(); ++l) {
    layers.push_back({{"weights", matrix_to_json(model.mlp.weights[l])},
                      {"biases", vector_to_json(model.mlp.biases[l])}});
  }

  return {{"format", "evotune-model"},
          {"version", model_format_version},
          {"target", pre.target},
          {"class_names", pre.class_names},
          {"config", to_json(model.config)},
          {"preprocessing", std::move(preprocessing)},
          {"kpca", pre.kpca ? kpca_to_json(*pre.kpca) : json(nullptr)},
          {"mlp", {{"activation", to_string(model.mlp.activation)},
                   {"class_count", model.mlp.class_count},
                   {"layers", std::move(layers)}}},
          {"metadata", model.metadata}};
}

SavedModel model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string{}) != "evotune-model") {
      throw InvalidInput("not an evotune model file");
    }
    const int version = j.at("version").get<int>();
    if (version != model_format_version) {
      throw InvalidInput(fmt::format("unsupported model format version {}", version));
    }
    SavedModel m;
    m.config = mlp_config_from_json(j.at("config"));
    Preprocessor& pre = m.preprocessor;
    pre.target = j.at("target").get<std::string>();
    pre.class_names = j.at("class_names").get<std::vector<std::string>>();

    const json& p = j.at("preprocessing");
    for (const auto& c : p.at("columns")) {
      FeatureColumn col;
      col.name = c.at("name").get<std::string>();
      const auto kind = c.at("kind").get<std::string>();
      if (kind == "numeric") {
        col.kind = ColumnKind::numeric;
      } else if (kind == "categorical") {
        col.kind = ColumnKind::categorical;
        col.categories = c.at("categories").get<std::vector<std::string>>();
        col.mode = c.at("mode").get<std::string>();
      } else {
        throw InvalidInput(fmt::format("model file: unknown column kind '{}'", kind));
      }
      pre.columns.push_back(std::move(col));
    }
    pre.feature_names = p.at("feature_names").get<std::vector<std::string>>();
    pre.knn_k = p.at("knn_k").get<int>();
    const auto numeric_count = static_cast<Eigen::Index>(
        std::count_if(pre.columns.begin(), pre.columns.end(), [](const auto& c) { return c.kind == ColumnKind::numeric; }));
    pre.impute_reference = matrix_from_json(p.at("impute_reference"), numeric_count);
    if (pre.impute_reference.cols() != numeric_count) throw InvalidInput("model file: impute reference width mismatch");
    if (const auto& s = p.at("standardization"); !s.is_null()) {
      pre.standardization = Standardization{vector_from_json(s.at("means")).transpose(),
                                            vector_from_json(s.at("stds")).transpose()};
    }
    if (const auto& k = j.at("kpca"); !k.is_null()) pre.kpca = kpca_from_json(k);

    const json& mj = j.at("mlp");
    m.mlp.activation = parse_activation(mj.at("activation").get<std::string>());
    m.mlp.class_count = mj.at("class_count").get<int>();
    for (const auto& layer : mj.at("layers")) {
      m.mlp.weights.push_back(matrix_from_json(layer.at("weights")));
      m.mlp.biases.push_back(vector_from_json(layer.at("biases")).transpose());
    }
    if (m.mlp.weights.empty()) throw InvalidInput("model file: no layers");
    for (std::size_t l = 0; l < m.mlp.layer_count(); ++l) {
      if (m.mlp.biases[l].size() != m.mlp.weights[l].cols() ||
          (l > 0 && m.mlp.weights[l].rows() != m.mlp.weights[l - 1].cols())) {
        throw InvalidInput("model file: layer dimensions do not chain");
      }
    }
    if (m.mlp.weights.back().cols() != m.mlp.class_count ||
        m.mlp.class_count != static_cast<int>(pre.class_names.size())) {
      throw InvalidInput("model file: class count mismatch");
    }
    if (m.mlp.input_dim() != pre.output_dim()) throw InvalidInput("model file: input dimension mismatch");
    m.metadata = j.value("metadata", json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("model file: {}", e.what()));
  }
}

void save_model(const SavedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  out << to_json(model).dump(1) << '\n';
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path));
}

SavedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(fmt::format("cannot open model '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidInput(fmt::format("model '{}' is not valid JSON: {}", path, e.what()));
  }
  return model_from_json(j);
}

}  // namespace evotune
