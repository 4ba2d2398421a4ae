#include "evotune/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "evotune/errors.hpp"

namespace evotune {

void PipelineOptions::validate() const {
  if (target.empty()) throw InvalidInput("a target column is required");
  if (knn_k < 1) throw InvalidInput("knn k must be >= 1");
  if (gamma && !(*gamma > 0)) throw InvalidInput("gamma must be positive");
  if (!(variance_target > 0 && variance_target <= 1)) throw InvalidInput("variance target must be in (0, 1]");
  if (!(train_ratio > 0 && train_ratio < 1)) throw InvalidInput("train ratio must be in (0, 1)");
  if (std::find(drop_columns.begin(), drop_columns.end(), target) != drop_columns.end()) {
    throw InvalidInput("the target column cannot be dropped");
  }
}

MissingColumns::MissingColumns(std::vector<std::string> names)
    : InvalidInput(fmt::format("missing columns: {}", fmt::join(names, ", "))), names_(std::move(names)) {}

Eigen::Index Preprocessor::output_dim() const {
  if (kpca) return kpca->n_components;
  return static_cast<Eigen::Index>(feature_names.size());
}

Eigen::MatrixXd Preprocessor::transform(const TabularDataset& rows) const {
  std::vector<std::size_t> source;
  std::vector<std::string> missing;
  for (const auto& col : columns) {
    if (auto idx = rows.find_column(col.name)) {
      source.push_back(*idx);
    } else {
      missing.push_back(col.name);
    }
  }
  if (!missing.empty()) throw MissingColumns(std::move(missing));

  const auto n = static_cast<Eigen::Index>(rows.n_rows());
  std::vector<std::size_t> numeric_src;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::numeric) numeric_src.push_back(source[i]);
  }
  Eigen::MatrixXd numeric(n, static_cast<Eigen::Index>(numeric_src.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < numeric_src.size(); ++j) {
      const auto& v = rows.cell(static_cast<std::size_t>(r), numeric_src[j]);
      double value = std::numeric_limits<double>::quiet_NaN();
      if (v) {
        auto parsed = parse_number(*v);
        if (!parsed) {
          throw InvalidInput(fmt::format("column '{}' row {}: '{}' is not a number",
                                         rows.column_names[numeric_src[j]], r + 1, *v));
        }
        value = *parsed;
      }
      numeric(r, static_cast<Eigen::Index>(j)) = value;
    }
  }
  if (numeric.size() > 0 && numeric.array().isNaN().any()) {
    numeric = knn_impute_from(numeric, impute_reference, knn_k);
  }

  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(feature_names.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index out_col = 0;
    Eigen::Index num_col = 0;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const auto& col = columns[i];
      if (col.kind == ColumnKind::numeric) {
        features(r, out_col++) = numeric(r, num_col++);
        continue;
      }
      const auto& v = rows.cell(static_cast<std::size_t>(r), source[i]);
      const std::string& value = v ? *v : col.mode;
      // categories never seen in training leave the block all zero
      auto it = std::lower_bound(col.categories.begin(), col.categories.end(), value);
      if (it != col.categories.end() && *it == value) features(r, out_col + (it - col.categories.begin())) = 1.0;
      out_col += static_cast<Eigen::Index>(col.categories.size());
    }
  }
  if (standardization) features = apply_standardization(*standardization, features);
  if (kpca) features = evotune::transform(*kpca, features);
  return features;
}

Eigen::VectorXi Preprocessor::encode_labels(const TabularDataset& rows) const {
  const std::size_t t = rows.column_index(target);
  Eigen::VectorXi labels(static_cast<Eigen::Index>(rows.n_rows()));
  for (std::size_t r = 0; r < rows.n_rows(); ++r) {
    const auto& v = rows.cell(r, t);
    if (!v) throw InvalidInput(fmt::format("row {} has no target value", r + 1));
    auto it = std::find(class_names.begin(), class_names.end(), *v);
    if (it == class_names.end()) throw InvalidInput(fmt::format("row {}: unknown class '{}'", r + 1, *v));
    labels(static_cast<Eigen::Index>(r)) = static_cast<int>(it - class_names.begin());
  }
  return labels;
}

PreparedData prepare(const TabularDataset& raw, const PipelineOptions& options) {
  options.validate();
  TabularDataset ds = drop_columns(raw, options.drop_columns);
  const std::size_t target = ds.column_index(options.target);
  ds = drop_missing_target(ds, target);

  PreparedData out;
  out.missing_cells = ds.missing_count();
  Preprocessor& pre = out.preprocessor;
  pre.target = options.target;
  pre.knn_k = options.knn_k;

  std::vector<std::size_t> numeric_cols;
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (c != target && ds.column_kinds[c] == ColumnKind::numeric) numeric_cols.push_back(c);
  }
  pre.impute_reference = numeric_block(ds, numeric_cols);

  const TabularDataset imputed = impute_missing(ds, options.target, options.knn_k);
  const EncodedMatrix encoded = one_hot_encode(imputed, options.target);
  pre.class_names = encoded.class_names;
  pre.feature_names = encoded.feature_names;

  for (std::size_t c = 0; c < imputed.n_cols(); ++c) {
    if (c == target) continue;
    FeatureColumn col{imputed.column_names[c], imputed.column_kinds[c], {}, {}};
    if (col.kind == ColumnKind::categorical) {
      std::map<std::string, std::size_t> counts;
      for (std::size_t r = 0; r < imputed.n_rows(); ++r) ++counts[*imputed.cell(r, c)];
      for (const auto& [k, _] : counts) col.categories.push_back(k);
      col.mode = std::max_element(counts.begin(), counts.end(),
                                  [](const auto& a, const auto& b) { return a.second < b.second; })
                     ->first;
    }
    pre.columns.push_back(std::move(col));
  }

  SplitPair split = train_test_split(encoded, options.train_ratio, options.split_seed, options.stratified);
  out.train_rows = split.train_rows;
  out.test_rows = split.test_rows;

  Eigen::MatrixXd train_x = std::move(split.train.features);
  Eigen::MatrixXd test_x = std::move(split.test.features);
  if (options.standardize) {
    pre.standardization = fit_standardization(train_x);
    train_x = apply_standardization(*pre.standardization, train_x);
    test_x = apply_standardization(*pre.standardization, test_x);
  }
  if (options.use_kpca) {
    const double gamma = options.gamma.value_or(1.0 / static_cast<double>(std::max<Eigen::Index>(1, train_x.cols())));
    pre.kpca = fit_kpca(train_x, gamma, options.variance_target);
    train_x = evotune::transform(*pre.kpca, train_x);
    test_x = evotune::transform(*pre.kpca, test_x);
  }

  const int class_count = static_cast<int>(pre.class_names.size());
  out.split = PreparedSplit{std::move(train_x), std::move(split.train.labels), std::move(test_x),
                            std::move(split.test.labels), class_count};

  if (options.holdout_fitness) {
    EncodedMatrix train_m;
    train_m.features = out.split.train_x;
    train_m.labels = out.split.train_y;
    train_m.class_names = pre.class_names;
    SplitPair inner = train_test_split(train_m, options.train_ratio, options.split_seed + 1, options.stratified);
    out.tuning = PreparedSplit{std::move(inner.train.features), std::move(inner.train.labels),
                               std::move(inner.test.features), std::move(inner.test.labels), class_count};
  } else {
    out.tuning = out.split;
  }
  return out;
}

}  // namespace evotune
