#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evotune/dataset.hpp"
#include "evotune/kpca.hpp"
#include "evotune/miga.hpp"

namespace evotune {

struct PipelineOptions {
  std::string target;
  std::vector<std::string> drop_columns;
  int knn_k = 5;
  bool standardize = true;
  bool use_kpca = true;
  std::optional<double> gamma;  // default 1 / encoded feature count
  double variance_target = 0.95;
  double train_ratio = 0.8;
  bool stratified = true;
  std::uint64_t split_seed = 0;
  // Tune on a validation split carved from the training rows instead of the
  // test rows.
  bool holdout_fitness = false;

  void validate() const;
};

// One raw input column as the fitted preprocessing sees it.
struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;  // sorted; categorical only
  std::string mode;                     // categorical fill value
};

// Everything needed to turn raw rows into classifier inputs.
struct Preprocessor {
  std::string target;
  std::vector<std::string> class_names;
  std::vector<FeatureColumn> columns;
  std::vector<std::string> feature_names;  // after one-hot encoding
  int knn_k = 5;
  Eigen::MatrixXd impute_reference;  // raw numeric training block (NaN = missing), KNN donors
  std::optional<Standardization> standardization;
  std::optional<KpcaModel<double>> kpca;

  Eigen::Index output_dim() const;

  // Raw rows (any column order, extra columns ignored) to classifier inputs.
  // Missing feature columns raise MissingColumns.
  Eigen::MatrixXd transform(const TabularDataset& rows) const;

  // Target labels of `rows`; unknown or missing classes raise InvalidInput.
  Eigen::VectorXi encode_labels(const TabularDataset& rows) const;
};

class MissingColumns : public InvalidInput {
 public:
  explicit MissingColumns(std::vector<std::string> names);
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

struct PreparedData {
  Preprocessor preprocessor;
  PreparedSplit split;        // train / test, fully transformed
  PreparedSplit tuning;       // what fitness sees: split itself, or train / validation
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  std::size_t missing_cells = 0;
};

// impute -> one-hot -> split -> standardize (train stats) -> KPCA (fit on train)
PreparedData prepare(const TabularDataset& raw, const PipelineOptions& options);

}  // namespace evotune
