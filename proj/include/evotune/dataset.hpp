#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace evotune {

enum class ColumnKind { numeric, categorical };

std::string_view to_string(ColumnKind kind);

using Labels = Eigen::VectorXi;

// Raw CSV contents. Cells keep their (trimmed) text; missing cells are nullopt.
struct TabularDataset {
  std::vector<std::string> column_names;
  std::vector<ColumnKind> column_kinds;
  std::vector<std::optional<std::string>> cells;  // row-major

  std::size_t n_rows() const { return column_names.empty() ? 0 : cells.size() / column_names.size(); }
  std::size_t n_cols() const { return column_names.size(); }

  const std::optional<std::string>& cell(std::size_t row, std::size_t col) const {
    return cells[row * n_cols() + col];
  }
  std::optional<std::string>& cell(std::size_t row, std::size_t col) {
    return cells[row * n_cols() + col];
  }

  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws InvalidInput naming the column when absent.
  std::size_t column_index(std::string_view name) const;
  std::size_t missing_count(std::size_t col) const;
  std::size_t missing_count() const;

  // Numeric value of a non-missing cell in a numeric column.
  double numeric(std::size_t row, std::size_t col) const;
};

// Fully numeric design matrix with integer class labels.
struct EncodedMatrix {
  Eigen::MatrixXd features;  // n_rows x n_features
  Labels labels;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  Eigen::Index n_rows() const { return features.rows(); }
  Eigen::Index n_features() const { return features.cols(); }

  // Rows picked by index, in the given order.
  EncodedMatrix subset(std::span<const Eigen::Index> rows) const;
};

struct SplitPair {
  EncodedMatrix train;
  EncodedMatrix test;
  std::vector<Eigen::Index> train_rows;  // original row indices
  std::vector<Eigen::Index> test_rows;
  std::uint64_t seed = 0;
};

struct Standardization {
  Eigen::RowVectorXd means;
  Eigen::RowVectorXd stds;  // population std; 0 marks a constant column
};

const std::set<std::string, std::less<>>& default_missing_tokens();

// Parses RFC-4180-style CSV with a header row. Unquoted fields are trimmed of
// surrounding whitespace. A column is numeric iff every non-missing cell
// parses as a finite real.
TabularDataset load_csv(std::istream& source,
                        const std::set<std::string, std::less<>>& missing_tokens = default_missing_tokens());
TabularDataset load_csv_file(const std::string& path,
                             const std::set<std::string, std::less<>>& missing_tokens = default_missing_tokens());

std::optional<double> parse_number(std::string_view text);

// Copy of `ds` keeping only rows whose target cell is present.
TabularDataset drop_missing_target(const TabularDataset& ds, std::size_t target);

// Copy of `ds` without the named columns.
TabularDataset drop_columns(const TabularDataset& ds, std::span<const std::string> names);

// Fills missing categorical cells with the column mode (ties: lexicographically
// smallest category). Columns named in `skip` are left alone.
TabularDataset impute_categorical_mode(const TabularDataset& ds, std::span<const std::string> skip = {});

// KNN imputation over a matrix whose missing entries are NaN. Each missing
// entry becomes the mean of that column over the k nearest rows observing it,
// with nan-Euclidean distance sqrt(n_cols / n_common * sum of squared
// differences over commonly observed coordinates). Ties go to the lower row
// index. Rows sharing no observed coordinate with any donor fall back to the
// column mean.
Eigen::MatrixXd knn_impute(const Eigen::MatrixXd& matrix, int k,
                           std::span<const std::string> column_names = {});

// Imputes the NaN entries of `query` using rows of `reference` as donors (a
// donor must observe the column being filled).
Eigen::MatrixXd knn_impute_from(const Eigen::MatrixXd& query, const Eigen::MatrixXd& reference, int k);

// Numeric columns (other than the target) with NaN for missing cells.
Eigen::MatrixXd numeric_block(const TabularDataset& ds, std::span<const std::size_t> columns);

// Mode-imputes categoricals and KNN-imputes numeric feature columns, returning
// a dataset without missing feature cells. Rows whose target is missing are
// dropped.
TabularDataset impute_missing(const TabularDataset& ds, std::string_view target_column, int k = 5);

// Expands categorical feature columns into one indicator column per category
// (sorted lexicographically); numeric columns pass through. Target classes are
// numbered in sorted order of their names. Feature cells must be non-missing;
// rows with a missing target are dropped.
EncodedMatrix one_hot_encode(const TabularDataset& ds, std::string_view target_column);

// z-scores both matrices with the statistics of `train`.
Standardization fit_standardization(const Eigen::MatrixXd& train);
Eigen::MatrixXd apply_standardization(const Standardization& s, const Eigen::MatrixXd& x);

struct StandardizedPair {
  EncodedMatrix train;
  EncodedMatrix test;
  Standardization stats;
};
StandardizedPair standardize(const EncodedMatrix& train, const EncodedMatrix& test);

// Stratified shuffle split: per class floor(ratio * count) rows go to train, then
// the global train size is brought to floor(ratio * n) by moving the next
// shuffled test row of the classes with the largest fractional remainders.
SplitPair train_test_split(const EncodedMatrix& m, double ratio, std::uint64_t seed, bool stratified = true);

}  // namespace evotune
