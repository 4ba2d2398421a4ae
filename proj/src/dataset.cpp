#include "evotune/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "evotune/errors.hpp"

namespace evotune {

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

std::optional<std::size_t> TabularDataset::find_column(std::string_view name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - column_names.begin());
}

std::size_t TabularDataset::column_index(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw InvalidInput(fmt::format("unknown column '{}'", name));
}

std::size_t TabularDataset::missing_count(std::size_t col) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < n_rows(); ++r) n += !cell(r, col).has_value();
  return n;
}

std::size_t TabularDataset::missing_count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::nullopt));
}

double TabularDataset::numeric(std::size_t row, std::size_t col) const {
  return *parse_number(*cell(row, col));
}

EncodedMatrix EncodedMatrix::subset(std::span<const Eigen::Index> rows) const {
  EncodedMatrix out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i)) = labels(rows[i]);
  }
  out.feature_names = feature_names;
  out.class_names = class_names;
  return out;
}

const std::set<std::string, std::less<>>& default_missing_tokens() {
  static const std::set<std::string, std::less<>> tokens{"", "?", "NaN", "nan"};
  return tokens;
}

std::optional<double> parse_number(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\v\f";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

struct Field {
  std::string text;
  bool quoted = false;
};

// Reads one logical record (quoted fields may span lines). Returns false at EOF.
bool read_record(std::istream& in, std::vector<Field>& fields, std::size_t& line) {
  fields.clear();
  std::string raw;
  if (!std::getline(in, raw)) return false;
  ++line;
  const std::size_t start_line = line;
  Field cur;
  bool in_quotes = false;
  bool after_quote = false;
  for (;;) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      char c = raw[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < raw.size() && raw[i + 1] == '"') {
            cur.text += '"';
            ++i;
          } else {
            in_quotes = false;
            after_quote = true;
          }
        } else {
          cur.text += c;
        }
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur = Field{};
        after_quote = false;
      } else if (c == '"' && trim(cur.text).empty() && !after_quote) {
        cur.text.clear();
        cur.quoted = true;
        in_quotes = true;
      } else if (after_quote) {
        if (c != ' ' && c != '\t' && c != '\r') throw ParseError("unexpected text after closing quote", line);
      } else {
        cur.text += c;
      }
    }
    if (!in_quotes) break;
    cur.text += '\n';
    if (!std::getline(in, raw)) throw ParseError("unterminated quoted field", start_line);
    ++line;
  }
  fields.push_back(std::move(cur));
  return true;
}

bool blank_record(const std::vector<Field>& fields) {
  return fields.size() == 1 && !fields[0].quoted && trim(fields[0].text).empty();
}

}  // namespace

TabularDataset load_csv(std::istream& source, const std::set<std::string, std::less<>>& missing_tokens) {
  TabularDataset ds;
  std::vector<Field> fields;
  std::size_t line = 0;

  // Header: first non-blank record.
  bool have_header = false;
  while (read_record(source, fields, line)) {
    if (blank_record(fields)) continue;
    if (line == 1 && !fields.empty() && fields[0].text.starts_with("\xEF\xBB\xBF")) {
      fields[0].text.erase(0, 3);
    }
    for (auto& f : fields) ds.column_names.emplace_back(f.quoted ? f.text : std::string(trim(f.text)));
    have_header = true;
    break;
  }
  if (!have_header) throw InvalidInput("empty CSV: no header row");

  const std::size_t n_cols = ds.column_names.size();
  while (read_record(source, fields, line)) {
    if (blank_record(fields)) continue;
    if (fields.size() != n_cols) {
      throw ParseError(fmt::format("expected {} fields but found {}", n_cols, fields.size()), line);
    }
    for (auto& f : fields) {
      std::string value = f.quoted ? std::move(f.text) : std::string(trim(f.text));
      if (missing_tokens.contains(value)) {
        ds.cells.emplace_back(std::nullopt);
      } else {
        ds.cells.emplace_back(std::move(value));
      }
    }
  }
  if (ds.cells.empty()) throw InvalidInput("CSV has a header but no data rows");

  ds.column_kinds.assign(n_cols, ColumnKind::numeric);
  for (std::size_t c = 0; c < n_cols; ++c) {
    bool any = false;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      const auto& v = ds.cell(r, c);
      if (!v) continue;
      any = true;
      if (!parse_number(*v)) {
        ds.column_kinds[c] = ColumnKind::categorical;
        break;
      }
    }
    if (!any) ds.column_kinds[c] = ColumnKind::categorical;
  }
  return ds;
}

TabularDataset load_csv_file(const std::string& path, const std::set<std::string, std::less<>>& missing_tokens) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(fmt::format("cannot open '{}'", path));
  return load_csv(in, missing_tokens);
}

TabularDataset drop_columns(const TabularDataset& ds, std::span<const std::string> names) {
  std::vector<std::size_t> keep;
  for (const auto& n : names) (void)ds.column_index(n);
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (std::find(names.begin(), names.end(), ds.column_names[c]) == names.end()) keep.push_back(c);
  }
  TabularDataset out;
  for (auto c : keep) {
    out.column_names.push_back(ds.column_names[c]);
    out.column_kinds.push_back(ds.column_kinds[c]);
  }
  out.cells.reserve(ds.n_rows() * keep.size());
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (auto c : keep) out.cells.push_back(ds.cell(r, c));
  }
  return out;
}

TabularDataset impute_categorical_mode(const TabularDataset& ds, std::span<const std::string> skip) {
  TabularDataset out = ds;
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (ds.column_kinds[c] != ColumnKind::categorical) continue;
    if (std::find(skip.begin(), skip.end(), ds.column_names[c]) != skip.end()) continue;
    std::map<std::string, std::size_t> counts;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      if (const auto& v = ds.cell(r, c)) ++counts[*v];
    }
    if (counts.empty()) throw InvalidInput(fmt::format("column '{}' has no observed values", ds.column_names[c]));
    // std::map iterates in lexicographic order, so max_element keeps the smallest on ties
    auto mode = std::max_element(counts.begin(), counts.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; })
                    ->first;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      if (!out.cell(r, c)) out.cell(r, c) = mode;
    }
  }
  return out;
}

namespace {

// Donor search shared by knn_impute and knn_impute_from.
void impute_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, const Eigen::MatrixXd& donors, int k,
                const Eigen::RowVectorXd& column_means, Eigen::Index self = -1) {
  const Eigen::Index d = donors.cols();
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(donors.rows()));
  for (Eigen::Index j = 0; j < donors.rows(); ++j) {
    if (j == self) {
      dist.emplace_back(std::numeric_limits<double>::quiet_NaN(), j);
      continue;
    }
    double sum = 0.0;
    Eigen::Index common = 0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double a = row(c);
      const double b = donors(j, c);
      if (std::isnan(a) || std::isnan(b)) continue;
      sum += (a - b) * (a - b);
      ++common;
    }
    dist.emplace_back(common == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : std::sqrt(static_cast<double>(d) / static_cast<double>(common) * sum),
                      j);
  }

  std::vector<Eigen::Index> missing;
  for (Eigen::Index c = 0; c < d; ++c) {
    if (std::isnan(row(c))) missing.push_back(c);
  }

  std::vector<std::pair<double, Eigen::Index>> candidates;
  for (auto c : missing) {
    candidates.clear();
    for (const auto& [dd, j] : dist) {
      if (!std::isnan(dd) && !std::isnan(donors(j, c))) candidates.emplace_back(dd, j);
    }
    if (candidates.empty()) {
      row(c) = column_means(c);
      continue;
    }
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < take; ++i) acc += donors(candidates[i].second, c);
    row(c) = acc / static_cast<double>(take);
  }
}

Eigen::RowVectorXd observed_means(const Eigen::MatrixXd& m, std::span<const std::string> names) {
  Eigen::RowVectorXd means(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!std::isnan(m(r, c))) {
        sum += m(r, c);
        ++n;
      }
    }
    if (n == 0) {
      const auto label = static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)]
                                                                     : fmt::format("#{}", c);
      throw InvalidInput(fmt::format("column '{}' is entirely missing", label));
    }
    means(c) = sum / static_cast<double>(n);
  }
  return means;
}

}  // namespace

Eigen::MatrixXd knn_impute(const Eigen::MatrixXd& matrix, int k, std::span<const std::string> column_names) {
  if (k < 1) throw InvalidInput("knn_impute: k must be >= 1");
  const Eigen::RowVectorXd means = observed_means(matrix, column_names);
  Eigen::MatrixXd out = matrix;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    if (!matrix.row(r).array().isNaN().any()) continue;
    // donors are always the original rows, never values imputed earlier
    impute_row(out.row(r), matrix, k, means, r);
  }
  return out;
}

Eigen::MatrixXd knn_impute_from(const Eigen::MatrixXd& query, const Eigen::MatrixXd& reference, int k) {
  if (k < 1) throw InvalidInput("knn_impute: k must be >= 1");
  if (query.cols() != reference.cols()) throw InvalidInput("knn_impute: column count mismatch");
  if (reference.rows() == 0) throw InvalidInput("knn_impute: empty reference");
  const Eigen::RowVectorXd means = observed_means(reference, {});
  Eigen::MatrixXd out = query;
  for (Eigen::Index r = 0; r < query.rows(); ++r) {
    if (query.row(r).array().isNaN().any()) impute_row(out.row(r), reference, k, means);
  }
  return out;
}

Eigen::MatrixXd numeric_block(const TabularDataset& ds, std::span<const std::size_t> columns) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.n_rows()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto& v = ds.cell(r, columns[j]);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          v ? *parse_number(*v) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return m;
}

namespace {

std::string format_exact(double v) {
  // shortest text that parses back to the same double
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

TabularDataset drop_missing_target(const TabularDataset& ds, std::size_t target) {
  TabularDataset out;
  out.column_names = ds.column_names;
  out.column_kinds = ds.column_kinds;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    if (!ds.cell(r, target)) continue;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) out.cells.push_back(ds.cell(r, c));
  }
  if (out.cells.empty()) throw InvalidInput(fmt::format("target column '{}' is entirely missing", ds.column_names[target]));
  return out;
}

TabularDataset impute_missing(const TabularDataset& ds, std::string_view target_column, int k) {
  const std::size_t target = ds.column_index(target_column);
  TabularDataset out = drop_missing_target(ds, target);
  const std::string target_name(target_column);
  out = impute_categorical_mode(out, std::span<const std::string>(&target_name, 1));

  std::vector<std::size_t> numeric_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < out.n_cols(); ++c) {
    if (c != target && out.column_kinds[c] == ColumnKind::numeric) {
      numeric_cols.push_back(c);
      names.push_back(out.column_names[c]);
    }
  }
  if (numeric_cols.empty()) return out;
  const Eigen::MatrixXd raw = numeric_block(out, numeric_cols);
  if (!raw.array().isNaN().any()) return out;
  const Eigen::MatrixXd filled = knn_impute(raw, k, names);
  for (std::size_t r = 0; r < out.n_rows(); ++r) {
    for (std::size_t j = 0; j < numeric_cols.size(); ++j) {
      auto& cell = out.cell(r, numeric_cols[j]);
      if (!cell) cell = format_exact(filled(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
    }
  }
  return out;
}

EncodedMatrix one_hot_encode(const TabularDataset& ds, std::string_view target_column) {
  const std::size_t target = ds.column_index(target_column);
  const TabularDataset rows = drop_missing_target(ds, target);

  EncodedMatrix out;
  std::set<std::string> classes;
  for (std::size_t r = 0; r < rows.n_rows(); ++r) classes.insert(*rows.cell(r, target));
  if (classes.size() < 2) {
    throw InvalidInput(fmt::format("target column '{}' needs at least 2 distinct classes", target_column));
  }
  out.class_names.assign(classes.begin(), classes.end());

  struct Block {
    std::size_t column;
    std::vector<std::string> categories;  // empty for numeric
  };
  std::vector<Block> blocks;
  for (std::size_t c = 0; c < rows.n_cols(); ++c) {
    if (c == target) continue;
    Block b{c, {}};
    if (rows.column_kinds[c] == ColumnKind::categorical) {
      std::set<std::string> cats;
      for (std::size_t r = 0; r < rows.n_rows(); ++r) {
        if (const auto& v = rows.cell(r, c)) cats.insert(*v);
      }
      b.categories.assign(cats.begin(), cats.end());
      for (const auto& cat : b.categories) out.feature_names.push_back(rows.column_names[c] + "=" + cat);
    } else {
      out.feature_names.push_back(rows.column_names[c]);
    }
    blocks.push_back(std::move(b));
  }

  const auto n = static_cast<Eigen::Index>(rows.n_rows());
  out.features = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(out.feature_names.size()));
  out.labels.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    const auto& cls = *rows.cell(ur, target);
    out.labels(r) = static_cast<int>(std::lower_bound(out.class_names.begin(), out.class_names.end(), cls) -
                                     out.class_names.begin());
    Eigen::Index col = 0;
    for (const auto& b : blocks) {
      const auto& v = rows.cell(ur, b.column);
      if (!v) {
        throw InvalidInput(fmt::format("column '{}' has a missing value in row {}; impute before encoding",
                                       rows.column_names[b.column], ur + 1));
      }
      if (b.categories.empty()) {
        out.features(r, col++) = *parse_number(*v);
      } else {
        auto pos = std::lower_bound(b.categories.begin(), b.categories.end(), *v) - b.categories.begin();
        out.features(r, col + pos) = 1.0;
        col += static_cast<Eigen::Index>(b.categories.size());
      }
    }
  }
  return out;
}

Standardization fit_standardization(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw InvalidInput("standardize: empty training matrix");
  Standardization s;
  s.means = train.colwise().mean();
  s.stds = ((train.rowwise() - s.means).array().square().colwise().sum() / static_cast<double>(train.rows()))
               .sqrt()
               .matrix();
  return s;
}

Eigen::MatrixXd apply_standardization(const Standardization& s, const Eigen::MatrixXd& x) {
  if (x.cols() != s.means.cols()) throw InvalidInput("standardize: column count mismatch");
  Eigen::MatrixXd out = x.rowwise() - s.means;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    if (s.stds(c) > 0.0) out.col(c) /= s.stds(c);
  }
  return out;
}

StandardizedPair standardize(const EncodedMatrix& train, const EncodedMatrix& test) {
  StandardizedPair p{train, test, fit_standardization(train.features)};
  p.train.features = apply_standardization(p.stats, train.features);
  p.test.features = apply_standardization(p.stats, test.features);
  return p;
}

SplitPair train_test_split(const EncodedMatrix& m, double ratio, std::uint64_t seed, bool stratified) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("train_test_split: ratio must be in (0, 1)");
  const Eigen::Index n = m.n_rows();
  const auto n_classes = static_cast<int>(m.class_names.size());
  std::mt19937_64 rng(seed);

  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  const auto target = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));

  if (!stratified) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
    test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(target), order.end());
  } else {
    std::vector<std::vector<Eigen::Index>> per_class(static_cast<std::size_t>(n_classes));
    for (Eigen::Index r = 0; r < n; ++r) per_class[static_cast<std::size_t>(m.labels(r))].push_back(r);
    for (int c = 0; c < n_classes; ++c) {
      if (per_class[static_cast<std::size_t>(c)].size() < 2) {
        throw InvalidInput(fmt::format("class '{}' has fewer than 2 rows", m.class_names[static_cast<std::size_t>(c)]));
      }
    }
    std::vector<std::size_t> take(per_class.size());
    std::vector<double> remainder(per_class.size());
    std::size_t total = 0;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      std::shuffle(per_class[c].begin(), per_class[c].end(), rng);
      const double exact = ratio * static_cast<double>(per_class[c].size());
      take[c] = static_cast<std::size_t>(std::floor(exact));
      remainder[c] = exact - static_cast<double>(take[c]);
      total += take[c];
    }
    std::vector<std::size_t> order(per_class.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; total < target && i < order.size(); ++i) {
      auto c = order[i];
      if (take[c] < per_class[c].size()) {
        ++take[c];
        ++total;
      }
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      auto mid = per_class[c].begin() + static_cast<std::ptrdiff_t>(take[c]);
      train_rows.insert(train_rows.end(), per_class[c].begin(), mid);
      test_rows.insert(test_rows.end(), mid, per_class[c].end());
    }
  }

  SplitPair out;
  out.train = m.subset(train_rows);
  out.test = m.subset(test_rows);
  out.train_rows = std::move(train_rows);
  out.test_rows = std::move(test_rows);
  out.seed = seed;
  return out;
}

}  // namespace evotune
