#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "evotune/dataset.hpp"
#include "evotune/errors.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace evotune;

namespace {

TabularDataset parse(const std::string& text) {
  std::istringstream in(text);
  return load_csv(in);
}

const double kNan = std::numeric_limits<double>::quiet_NaN();

EncodedMatrix labelled(const std::vector<int>& labels, Eigen::Index features = 2) {
  EncodedMatrix m;
  m.features.resize(static_cast<Eigen::Index>(labels.size()), features);
  m.labels.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    m.labels(static_cast<Eigen::Index>(i)) = labels[i];
    for (Eigen::Index c = 0; c < features; ++c) m.features(static_cast<Eigen::Index>(i), c) = double(i) + c;
  }
  int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  for (int c = 0; c < classes; ++c) m.class_names.push_back("c" + std::to_string(c));
  return m;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("two-row numeric file") {
    const auto ds = parse("a,b\n1,2\n3,4\n");
    CHECK(ds.n_rows() == 2);
    CHECK(ds.n_cols() == 2);
    CHECK(ds.column_kinds[0] == ColumnKind::numeric);
    CHECK(ds.column_kinds[1] == ColumnKind::numeric);
    CHECK(ds.missing_count() == 0);
    CHECK(ds.numeric(1, 0) == 3.0);
  }

  TEST_CASE("missing tokens and kind inference") {
    const auto ds = parse("x,y,z\n1,?,a\nNaN,2,\n nan ,3,b\n,4,a\n");
    CHECK(ds.missing_count(0) == 3);
    CHECK(ds.missing_count(1) == 1);
    CHECK(ds.missing_count(2) == 1);
    CHECK(ds.column_kinds[0] == ColumnKind::numeric);
    CHECK(ds.column_kinds[2] == ColumnKind::categorical);
  }

  TEST_CASE("quoted fields, BOM and CRLF") {
    const auto ds = parse("\xEF\xBB\xBFname,\"note\"\r\n\"a, b\",\"say \"\"hi\"\"\"\r\nc,d\r\n");
    REQUIRE(ds.n_rows() == 2);
    CHECK(ds.column_names[0] == "name");
    CHECK(ds.column_names[1] == "note");
    CHECK(*ds.cell(0, 0) == "a, b");
    CHECK(*ds.cell(0, 1) == "say \"hi\"");
  }

  TEST_CASE("ragged row reports its line") {
    try {
      parse("a,b\n1,2\n3\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(parse(""), InvalidInput);
    CHECK_THROWS_AS(load_csv_file("/nonexistent/file.csv"), InvalidInput);
  }

  TEST_CASE("fixture loads with categorical columns") {
    const auto ds = load_csv_file(fixture("mini_ckd.csv"));
    CHECK(ds.n_rows() == 20);
    CHECK(ds.n_cols() == 7);
    CHECK(ds.column_kinds[ds.column_index("appet")] == ColumnKind::categorical);
    CHECK(ds.column_kinds[ds.column_index("hemo")] == ColumnKind::numeric);
    CHECK(ds.missing_count() == 7);
    CHECK_THROWS_WITH_AS(ds.column_index("nope"), doctest::Contains("nope"), InvalidInput);
  }

  TEST_CASE("UCI files when present") {
    if (const auto p = data_file("wdbc.csv"); std::filesystem::exists(p)) {
      const auto ds = load_csv_file(p);
      CHECK(ds.n_rows() == 569);
      CHECK(ds.missing_count() == 0);
    }
    if (const auto p = data_file("ckd.csv"); std::filesystem::exists(p)) {
      const auto ds = load_csv_file(p);
      CHECK(ds.n_rows() == 400);
      CHECK(ds.n_cols() == 26);
      CHECK(ds.missing_count() == 1009);
    }
    if (const auto p = data_file("parkinsons.csv"); std::filesystem::exists(p)) {
      CHECK(load_csv_file(p).n_rows() == 195);
    }
  }

  TEST_CASE("knn impute: three-row cases") {
    Eigen::MatrixXd m(3, 2);
    m << 0, 0, 2, 2, 1, kNan;
    // distances from (1, ?) on the shared first coordinate: sqrt(2/1 * 1) to both donors
    const Eigen::MatrixXd k1 = knn_impute(m, 1);
    CHECK(k1(2, 1) == 0.0);  // tie resolved to the lower row index
    CHECK(k1.topRows(2) == m.topRows(2));
    const Eigen::MatrixXd k2 = knn_impute(m, 2);
    CHECK(k2(2, 1) == 1.0);

    Eigen::MatrixXd m2(3, 2);
    m2 << 0, 0, 3, 6, 2, kNan;  // (3,6) is nearer: |2-3| < |2-0|
    CHECK(knn_impute(m2, 1)(2, 1) == 6.0);
    CHECK(knn_impute(m2, 2)(2, 1) == 3.0);
    CHECK(knn_impute(m2, 5)(2, 1) == 3.0);  // k beyond donor count uses all donors
  }

  TEST_CASE("knn impute: no missing is identity") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(6, 3);
    CHECK(knn_impute(m, 3) == m);
  }

  TEST_CASE("knn impute: entirely missing column is named") {
    Eigen::MatrixXd m(2, 2);
    m << 1, kNan, 2, kNan;
    std::vector<std::string> names{"first", "second"};
    CHECK_THROWS_WITH_AS(knn_impute(m, 1, names), doctest::Contains("second"), InvalidInput);
  }

  TEST_CASE("knn impute matches enumeration oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> val(-3, 3);
    std::bernoulli_distribution hole(0.25);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 3 + trial % 8, d = 1 + trial % 4, k = 1 + trial % 5;
      std::vector<std::vector<double>> rows(n, std::vector<double>(d));
      for (auto& r : rows) {
        for (auto& v : r) v = hole(rng) ? kNan : std::round(val(rng) * 4) / 4;  // coarse grid forces ties
      }
      for (int c = 0; c < d; ++c) rows[trial % n][c] = 1.0 * c;  // every column observed somewhere
      Eigen::MatrixXd m(n, d);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) m(r, c) = rows[r][c];
      }
      const auto expected = oracle::knn_impute(rows, k);
      const Eigen::MatrixXd got = knn_impute(m, k);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) REQUIRE(got(r, c) == doctest::Approx(expected[r][c]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("impute from a reference block") {
    Eigen::MatrixXd ref(3, 2);
    ref << 0, 0, 2, 2, 4, kNan;
    Eigen::MatrixXd q(1, 2);
    q << 1.9, kNan;
    CHECK(knn_impute_from(q, ref, 1)(0, 1) == 2.0);  // row 2 cannot donate column 1
  }

  TEST_CASE("categorical mode imputation breaks ties lexicographically") {
    const auto ds = parse("c,t\nb,x\na,y\n,x\nb,y\na,x\n");
    const auto out = impute_categorical_mode(ds);
    CHECK(*out.cell(2, 0) == "a");
  }

  TEST_CASE("one-hot: two-category expansion") {
    const auto ds = parse("col,y\na,0\nb,1\na,0\n");
    const auto m = one_hot_encode(ds, "y");
    REQUIRE(m.feature_names == std::vector<std::string>{"col=a", "col=b"});
    Eigen::MatrixXd expected(3, 2);
    expected << 1, 0, 0, 1, 1, 0;
    CHECK(m.features == expected);
    CHECK(m.class_names == std::vector<std::string>{"0", "1"});
  }

  TEST_CASE("one-hot: numeric passthrough and sorted class ids") {
    const auto ds = parse("a,b,classification\n1.5,2,notckd\n3,4,ckd\n");
    const auto m = one_hot_encode(ds, "classification");
    CHECK(m.features(0, 0) == 1.5);
    CHECK(m.features(1, 1) == 4.0);
    CHECK(m.class_names == std::vector<std::string>{"ckd", "notckd"});
    CHECK(m.labels(0) == 1);
    CHECK(m.labels(1) == 0);
  }

  TEST_CASE("one-hot: blocks sum to one and decode") {
    const auto raw = load_csv_file(fixture("mini_ckd.csv"));
    const auto ds = impute_missing(raw, "classification");
    const auto m = one_hot_encode(ds, "classification");
    for (const std::string col : {"appet", "htn"}) {
      std::vector<Eigen::Index> block;
      std::vector<std::string> cats;
      for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
        if (m.feature_names[f].rfind(col + "=", 0) == 0) {
          block.push_back(static_cast<Eigen::Index>(f));
          cats.push_back(m.feature_names[f].substr(col.size() + 1));
        }
      }
      REQUIRE(block.size() >= 2);
      const auto src = ds.column_index(col);
      for (Eigen::Index r = 0; r < m.n_rows(); ++r) {
        double sum = 0;
        std::size_t hot = 0;
        for (std::size_t b = 0; b < block.size(); ++b) {
          sum += m.features(r, block[b]);
          if (m.features(r, block[b]) == 1.0) hot = b;
        }
        CHECK(sum == 1.0);
        CHECK(cats[hot] == *ds.cell(static_cast<std::size_t>(r), src));
      }
    }
  }

  TEST_CASE("one-hot: numeric cells round-trip bit for bit") {
    const auto ds = parse("v,y\n0.1,a\n1e-300,b\n-2.5e10,a\n");
    const auto m = one_hot_encode(ds, "y");
    CHECK(m.features(0, 0) == 0.1);
    CHECK(m.features(1, 0) == 1e-300);
    CHECK(m.features(2, 0) == -2.5e10);
  }

  TEST_CASE("one-hot: target needs two classes") {
    CHECK_THROWS_AS(one_hot_encode(parse("a,y\n1,x\n2,x\n"), "y"), InvalidInput);
    CHECK_THROWS_AS(one_hot_encode(parse("a,y\n1,\n2,\n"), "y"), InvalidInput);
  }

  TEST_CASE("impute_missing fills every feature cell and keeps observed ones") {
    const auto raw = load_csv_file(fixture("mini_ckd.csv"));
    const auto ds = impute_missing(raw, "classification");
    CHECK(ds.missing_count() == 0);
    for (std::size_t r = 0; r < raw.n_rows(); ++r) {
      for (std::size_t c = 0; c < raw.n_cols(); ++c) {
        if (raw.cell(r, c)) CHECK(*ds.cell(r, c) == *raw.cell(r, c));
      }
    }
    CHECK(*ds.cell(14, ds.column_index("appet")) == "good");
  }

  TEST_CASE("standardize") {
    Eigen::MatrixXd train(3, 2);
    train << 1, 0, 1, 2, 1, 1;
    const auto s = fit_standardization(train);
    CHECK(s.stds(0) == 0.0);
    CHECK(s.means(1) == 1.0);
    const Eigen::MatrixXd z = apply_standardization(s, train);
    CHECK(z.col(0).isZero());
    Eigen::MatrixXd two(2, 1);
    two << 0, 2;
    CHECK(apply_standardization(fit_standardization(two), two) == Eigen::Vector2d(-1, 1));
    const Eigen::MatrixXd mean_row = s.means;
    CHECK(apply_standardization(s, mean_row).isZero());
  }

  TEST_CASE("split: 400 rows give 320/80") {
    std::vector<int> labels(400);
    for (int i = 0; i < 400; ++i) labels[i] = i < 250 ? 0 : 1;
    const auto m = labelled(labels);
    const auto s = train_test_split(m, 0.8, 7);
    CHECK(s.train.n_rows() == 320);
    CHECK(s.test.n_rows() == 80);
    CHECK((s.train.labels.array() == 0).count() == 200);
  }

  TEST_CASE("split: 10 rows, 5 per class") {
    std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const auto s = train_test_split(labelled(labels), 0.8, 3);
    CHECK(s.train.n_rows() == 8);
    CHECK((s.train.labels.array() == 0).count() == 4);
    CHECK((s.train.labels.array() == 1).count() == 4);
  }

  TEST_CASE("split: partition, determinism, proportions") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 10 + trial * 3;
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) labels[i] = i % 3 == 0 ? 2 : (i % 3 == 1 ? 0 : 1);
      std::shuffle(labels.begin(), labels.end(), rng);
      const auto m = labelled(labels);
      const auto a = train_test_split(m, 0.8, trial);
      const auto b = train_test_split(m, 0.8, trial);
      CHECK(a.train_rows == b.train_rows);
      CHECK(a.test_rows == b.test_rows);
      CHECK(a.train.n_rows() == static_cast<Eigen::Index>(std::floor(0.8 * n)));
      std::set<Eigen::Index> all(a.train_rows.begin(), a.train_rows.end());
      for (auto r : a.test_rows) CHECK(all.insert(r).second);
      CHECK(all.size() == static_cast<std::size_t>(n));
      for (int c = 0; c < 3; ++c) {
        const double count = static_cast<double>(std::count(labels.begin(), labels.end(), c));
        const double in_train = static_cast<double>((a.train.labels.array() == c).count());
        CHECK(std::abs(in_train - 0.8 * count) <= 1.0);
      }
      for (std::size_t i = 0; i < a.train_rows.size(); ++i) {
        CHECK(a.train.labels(static_cast<Eigen::Index>(i)) == m.labels(a.train_rows[i]));
      }
    }
  }

  TEST_CASE("split: a class with one row is rejected") {
    CHECK_THROWS_AS(train_test_split(labelled({0, 0, 0, 1}), 0.8, 1), InvalidInput);
    CHECK_THROWS_AS(train_test_split(labelled({0, 0, 1, 1}), 1.0, 1), InvalidInput);
  }
}
