#include <doctest.h>

#include <cmath>
#include <random>

#include "evotune/errors.hpp"
#include "evotune/kpca.hpp"
#include "oracles.hpp"

using namespace evotune;

TEST_SUITE("kpca") {
  TEST_CASE("rbf kernel values") {
    Eigen::VectorXd x(3), y(3);
    x << 1, 2, 3;
    y << 0, 2, 5;
    CHECK(rbf_kernel(x, x, 0.5) == 1.0);
    Eigen::VectorXd a(1), b(1);
    a << 0;
    b << 1;
    CHECK(rbf_kernel(a, b, 1.0) == doctest::Approx(0.36787944117144233).epsilon(1e-15));
    CHECK(rbf_kernel(x, y, 0.3) == rbf_kernel(y, x, 0.3));
    CHECK(rbf_kernel(x, y, 0.3) == doctest::Approx(std::exp(-0.3 * 5.0)));
    CHECK_THROWS_AS(rbf_kernel(x, a, 1.0), InvalidInput);
    CHECK_THROWS_AS(rbf_kernel(x, y, 0.0), InvalidInput);
  }

  TEST_CASE("kernel matrix agrees with pairwise kernel") {
    const Eigen::MatrixXd p = Eigen::MatrixXd::Random(5, 3);
    const Eigen::MatrixXd q = Eigen::MatrixXd::Random(4, 3);
    const Eigen::MatrixXd k = rbf_kernel_matrix(p, q, 0.7);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(k(i, j) == doctest::Approx(rbf_kernel(p.row(i), q.row(j), 0.7)).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("symmetric_eig: identity and diagonal") {
    const auto id = symmetric_eig(Eigen::MatrixXd::Identity(3, 3));
    CHECK(id.values.isApprox(Eigen::Vector3d::Ones()));
    Eigen::Matrix2d d;
    d << 1, 0, 0, 3;
    const auto e = symmetric_eig(d);
    CHECK(e.values(0) == doctest::Approx(3.0));
    CHECK(e.values(1) == doctest::Approx(1.0));
    CHECK(e.vectors.col(0).isApprox(Eigen::Vector2d(0, 1)));
    CHECK(e.vectors.col(1).isApprox(Eigen::Vector2d(1, 0)));
  }

  TEST_CASE("symmetric_eig: random 6x6 reconstruction") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd a(6, 6);
      for (int i = 0; i < 36; ++i) a(i) = g(rng);
      const Eigen::MatrixXd m = (a + a.transpose()) / 2;
      const auto e = symmetric_eig(m);
      const double norm = m.norm();
      const Eigen::MatrixXd rebuilt = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
      CHECK((rebuilt - m).cwiseAbs().maxCoeff() <= 1e-7 * norm);
      CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-7);
      for (int i = 0; i < 6; ++i) {
        CHECK((m * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm() <= 1e-7 * norm);
        if (i > 0) CHECK(e.values(i) <= e.values(i - 1));
      }
      const auto ref = oracle::jacobi(oracle::to_rows(m));
      for (int i = 0; i < 6; ++i) CHECK(e.values(i) == doctest::Approx(ref.values[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("symmetric_eig rejects non-symmetric input") {
    Eigen::Matrix2d m;
    m << 1, 2, 0, 1;
    CHECK_THROWS_AS(symmetric_eig(m), InvalidInput);
  }

  TEST_CASE("fit_kpca: identical rows carry no variance") {
    Eigen::MatrixXd x(2, 2);
    x << 1, 2, 1, 2;
    CHECK_THROWS_WITH_AS(fit_kpca(x, 1.0), doctest::Contains("no variance"), NumericalError);
  }

  TEST_CASE("fit_kpca: three 1-D points against the Jacobi oracle") {
    Eigen::MatrixXd x(3, 1);
    x << 0.0, 1.0, 2.5;
    const auto model = fit_kpca(x, 1.0, 0.95);
    const auto ref = oracle::kpca(oracle::to_rows(x), 1.0, static_cast<std::size_t>(model.n_components));
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(model.eigenvalues(i) - std::max(ref.eigenvalues[i], 0.0)) <= 1e-8);
    }
    const Eigen::MatrixXd proj = transform(model, x);
    for (Eigen::Index c = 0; c < model.n_components; ++c) {
      const double sign = proj(0, c) * ref.projections[c][0] < 0 ? -1.0 : 1.0;
      for (int r = 0; r < 3; ++r) CHECK(std::abs(proj(r, c) - sign * ref.projections[c][r]) <= 1e-7);
    }
  }

  TEST_CASE("fit_kpca: full variance keeps every positive eigenvalue") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 0, 0, 1, 1, 1.5;
    const auto model = fit_kpca(x, 0.8, 1.0);
    CHECK(model.n_components == (model.eigenvalues.array() > 0).count());
  }

  TEST_CASE("fit_kpca: component count reaches the target") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(30, 4);
    for (int i = 0; i < x.size(); ++i) x(i) = g(rng);
    const auto model = fit_kpca(x, 0.25, 0.95);
    const Eigen::VectorXd ratio = model.explained_variance_ratio();
    CHECK(ratio.sum() == doctest::Approx(1.0));
    for (Eigen::Index i = 1; i < ratio.size(); ++i) CHECK(ratio(i) <= ratio(i - 1));
    CHECK(ratio.head(model.n_components).sum() >= 0.95 - 1e-12);
    CHECK(ratio.head(model.n_components - 1).sum() < 0.95);
    CHECK((model.eigenvalues.array() >= 0).all());
  }

  TEST_CASE("transform: training rows are centred and self-consistent") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(12, 3);
    for (int i = 0; i < x.size(); ++i) x(i) = g(rng);
    const auto model = fit_kpca(x, 0.4, 0.9);
    const Eigen::MatrixXd proj = transform(model, x);
    CHECK(proj.colwise().mean().cwiseAbs().maxCoeff() <= 1e-8);
    // fit-time scores: K' alpha
    const Eigen::MatrixXd kc = center_kernel(rbf_kernel_matrix(x, x, 0.4));
    CHECK((kc * model.alphas - proj).cwiseAbs().maxCoeff() <= 1e-9);
    // projected variance per component = lambda / n
    for (Eigen::Index c = 0; c < model.n_components; ++c) {
      CHECK(proj.col(c).squaredNorm() / 12.0 == doctest::Approx(model.eigenvalues(c) / 12.0).epsilon(1e-8));
    }
    const Eigen::MatrixXd one = transform(model, x.row(5));
    CHECK((one - proj.row(5)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK_THROWS_AS(transform(model, Eigen::MatrixXd(Eigen::MatrixXd::Zero(1, 2))), InvalidInput);
  }

  TEST_CASE("center_kernel rows and columns sum to zero") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 2);
    const Eigen::MatrixXd kc = center_kernel(rbf_kernel_matrix(x, x, 1.0));
    CHECK(kc.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-7 * 7);
    CHECK(kc.colwise().sum().cwiseAbs().maxCoeff() <= 1e-7 * 7);
  }

  TEST_CASE("single precision instantiation") {
    Eigen::MatrixXf x(4, 2);
    x << 0, 0, 1, 0, 0, 1, 2, 2;
    const auto model = fit_kpca(x, 0.5f, 0.95f);
    const Eigen::MatrixXf proj = transform(model, x);
    CHECK(proj.colwise().mean().cwiseAbs().maxCoeff() <= 1e-4f);
  }
}
