#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "intervene/baselines.hpp"
#include "intervene/dataset.hpp"
#include "intervene/numerics.hpp"

using namespace intervene;

namespace {

Dataset make_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Dataset data;
  data.covariates = X;
  data.outcomes = y;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    data.column_names.push_back("x" + std::to_string(c + 1));
  data.outcome_name = "y";
  return data;
}

Eigen::MatrixXd random_matrix(int n, int d, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) X(r, c) = u(eng);
  return X;
}

}  // namespace

TEST_CASE("a strong single signal is proposed by both methods") {
  const int n = 150;
  const Eigen::MatrixXd X = random_matrix(n, 3, 11);
  std::mt19937_64 eng(12);
  std::normal_distribution<double> g(0.0, 0.05);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = 2.0 * X(r, 1) + g(eng);
  const Dataset data = make_data(X, y);

  const BaselinePickerReport report =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Up);
  CHECK(report.multivariate.proposed == 1);
  CHECK(report.marginal.proposed == 1);
  REQUIRE(report.multivariate.tests.size() == 3);
  CHECK(report.multivariate.tests[1].coefficient == doctest::Approx(2.0).epsilon(0.02));
  CHECK(report.multivariate.tests[1].significant);
  CHECK(report.multivariate.tests[1].p_value < 1e-6);
  CHECK(report.marginal.tests[1].coefficient == doctest::Approx(2.0).epsilon(0.05));

  // The beneficial direction gates the proposal: a positive coefficient does
  // not qualify for a downward push.
  const BaselinePickerReport down =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Down);
  CHECK(down.multivariate.proposed == -1);
  CHECK(down.marginal.proposed == -1);
}

TEST_CASE("a negative signal is proposed only for the downward direction") {
  const int n = 150;
  const Eigen::MatrixXd X = random_matrix(n, 3, 21);
  std::mt19937_64 eng(22);
  std::normal_distribution<double> g(0.0, 0.05);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = -1.5 * X(r, 2) + g(eng);
  const Dataset data = make_data(X, y);

  const BaselinePickerReport down =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Down);
  CHECK(down.multivariate.proposed == 2);
  CHECK(down.marginal.proposed == 2);

  const BaselinePickerReport up =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Up);
  CHECK(up.multivariate.proposed == -1);
  CHECK(up.marginal.proposed == -1);
}

TEST_CASE("the largest qualifying t statistic wins") {
  const int n = 200;
  const Eigen::MatrixXd X = random_matrix(n, 3, 31);
  std::mt19937_64 eng(32);
  std::normal_distribution<double> g(0.0, 0.1);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = 0.4 * X(r, 0) + 2.0 * X(r, 2) + g(eng);
  const Dataset data = make_data(X, y);

  const BaselinePickerReport report =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Up);
  CHECK(report.multivariate.tests[0].significant);
  CHECK(report.multivariate.tests[2].significant);
  CHECK(report.multivariate.proposed == 2);
  CHECK(report.marginal.proposed == 2);
  CHECK(std::abs(report.multivariate.tests[2].t_statistic) >
        std::abs(report.multivariate.tests[0].t_statistic));
}

TEST_CASE("pure noise yields no proposal") {
  const int n = 120;
  const Eigen::MatrixXd X = random_matrix(n, 3, 41);
  std::mt19937_64 eng(42);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = g(eng);
  const Dataset data = make_data(X, y);

  const BaselinePickerReport report =
      baseline_linear_pickers(data, {0, 1, 2}, InterventionDirection::Up);
  CHECK(report.multivariate.proposed == -1);
  CHECK(report.marginal.proposed == -1);
  for (const LinearTestSummary& t : report.multivariate.tests)
    CHECK_FALSE(t.significant);
}

TEST_CASE("one candidate: marginal and multivariate are the same regression") {
  const int n = 80;
  const Eigen::MatrixXd X = random_matrix(n, 2, 51);
  std::mt19937_64 eng(52);
  std::normal_distribution<double> g(0.0, 0.3);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = 1.2 * X(r, 0) + g(eng);
  const Dataset data = make_data(X, y);

  const BaselinePickerReport report =
      baseline_linear_pickers(data, {0}, InterventionDirection::Up);
  REQUIRE(report.multivariate.tests.size() == 1);
  REQUIRE(report.marginal.tests.size() == 1);
  const LinearTestSummary& a = report.multivariate.tests[0];
  const LinearTestSummary& b = report.marginal.tests[0];
  CHECK(a.coefficient == doctest::Approx(b.coefficient).epsilon(1e-12));
  CHECK(a.std_error == doctest::Approx(b.std_error).epsilon(1e-12));
  CHECK(a.p_value == doctest::Approx(b.p_value).epsilon(1e-12));
  CHECK(a.significant == b.significant);
  CHECK(report.multivariate.proposed == report.marginal.proposed);
}

TEST_CASE("an exact linear fit is reported as certain") {
  Eigen::MatrixXd X(6, 1);
  X << -2, -1, 0, 1, 2, 3;
  const Eigen::VectorXd y = 3.0 + 2.0 * X.col(0).array();
  const Dataset data = make_data(X, y);
  const BaselinePickerReport report =
      baseline_linear_pickers(data, {0}, InterventionDirection::Up);
  CHECK(report.multivariate.tests[0].coefficient == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(report.multivariate.tests[0].p_value < 1e-30);
  CHECK(report.multivariate.tests[0].significant);
  CHECK(report.multivariate.proposed == 0);
}

TEST_CASE("benjamini-hochberg step-up") {
  // The largest rank whose p-value clears its scaled bound sets the cut, and
  // everything at or below that p-value survives.
  const std::vector<char> all =
      benjamini_hochberg({0.01, 0.04, 0.03, 0.005}, 0.05);
  CHECK(all == std::vector<char>{1, 1, 1, 1});

  const std::vector<char> one = benjamini_hochberg({0.01, 0.2, 0.5, 0.9}, 0.05);
  CHECK(one == std::vector<char>{1, 0, 0, 0});

  // Equal borderline p-values pass together even though each alone would fail
  // every rank but the last.
  const std::vector<char> tied =
      benjamini_hochberg({0.04, 0.04, 0.04, 0.04}, 0.05);
  CHECK(tied == std::vector<char>{1, 1, 1, 1});

  const std::vector<char> none = benjamini_hochberg({0.9, 0.95}, 0.05);
  CHECK(none == std::vector<char>{0, 0});

  CHECK(benjamini_hochberg({}, 0.1).empty());
  CHECK_THROWS_AS(benjamini_hochberg({0.5}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(benjamini_hochberg({0.5}, 1.0), std::invalid_argument);
}

TEST_CASE("degenerate designs raise a numerical error") {
  const int n = 40;
  Eigen::MatrixXd X = random_matrix(n, 2, 61);
  X.col(1) = 2.0 * X.col(0);  // collinear pair
  std::mt19937_64 eng(62);
  std::normal_distribution<double> g(0.0, 0.1);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) y[r] = X(r, 0) + g(eng);
  const Dataset data = make_data(X, y);

  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {0, 1}, InterventionDirection::Up),
      NumericalError);
  // Catchable through the runtime_error base, unlike argument validation.
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {0, 1}, InterventionDirection::Up),
      std::runtime_error);
}

TEST_CASE("argument validation") {
  const Eigen::MatrixXd X = random_matrix(20, 3, 71);
  const Eigen::VectorXd y = X.col(0);
  const Dataset data = make_data(X, y);

  CHECK_THROWS_AS(baseline_linear_pickers(data, {}, InterventionDirection::Up),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {0, 0}, InterventionDirection::Up),
      std::invalid_argument);
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {3}, InterventionDirection::Up),
      std::invalid_argument);
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {-1}, InterventionDirection::Up),
      std::invalid_argument);
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {0}, InterventionDirection::Up, 0.0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      baseline_linear_pickers(data, {0}, InterventionDirection::Up, 1.0),
      std::invalid_argument);

  // Too few rows for the joint regression.
  const Eigen::MatrixXd tiny_x = random_matrix(4, 3, 72);
  const Dataset tiny = make_data(tiny_x, tiny_x.col(0));
  CHECK_THROWS_AS(
      baseline_linear_pickers(tiny, {0, 1, 2}, InterventionDirection::Up),
      std::invalid_argument);
}
