#include "intervene/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "intervene/numerics.hpp"

namespace intervene {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Two-sided p-value for one coefficient; a zero standard error collapses the
// test to certainty one way or the other.
double coefficient_p_value(double coef, double se, double dof) {
  if (se == 0.0) return coef == 0.0 ? 1.0 : 0.0;
  return student_t_two_sided_p(coef / se, dof);
}

struct OlsFit {
  Eigen::VectorXd coefficients;  // aligned with design columns
  Eigen::VectorXd std_errors;
  double dof = 0.0;
};

// Least squares with intercept via QR; throws on a rank-deficient design.
OlsFit ols(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& y) {
  const Eigen::Index n = predictors.rows();
  const Eigen::Index p = predictors.cols() + 1;
  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.rightCols(predictors.cols()) = predictors;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p)
    throw NumericalError("baseline regression: rank-deficient design");
  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.dof = static_cast<double>(n - p);
  const Eigen::VectorXd residuals = y - design * fit.coefficients;
  const double sigma2 = residuals.squaredNorm() / fit.dof;
  const Eigen::MatrixXd xtx_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.std_errors = (sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  return fit;
}

bool beneficial(double coef, InterventionDirection direction) {
  return direction == InterventionDirection::Up ? coef > 0.0 : coef < 0.0;
}

int propose(const std::vector<LinearTestSummary>& tests,
            InterventionDirection direction) {
  int best = -1;
  double best_t = 0.0;
  for (const LinearTestSummary& t : tests) {
    if (!t.significant || !beneficial(t.coefficient, direction)) continue;
    if (best < 0 || std::abs(t.t_statistic) > best_t) {
      best = t.index;
      best_t = std::abs(t.t_statistic);
    }
  }
  return best;
}

}  // namespace

std::vector<char> benjamini_hochberg(const std::vector<double>& p_values,
                                     double fdr) {
  if (!(fdr > 0.0 && fdr < 1.0)) fail("benjamini_hochberg: fdr must lie in (0,1)");
  const std::size_t m = p_values.size();
  std::vector<char> keep(m, 0);
  if (m == 0) return keep;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p_values[a] < p_values[b];
  });
  double threshold = -1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const double p = p_values[order[rank - 1]];
    if (p <= fdr * static_cast<double>(rank) / static_cast<double>(m)) {
      threshold = p;
      break;
    }
  }
  if (threshold < 0.0) return keep;
  for (std::size_t i = 0; i < m; ++i)
    if (p_values[i] <= threshold) keep[i] = 1;
  return keep;
}

BaselinePickerReport baseline_linear_pickers(const Dataset& data,
                                             const std::vector<int>& candidates,
                                             InterventionDirection direction,
                                             double level) {
  data.validate();
  if (candidates.empty()) fail("baselines: need at least one candidate covariate");
  if (!(level > 0.0 && level < 1.0)) fail("baselines: level must lie in (0,1)");
  std::vector<char> seen(static_cast<std::size_t>(data.dim()), 0);
  for (int c : candidates) {
    if (c < 0 || c >= data.dim()) fail("baselines: candidate index out of range");
    if (seen[static_cast<std::size_t>(c)]++) fail("baselines: duplicate candidate");
  }
  const Eigen::Index n = data.rows();
  const Eigen::Index q = static_cast<Eigen::Index>(candidates.size());
  if (n <= q + 1)
    fail("baselines: multivariate regression needs more rows than coefficients");

  BaselinePickerReport report;

  // Joint fit over all candidates.
  Eigen::MatrixXd predictors(n, q);
  for (Eigen::Index i = 0; i < q; ++i)
    predictors.col(i) = data.covariates.col(candidates[static_cast<std::size_t>(i)]);
  const OlsFit joint = ols(predictors, data.outcomes);
  for (Eigen::Index i = 0; i < q; ++i) {
    LinearTestSummary t;
    t.index = candidates[static_cast<std::size_t>(i)];
    t.coefficient = joint.coefficients[i + 1];  // skip the intercept
    t.std_error = joint.std_errors[i + 1];
    t.t_statistic = t.std_error == 0.0 ? 0.0 : t.coefficient / t.std_error;
    t.p_value = coefficient_p_value(t.coefficient, t.std_error, joint.dof);
    t.significant = t.p_value < level;
    report.multivariate.tests.push_back(t);
  }
  report.multivariate.proposed = propose(report.multivariate.tests, direction);

  // One univariate fit per candidate, then the FDR step-up across them.
  std::vector<double> p_values;
  for (Eigen::Index i = 0; i < q; ++i) {
    const OlsFit single = ols(predictors.col(i), data.outcomes);
    LinearTestSummary t;
    t.index = candidates[static_cast<std::size_t>(i)];
    t.coefficient = single.coefficients[1];
    t.std_error = single.std_errors[1];
    t.t_statistic = t.std_error == 0.0 ? 0.0 : t.coefficient / t.std_error;
    t.p_value = coefficient_p_value(t.coefficient, t.std_error, single.dof);
    report.marginal.tests.push_back(t);
    p_values.push_back(t.p_value);
  }
  const std::vector<char> keep = benjamini_hochberg(p_values, level);
  for (std::size_t i = 0; i < keep.size(); ++i)
    report.marginal.tests[i].significant = keep[i] != 0;
  report.marginal.proposed = propose(report.marginal.tests, direction);
  return report;
}

}  // namespace intervene
