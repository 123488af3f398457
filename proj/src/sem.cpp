#include "intervene/sem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace intervene {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string noise_kind_name(NoiseSpec::Kind k) {
  return k == NoiseSpec::Kind::Uniform ? "uniform" : "laplace";
}

NoiseSpec::Kind noise_kind_from(const std::string& name) {
  if (name == "uniform") return NoiseSpec::Kind::Uniform;
  if (name == "laplace") return NoiseSpec::Kind::Laplace;
  fail("sem json: unknown noise kind '" + name + "'");
}

}  // namespace

Sem::Sem(Eigen::MatrixXd weights, std::vector<NoiseSpec> noises)
    : weights_(std::move(weights)), noises_(std::move(noises)) {
  const Eigen::Index m = weights_.rows();
  if (m < 2 || weights_.cols() != m)
    fail("sem: weights must be square with at least two nodes");
  if (!weights_.allFinite()) fail("sem: weights must be finite");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j)
      if (weights_(i, j) != 0.0)
        fail("sem: weights must be strictly lower triangular");
  if (static_cast<Eigen::Index>(noises_.size()) != m)
    fail("sem: one noise spec per node required");
  for (const NoiseSpec& s : noises_)
    if (!(s.variance > 0.0) || !std::isfinite(s.variance))
      fail("sem: noise variances must be positive and finite");
}

Dataset Sem::sample(Eigen::Index n, Rng& rng) const {
  if (n < 1) fail("sem: sample size must be positive");
  const Eigen::Index d = covariates();
  Dataset out;
  out.covariates.resize(n, d);
  out.outcomes.resize(n);
  out.column_names.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index s = 0; s < d; ++s)
    out.column_names.push_back("x" + std::to_string(s + 1));
  out.outcome_name = "y";

  Eigen::VectorXd values(d + 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index i = 0; i <= d; ++i) {
      const NoiseSpec& spec = noises_[static_cast<std::size_t>(i)];
      const double noise = spec.kind == NoiseSpec::Kind::Uniform
                               ? rng.centered_uniform(spec.variance)
                               : rng.laplace(spec.variance);
      values[i] = weights_.row(i).head(i).dot(values.head(i)) + noise;
    }
    out.covariates.row(r) = values.head(d).transpose();
    out.outcomes[r] = values[d];
  }
  return out;
}

double Sem::do_expected_outcome_change(const Transformation& t) const {
  const Eigen::Index d = covariates();
  t.validate();
  if (t.dim() != d) fail("sem: transformation dimension mismatch");

  std::vector<double> fixed(static_cast<std::size_t>(d),
                            std::numeric_limits<double>::quiet_NaN());
  bool fixing = (t.kind == Transformation::Kind::CovariateFixing);
  if (fixing)
    for (std::size_t i = 0; i < t.fix_set.size(); ++i)
      fixed[static_cast<std::size_t>(t.fix_set[i])] =
          t.fix_values[static_cast<Eigen::Index>(i)];

  // Both kinds are degenerate assignments: fixing installs the constant, and a
  // nonzero shift installs the observational mean (zero) plus the shift,
  // severing the intervened equation from its parents either way.
  Eigen::VectorXd mean(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (fixing && !std::isnan(fixed[static_cast<std::size_t>(i)])) {
      mean[i] = fixed[static_cast<std::size_t>(i)];
      continue;
    }
    if (!fixing && t.shift[i] != 0.0) {
      mean[i] = t.shift[i];
      continue;
    }
    mean[i] = weights_.row(i).head(i).dot(mean.head(i));
  }
  mean[d] = weights_.row(d).head(d).dot(mean.head(d));
  // Observational means are all zero, so the post-intervention outcome mean is
  // itself the change.
  return mean[d];
}

double Sem::adjustment_expected_outcome_change(const Transformation& t) const {
  const Eigen::Index d = covariates();
  t.validate();
  if (t.dim() != d) fail("sem: transformation dimension mismatch");
  // The full-covariate regression function is the direct-parent sum, so
  // averaging it over the observational distribution leaves only the moved
  // direct parents.
  if (t.kind == Transformation::Kind::Shift)
    return weights_.row(d).head(d).dot(t.shift);
  double change = 0.0;
  for (std::size_t i = 0; i < t.fix_set.size(); ++i)
    change += weights_(d, t.fix_set[i]) * t.fix_values[static_cast<Eigen::Index>(i)];
  return change;
}

Eigen::VectorXd Sem::marginal_sds() const {
  const Eigen::Index m = weights_.rows();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m) - weights_;
  Eigen::MatrixXd scaled_noise = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    scaled_noise(i, i) = std::sqrt(noises_[static_cast<std::size_t>(i)].variance);
  // values = lhs^-1 noise, so the covariance factor is lhs^-1 noise^(1/2).
  const Eigen::MatrixXd factor =
      lhs.triangularView<Eigen::Lower>().solve(scaled_noise);
  return factor.rowwise().norm();
}

Eigen::VectorXd Sem::total_effects_on_outcome() const {
  const Eigen::Index m = weights_.rows();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m) - weights_;
  Eigen::VectorXd e_y = Eigen::VectorXd::Zero(m);
  e_y[m - 1] = 1.0;
  const Eigen::VectorXd row =
      lhs.transpose().triangularView<Eigen::Upper>().solve(e_y);
  return row.head(m - 1);
}

Sem::SingleShift Sem::optimal_single_shift(const Eigen::VectorXd& caps) const {
  const Eigen::Index d = covariates();
  if (caps.size() != d) fail("sem: caps dimension mismatch");
  if ((caps.array() < 0.0).any()) fail("sem: caps must be non-negative");
  const Eigen::VectorXd effects = total_effects_on_outcome();
  SingleShift best;
  best.change = 0.0;
  for (Eigen::Index s = 0; s < d; ++s) {
    const double change = std::abs(effects[s]) * caps[s];
    if (change > best.change) {
      best.index = static_cast<int>(s);
      best.delta = effects[s] >= 0.0 ? caps[s] : -caps[s];
      best.change = change;
    }
  }
  return best;
}

std::vector<char> Sem::reachable_from(const std::vector<int>& sources) const {
  const Eigen::Index m = weights_.rows();
  std::vector<char> reached(static_cast<std::size_t>(m), 0);
  std::vector<char> frontier(static_cast<std::size_t>(m), 0);
  for (int s : sources) frontier[static_cast<std::size_t>(s)] = 1;
  // Topological order: one forward sweep marks everything downstream.
  for (Eigen::Index i = 0; i < m; ++i) {
    bool hit = false;
    for (Eigen::Index j = 0; j < i && !hit; ++j)
      if (weights_(i, j) != 0.0 &&
          (frontier[static_cast<std::size_t>(j)] ||
           reached[static_cast<std::size_t>(j)]))
        hit = true;
    if (hit) reached[static_cast<std::size_t>(i)] = 1;
  }
  return reached;
}

bool Sem::fixed_set_screens_outcome_parents(const std::vector<int>& fix_set) const {
  const Eigen::Index d = covariates();
  for (int s : fix_set)
    if (s < 0 || s >= d) fail("sem: fix index out of range");
  std::vector<char> in_set(static_cast<std::size_t>(d), 0);
  for (int s : fix_set) in_set[static_cast<std::size_t>(s)] = 1;
  const std::vector<char> downstream = reachable_from(fix_set);
  for (Eigen::Index p = 0; p < d; ++p) {
    if (weights_(d, p) == 0.0) continue;  // not an outcome parent
    if (in_set[static_cast<std::size_t>(p)]) continue;
    if (downstream[static_cast<std::size_t>(p)]) return false;
  }
  return true;
}

Sem::DoEqualityReport Sem::verify_do_equality(const std::vector<int>& fix_set,
                                              const Eigen::VectorXd& values) const {
  DoEqualityReport report;
  if (fix_set.empty()) {
    report.screened = true;
    return report;
  }
  const Transformation t = Transformation::fix(fix_set, values, covariates());
  report.regression_average_change = adjustment_expected_outcome_change(t);
  report.do_change = do_expected_outcome_change(t);
  report.screened = fixed_set_screens_outcome_parents(fix_set);
  return report;
}

bool Sem::outcome_parents_causally_unrelated() const {
  const Eigen::Index d = covariates();
  for (Eigen::Index p = 0; p < d; ++p) {
    if (weights_(d, p) == 0.0) continue;
    const std::vector<char> downstream =
        reachable_from({static_cast<int>(p)});
    for (Eigen::Index q = 0; q < d; ++q)
      if (q != p && weights_(d, q) != 0.0 &&
          downstream[static_cast<std::size_t>(q)])
        return false;
  }
  return true;
}

nlohmann::json Sem::to_json() const {
  nlohmann::json j;
  const Eigen::Index m = weights_.rows();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i)
    rows[static_cast<std::size_t>(i)].assign(weights_.row(i).begin(),
                                             weights_.row(i).end());
  j["weights"] = rows;
  nlohmann::json noises = nlohmann::json::array();
  for (const NoiseSpec& s : noises_) {
    noises.push_back({{"kind", noise_kind_name(s.kind)},
                      {"variance", s.variance}});
  }
  j["noises"] = noises;
  return j;
}

Sem Sem::from_json(const nlohmann::json& j) {
  const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd weights(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m)
      fail("sem json: weights must be square");
    for (Eigen::Index k = 0; k < m; ++k)
      weights(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  std::vector<NoiseSpec> noises;
  for (const auto& item : j.at("noises")) {
    NoiseSpec s;
    s.kind = noise_kind_from(item.at("kind").get<std::string>());
    s.variance = item.at("variance").get<double>();
    noises.push_back(s);
  }
  return Sem(std::move(weights), std::move(noises));
}

Sem Sem::random_dag(Eigen::Index d, double density, std::uint64_t seed) {
  if (d < 1) fail("sem: need at least one covariate");
  if (!(density >= 0.0 && density <= 1.0)) fail("sem: density must lie in [0, 1]");
  Rng rng(seed);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(d + 1, d + 1);
  auto draw_weight = [&rng]() {
    const double magnitude = rng.uniform(0.3, 1.5);
    return rng.uniform() < 0.5 ? magnitude : -magnitude;
  };
  for (Eigen::Index i = 1; i <= d; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (rng.uniform() < density) weights(i, j) = draw_weight();
  if ((weights.row(d).head(d).array() == 0.0).all()) {
    const Eigen::Index j =
        static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<int>(d) - 1));
    weights(d, j) = draw_weight();
  }
  std::vector<NoiseSpec> noises(static_cast<std::size_t>(d + 1));
  for (NoiseSpec& s : noises) {
    s.kind = rng.uniform() < 0.5 ? NoiseSpec::Kind::Uniform
                                 : NoiseSpec::Kind::Laplace;
    s.variance = rng.uniform(0.5, 1.5);
  }
  return Sem(std::move(weights), std::move(noises));
}

}  // namespace intervene
