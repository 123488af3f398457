#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "intervene/dataset.hpp"
#include "intervene/gain.hpp"
#include "intervene/rng.hpp"

namespace intervene {

// Centered noise attached to one structural equation.
struct NoiseSpec {
  enum class Kind { Uniform, Laplace };
  Kind kind = Kind::Uniform;
  double variance = 1.0;
};

// Linear structural equation model over d covariates plus the outcome, stored
// as a strictly lower-triangular weight matrix with the outcome last: node i
// equals the weighted sum of earlier nodes plus its own centered noise, so
// every observational mean is zero.  Ground truth for the experiment harness.
class Sem {
 public:
  Sem(Eigen::MatrixXd weights, std::vector<NoiseSpec> noises);

  Eigen::Index covariates() const { return weights_.rows() - 1; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<NoiseSpec>& noises() const { return noises_; }

  // n independent rows; columns named x1..xd, outcome y.
  Dataset sample(Eigen::Index n, Rng& rng) const;

  // Expected outcome change caused by applying the transformation as an
  // intervention: shifts add to the intervened equations, fixing overrides
  // them, and effects propagate downstream.
  double do_expected_outcome_change(const Transformation& t) const;

  // What a regression-then-average estimand converges to for the same
  // transformation: only the direct outcome parents respond, holding every
  // other covariate at its observational distribution.
  double adjustment_expected_outcome_change(const Transformation& t) const;

  // Marginal standard deviation of every node (outcome last), from the exact
  // model covariance.
  Eigen::VectorXd marginal_sds() const;

  // d total effects: the outcome change per unit shift of each covariate.
  Eigen::VectorXd total_effects_on_outcome() const;

  struct SingleShift {
    int index = -1;      // covariate moved, -1 when nothing helps
    double delta = 0.0;
    double change = 0.0;  // expected outcome change
  };

  // Best expected outcome change achievable by shifting one covariate within
  // +-caps[s] (absolute bounds); ties go to the lowest index.
  SingleShift optimal_single_shift(const Eigen::VectorXd& caps) const;

  // True when every outcome parent is either in the fixed set or cannot be
  // reached from it, so fixing screens off the intervention and the
  // regression-then-average estimand matches the interventional one.
  bool fixed_set_screens_outcome_parents(const std::vector<int>& fix_set) const;

  struct DoEqualityReport {
    double regression_average_change = 0.0;  // transformation taken literally
    double do_change = 0.0;                  // true interventional change
    bool screened = false;  // fixed_set_screens_outcome_parents held
  };

  // Both closed-form estimands for fixing the given covariates, plus the
  // screening flag; when the flag is true the two reals agree.  An empty set
  // yields zeros and a vacuously true flag.
  DoEqualityReport verify_do_equality(const std::vector<int>& fix_set,
                                      const Eigen::VectorXd& values) const;

  // True when no outcome parent is an ancestor of another outcome parent.
  bool outcome_parents_causally_unrelated() const;

  nlohmann::json to_json() const;
  static Sem from_json(const nlohmann::json& j);

  // Random strictly lower-triangular model: edges appear with the given
  // probability, weights draw magnitudes in [0.3, 1.5] with random sign, noise
  // variances in [0.5, 1.5] with a coin-flip kind, and the outcome always gets
  // at least one parent.
  static Sem random_dag(Eigen::Index d, double density, std::uint64_t seed);

 private:
  std::vector<char> reachable_from(const std::vector<int>& sources) const;

  Eigen::MatrixXd weights_;        // (d+1) x (d+1), strictly lower triangular
  std::vector<NoiseSpec> noises_;  // one per node
};

}  // namespace intervene
