#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include <json.hpp>

#include "intervene/gp.hpp"

namespace intervene {

// Gaussian law of the outcome change induced by a transformation, under the
// fitted posterior.
struct GainDistribution {
  double mean = 0.0;
  double variance = 0.0;
};

// Feasible move set for shift interventions plus the risk level.
struct InterventionConstraints {
  Eigen::VectorXd lower;          // per covariate, <= 0
  Eigen::VectorXd upper;          // per covariate, >= 0
  int cardinality_k = 0;          // max covariates moved, 0..d
  Eigen::VectorXd costs;          // positive sparsity weights
  std::vector<char> immutable;    // 1 = never move this covariate
  double alpha = 0.05;            // quantile level, (0, 0.5]

  static InterventionConstraints box(Eigen::Index d, double half_width, int k,
                                     double alpha = 0.05);
  void validate() const;
};

// Either "add a vector to x" or "overwrite a subset of coordinates with
// constants"; the identity is the all-zero shift.
struct Transformation {
  enum class Kind { Shift, CovariateFixing };

  Kind kind = Kind::Shift;
  Eigen::VectorXd shift;        // Shift: length d
  std::vector<int> fix_set;     // CovariateFixing: target coordinates
  Eigen::VectorXd fix_values;   // aligned with fix_set

  static Transformation identity(Eigen::Index d);
  static Transformation shift_by(Eigen::VectorXd delta);
  static Transformation fix(std::vector<int> indices, Eigen::VectorXd values,
                            Eigen::Index d);

  Eigen::Index dim() const { return dim_; }
  bool is_identity() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& X) const;
  void validate() const;

  nlohmann::json to_json() const;
  static Transformation from_json(const nlohmann::json& j, Eigen::Index d);

 private:
  Eigen::Index dim_ = 0;
};

// Who receives the intervention: one individual (a point) or the empirical
// population of a dataset.  Population contexts hold a pointer; the dataset
// must outlive the context.
class GainContext {
 public:
  static GainContext individual(Eigen::VectorXd x);
  static GainContext population(const Dataset& data);

  bool is_individual() const { return x_.has_value(); }
  const Eigen::VectorXd& point() const { return *x_; }
  const Dataset& data() const { return *data_; }

 private:
  std::optional<Eigen::VectorXd> x_;
  const Dataset* data_ = nullptr;
};

// mean + Phi^-1(alpha) * sqrt(variance).  Variance may carry roundoff down to
// -1e-8 (clamped to 0); below 1e-12 the deviation term is dropped entirely so
// the identity transformation scores an exact 0 and its gradient stays finite.
double gaussian_quantile(double mean, double variance, double alpha);

// Outcome-change law for moving one individual from x to t.
GainDistribution individual_gain(const GpPosterior& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& t);

// Outcome-change law for applying t to every row of data, averaged; the
// variance accounts for all cross-covariances via one batched posterior
// covariance over the 2n original-plus-transformed points (O(n^2) memory).
GainDistribution population_gain(const GpPosterior& model, const Dataset& data,
                                 const Transformation& t);

GainDistribution gain(const GpPosterior& model, const GainContext& ctx,
                      const Transformation& t);

// Quantile score of t minus lambda * sum_s costs_s |shift_s| (penalty only
// meaningful for shifts; lambda must be 0 for covariate fixing).
double objective(const GpPosterior& model, const GainContext& ctx,
                 const Transformation& t, const InterventionConstraints& c,
                 double lambda = 0.0);

// Gradient of the smooth quantile part with respect to the shift vector.
// The deviation term's gradient is dropped below the same 1e-12 floor.
Eigen::VectorXd objective_gradient(const GpPosterior& model, const GainContext& ctx,
                                   const Eigen::VectorXd& shift,
                                   const InterventionConstraints& c);

struct RankedCandidate {
  Transformation transformation;
  double score = 0.0;
  bool do_not_intervene = false;  // score <= 0
  int original_index = 0;
};

// Scores every candidate on the population and sorts by descending score
// (original order breaks ties).
std::vector<RankedCandidate> rank_candidates(const GpPosterior& model,
                                             const Dataset& data,
                                             const std::vector<Transformation>& candidates,
                                             double alpha);

// ---------------------------------------------------------------------------
// Incremental evaluators used by the optimizers.  They agree with the plain
// operations above (tested) but amortize kernel work across many calls.

namespace detail {

// Population-side quantities that do not depend on the candidate move.
struct PopulationCache {
  PopulationCache(const GpPosterior& model, const Dataset& data);

  const GpPosterior* model;
  Eigen::MatrixXd Xp;          // population rows
  bool shares_train = false;   // population coincides with the training table
  Eigen::VectorXd u_X;         // row sums of k(train, population)
  Eigen::VectorXd w_X;         // (K + noise I)^-1 u_X
  double sum_gram_pop = 0.0;   // sum of the population/population kernel
  double S_XX = 0.0;           // summed posterior covariance of the population
  double mu_X_sum = 0.0;       // summed posterior mean of the population
};

}  // namespace detail

// Quantile objective F(delta) for shift moves, with gradient; individual or
// population context.
class ShiftGainEval {
 public:
  ShiftGainEval(const GpPosterior& model, const GainContext& ctx);

  Eigen::Index dim() const { return dim_; }
  GainDistribution gain(const Eigen::VectorXd& delta) const;
  double value(const Eigen::VectorXd& delta, double alpha) const;
  double value_and_grad(const Eigen::VectorXd& delta, double alpha,
                        Eigen::VectorXd& grad) const;

 private:
  void eval_impl(const Eigen::VectorXd& delta, double alpha, bool want_grad,
                 GainDistribution& g, Eigen::VectorXd& grad) const;
  void individual_impl(const Eigen::VectorXd& delta, double alpha, bool want_grad,
                       GainDistribution& g, Eigen::VectorXd& grad) const;
  void population_impl(const Eigen::VectorXd& delta, double alpha, bool want_grad,
                       GainDistribution& g, Eigen::VectorXd& grad) const;

  const GpPosterior* model_;
  Eigen::Index dim_;
  // individual context
  std::optional<Eigen::VectorXd> x_;
  Eigen::VectorXd k_x_, w_x_;
  double mu_x_ = 0.0, var_x_ = 0.0;
  // population context
  std::optional<detail::PopulationCache> pop_;
};

// Quantile objective over the constants z of a fixed covariate set, for the
// population of the cache.
class CovfixGainEval {
 public:
  CovfixGainEval(const detail::PopulationCache& cache, std::vector<int> fix_set);

  const std::vector<int>& fix_set() const { return fix_set_; }
  GainDistribution gain(const Eigen::VectorXd& z) const;
  double value(const Eigen::VectorXd& z, double alpha) const;
  double value_and_grad(const Eigen::VectorXd& z, double alpha,
                        Eigen::VectorXd& grad) const;

 private:
  Eigen::VectorXd fixed_part(const Eigen::MatrixXd& coords,
                             const Eigen::VectorXd& z) const;
  void eval_impl(const Eigen::VectorXd& z, double alpha, bool want_grad,
                 GainDistribution& g, Eigen::VectorXd& grad) const;

  const detail::PopulationCache* cache_;
  std::vector<int> fix_set_;
  Eigen::VectorXd row_sum_unfixed_;  // row sums of the unfixed-coordinate kernel, train vs population
  Eigen::VectorXd col_sum_unfixed_;  // column sums of the population/population one
  double sum_unfixed_ = 0.0;         // total of the population/population one
  Eigen::MatrixXd train_fixed_;      // training coordinates of the fixed set
  Eigen::MatrixXd pop_fixed_;        // population coordinates of the fixed set
  Eigen::VectorXd inv_l2_fixed_;
};

}  // namespace intervene
