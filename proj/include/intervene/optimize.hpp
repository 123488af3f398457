#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "intervene/gain.hpp"
#include "intervene/gp.hpp"

namespace intervene {

// Knobs shared by the shift and covariate-fixing optimizers.  The smoothing
// schedule lists lengthscale inflation factors, descending and ending at 1;
// {1} disables continuation and runs a plain proximal ascent.
struct OptimizerSettings {
  std::vector<double> schedule{8.0, 4.0, 2.0, 1.0};
  int max_iters = 500;          // proximal iterations per stage
  double step_tol = 1e-6;       // stop when the step norm falls below this
  int random_restarts = 8;      // box draws added to the zero start
  std::uint64_t seed = 0;
  double support_tol = 1e-6;    // |delta_s| above this counts as moved
  int bisect_max = 60;          // penalty-level bisection iterations
  double bracket_ratio = 1.01;  // stop bisecting when hi/lo falls below this
  std::function<void(const std::string&)> log;  // optional diagnostics sink

  void validate() const;
};

// max(v - t, 0) with the sign of v; t >= 0.
double soft_threshold(double value, double threshold);

Eigen::VectorXd project_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper);

struct ProxResult {
  Eigen::VectorXd delta;
  double objective = 0.0;  // penalized value at delta
  int iterations = 0;
  bool converged = false;
};

// Maximize quantile(delta) - lambda * sum_s costs_s |delta_s| over the box by
// proximal gradient ascent with backtracking from a unit step.  Each accepted
// step provably does not decrease the penalized objective.
ProxResult proximal_maximize(const ShiftGainEval& eval,
                             const InterventionConstraints& c, double lambda,
                             const Eigen::VectorXd& init,
                             const OptimizerSettings& settings);

// Shift evaluators for every smoothing stage of a schedule, built once and
// reused across penalty levels and restarts.  The final stage always uses the
// unsmoothed model.
class ShiftStageCache {
 public:
  ShiftStageCache(const GpPosterior& model, const GainContext& ctx,
                  const std::vector<double>& schedule);

  std::size_t stages() const { return evals_.size(); }
  const ShiftGainEval& stage(std::size_t i) const { return evals_[i]; }
  const ShiftGainEval& final_stage() const { return evals_.back(); }
  Eigen::Index dim() const { return evals_.back().dim(); }

 private:
  std::vector<std::unique_ptr<GpPosterior>> smoothed_;  // owned inflated models
  std::vector<ShiftGainEval> evals_;                    // schedule order
};

struct ContinuationResult {
  Eigen::VectorXd delta;
  double objective = 0.0;  // penalized value under the unsmoothed model
  int iterations = 0;      // proximal iterations summed over stages
};

// Run the schedule from one start, warm-starting each stage with the previous
// maximizer.  With the safeguard on, a plain unsmoothed ascent from the same
// start also runs and the better endpoint wins, so the result is never worse
// than skipping continuation.
ContinuationResult continuation_maximize_from(const ShiftStageCache& stages,
                                              const InterventionConstraints& c,
                                              double lambda,
                                              const Eigen::VectorXd& init,
                                              const OptimizerSettings& settings,
                                              bool with_plain_safeguard = true);

// Multi-start version: the zero vector plus settings.random_restarts uniform
// box draws, best penalized endpoint wins.
ContinuationResult continuation_maximize(const ShiftStageCache& stages,
                                         const InterventionConstraints& c,
                                         double lambda,
                                         const OptimizerSettings& settings);

ContinuationResult continuation_maximize(const GpPosterior& model,
                                         const GainContext& ctx,
                                         const InterventionConstraints& c,
                                         double lambda,
                                         const OptimizerSettings& settings);

struct SparseShiftResult {
  Transformation transformation;  // shift (identity when do_not_intervene)
  double score = 0.0;             // unpenalized quantile value of the best move
  double lambda = 0.0;            // selected penalty level, 0 when unneeded
  std::vector<int> support;       // moved covariates, ascending
  int iterations = 0;             // proximal iterations across the search
  bool do_not_intervene = false;  // best score <= 0
};

// Box- and cardinality-constrained shift search: try the unpenalized problem
// first; if too many covariates move, bisect the penalty level to the smallest
// value whose maximizer respects the cardinality budget, then re-maximize
// without penalty restricted to that support.
SparseShiftResult sparse_shift(const GpPosterior& model, const GainContext& ctx,
                               const InterventionConstraints& c,
                               const OptimizerSettings& settings);

// sparse_shift for one individual; returns the identity transformation when
// no move has a positive score (the found score is kept for reporting).
SparseShiftResult personalized_intervention(const GpPosterior& model,
                                            const Eigen::VectorXd& x,
                                            const InterventionConstraints& c,
                                            const OptimizerSettings& settings);

struct CovfixResult {
  Transformation transformation;  // covariate fixing (identity when empty)
  double score = 0.0;
  std::vector<int> fix_set;       // chosen covariates, in selection order
  int iterations = 0;
  bool do_not_intervene = false;
};

// Greedy forward selection of up to k covariates to clamp at constants chosen
// by projected gradient ascent inside per-covariate ranges (d x 2, low/high
// columns); each addition must strictly improve the score and ties go to the
// lowest index.  Ends with a joint multi-start refit of all chosen constants.
CovfixResult forward_stepwise_covfix(const GpPosterior& model, const Dataset& data,
                                     int k, const Eigen::MatrixXd& ranges,
                                     double alpha,
                                     const OptimizerSettings& settings);

}  // namespace intervene
