#include "intervene/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "intervene/rng.hpp"

namespace intervene {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Value of the smooth part; fills *grad when non-null.
using SmoothFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

double l1_penalty(const Eigen::VectorXd& x, double lambda,
                  const Eigen::VectorXd& costs) {
  if (lambda == 0.0) return 0.0;
  return lambda * costs.cwiseProduct(x.cwiseAbs()).sum();
}

// Proximal step for the penalty-plus-box term: per coordinate, shrink toward
// zero by the scaled cost, then clamp into the box.
Eigen::VectorXd prox_step(const Eigen::VectorXd& v, double eta_lambda,
                          const Eigen::VectorXd& costs, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index s = 0; s < v.size(); ++s) {
    const double z =
        eta_lambda > 0.0 ? soft_threshold(v[s], eta_lambda * costs[s]) : v[s];
    out[s] = std::min(std::max(z, lo[s]), hi[s]);
  }
  return out;
}

struct CoreResult {
  Eigen::VectorXd x;
  double penalized = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Backtracked proximal gradient ascent.  A candidate step is accepted when the
// smooth part satisfies the quadratic upper-bound test, which together with
// the proximal optimality of the step guarantees the penalized objective never
// decreases.
CoreResult core_prox_max(const SmoothFn& fn, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi, double lambda,
                         const Eigen::VectorXd& costs, const Eigen::VectorXd& init,
                         int max_iters, double step_tol) {
  CoreResult res;
  Eigen::VectorXd x = init.cwiseMax(lo).cwiseMin(hi);
  Eigen::VectorXd g(x.size());
  for (int it = 0; it < max_iters; ++it) {
    const double f = fn(x, &g);
    double eta = 1.0;
    bool accepted = false;
    bool fixed_point = false;
    Eigen::VectorXd cand;
    double step2 = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      cand = prox_step(x + eta * g, eta * lambda, costs, lo, hi);
      const Eigen::VectorXd dx = cand - x;
      step2 = dx.squaredNorm();
      if (step2 == 0.0) {
        fixed_point = true;
        break;
      }
      const double fc = fn(cand, nullptr);
      if (fc >= f + g.dot(dx) - step2 / (2.0 * eta)) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (fixed_point || !accepted) {
      res.converged = true;
      break;
    }
    x = cand;
    ++res.iterations;
    if (std::sqrt(step2) < step_tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.penalized = fn(res.x, nullptr) - l1_penalty(res.x, lambda, costs);
  return res;
}

SmoothFn shift_fn(const ShiftGainEval& eval, double alpha) {
  return [&eval, alpha](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad) return eval.value_and_grad(x, alpha, *grad);
    return eval.value(x, alpha);
  };
}

std::vector<int> support_of(const Eigen::VectorXd& delta, double tol) {
  std::vector<int> out;
  for (Eigen::Index s = 0; s < delta.size(); ++s)
    if (std::abs(delta[s]) > tol) out.push_back(static_cast<int>(s));
  return out;
}

Eigen::VectorXd draw_in_box(Rng& rng, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi) {
  Eigen::VectorXd out(lo.size());
  for (Eigen::Index s = 0; s < lo.size(); ++s) out[s] = rng.uniform(lo[s], hi[s]);
  return out;
}

}  // namespace

void OptimizerSettings::validate() const {
  if (schedule.empty()) fail("optimizer: smoothing schedule must be non-empty");
  if (schedule.back() != 1.0)
    fail("optimizer: smoothing schedule must end at factor 1");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] >= 1.0))
      fail("optimizer: smoothing factors must be >= 1");
    if (i > 0 && schedule[i] > schedule[i - 1])
      fail("optimizer: smoothing schedule must be non-increasing");
  }
  if (max_iters < 1) fail("optimizer: max_iters must be >= 1");
  if (!(step_tol > 0.0)) fail("optimizer: step_tol must be > 0");
  if (random_restarts < 0) fail("optimizer: random_restarts must be >= 0");
  if (!(support_tol > 0.0)) fail("optimizer: support_tol must be > 0");
  if (bisect_max < 1) fail("optimizer: bisect_max must be >= 1");
  if (!(bracket_ratio > 1.0)) fail("optimizer: bracket_ratio must be > 1");
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

Eigen::VectorXd project_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper) {
  if (v.size() != lower.size() || v.size() != upper.size())
    fail("project_box: size mismatch");
  return v.cwiseMax(lower).cwiseMin(upper);
}

ProxResult proximal_maximize(const ShiftGainEval& eval,
                             const InterventionConstraints& c, double lambda,
                             const Eigen::VectorXd& init,
                             const OptimizerSettings& settings) {
  settings.validate();
  c.validate();
  if (lambda < 0.0) fail("proximal_maximize: lambda must be >= 0");
  if (init.size() != eval.dim() || c.lower.size() != eval.dim())
    fail("proximal_maximize: dimension mismatch");
  const CoreResult core =
      core_prox_max(shift_fn(eval, c.alpha), c.lower, c.upper, lambda, c.costs,
                    init, settings.max_iters, settings.step_tol);
  ProxResult out;
  out.delta = core.x;
  out.objective = core.penalized;
  out.iterations = core.iterations;
  out.converged = core.converged;
  return out;
}

ShiftStageCache::ShiftStageCache(const GpPosterior& model, const GainContext& ctx,
                                 const std::vector<double>& schedule) {
  if (schedule.empty() || schedule.back() != 1.0)
    fail("stage cache: schedule must be non-empty and end at factor 1");
  evals_.reserve(schedule.size());
  for (double factor : schedule) {
    if (factor == 1.0) {
      evals_.emplace_back(model, ctx);
    } else {
      smoothed_.push_back(std::make_unique<GpPosterior>(model.smoothed(factor)));
      evals_.emplace_back(*smoothed_.back(), ctx);
    }
  }
}

ContinuationResult continuation_maximize_from(const ShiftStageCache& stages,
                                              const InterventionConstraints& c,
                                              double lambda,
                                              const Eigen::VectorXd& init,
                                              const OptimizerSettings& settings,
                                              bool with_plain_safeguard) {
  settings.validate();
  c.validate();
  if (lambda < 0.0) fail("continuation: lambda must be >= 0");
  if (init.size() != stages.dim() || c.lower.size() != stages.dim())
    fail("continuation: dimension mismatch");

  ContinuationResult out;
  Eigen::VectorXd x = init;
  double last_val = 0.0;
  for (std::size_t i = 0; i < stages.stages(); ++i) {
    const CoreResult core =
        core_prox_max(shift_fn(stages.stage(i), c.alpha), c.lower, c.upper,
                      lambda, c.costs, x, settings.max_iters, settings.step_tol);
    x = core.x;
    out.iterations += core.iterations;
    last_val = core.penalized;
  }
  out.delta = x;
  out.objective = last_val;

  if (with_plain_safeguard && stages.stages() > 1) {
    const CoreResult plain =
        core_prox_max(shift_fn(stages.final_stage(), c.alpha), c.lower, c.upper,
                      lambda, c.costs, init, settings.max_iters,
                      settings.step_tol);
    out.iterations += plain.iterations;
    if (plain.penalized > out.objective) {
      out.delta = plain.x;
      out.objective = plain.penalized;
    }
  }
  return out;
}

ContinuationResult continuation_maximize(const ShiftStageCache& stages,
                                         const InterventionConstraints& c,
                                         double lambda,
                                         const OptimizerSettings& settings) {
  settings.validate();
  c.validate();
  Rng rng(settings.seed);
  std::vector<Eigen::VectorXd> inits;
  inits.push_back(Eigen::VectorXd::Zero(stages.dim()));
  for (int r = 0; r < settings.random_restarts; ++r)
    inits.push_back(draw_in_box(rng, c.lower, c.upper));

  ContinuationResult best;
  bool have = false;
  int iters = 0;
  for (const Eigen::VectorXd& init : inits) {
    ContinuationResult r =
        continuation_maximize_from(stages, c, lambda, init, settings, true);
    iters += r.iterations;
    if (!have || r.objective > best.objective) {
      best = std::move(r);
      have = true;
    }
  }
  best.iterations = iters;
  return best;
}

ContinuationResult continuation_maximize(const GpPosterior& model,
                                         const GainContext& ctx,
                                         const InterventionConstraints& c,
                                         double lambda,
                                         const OptimizerSettings& settings) {
  settings.validate();
  const ShiftStageCache stages(model, ctx, settings.schedule);
  return continuation_maximize(stages, c, lambda, settings);
}

namespace {

// Tracks (penalty level, support size) observations and reports violations of
// the expected shrink-with-penalty pattern through the settings log.
class SupportObservations {
 public:
  explicit SupportObservations(const OptimizerSettings& s) : settings_(&s) {}

  void record(double lambda, std::size_t size) {
    obs_[lambda] = size;
    if (!settings_->log) return;
    auto it = obs_.find(lambda);
    if (it != obs_.begin()) {
      auto prev = std::prev(it);
      if (prev->second < it->second) note(prev->first, prev->second, lambda, size);
    }
    auto next = std::next(it);
    if (next != obs_.end() && size < next->second)
      note(lambda, size, next->first, next->second);
  }

 private:
  void note(double l1, std::size_t s1, double l2, std::size_t s2) {
    std::ostringstream os;
    os << "support size not monotone in penalty level: " << s1 << " at " << l1
       << " vs " << s2 << " at " << l2;
    settings_->log(os.str());
  }

  const OptimizerSettings* settings_;
  std::map<double, std::size_t> obs_;
};

// Sub-tolerance coordinates are iteration residue, not a recommendation; zero
// them so the returned shift matches the reported support, and collapse a
// proposal with nothing above tolerance to the identity.
void finalize_shift_result(const ShiftStageCache& stages,
                           const InterventionConstraints& c,
                           const OptimizerSettings& settings,
                           Eigen::VectorXd delta, double score,
                           SparseShiftResult& res) {
  bool trimmed = false;
  for (Eigen::Index s = 0; s < delta.size(); ++s) {
    if (delta[s] != 0.0 && std::abs(delta[s]) < settings.support_tol) {
      delta[s] = 0.0;
      trimmed = true;
    }
  }
  res.support = support_of(delta, settings.support_tol);
  if (res.support.empty()) {
    res.transformation = Transformation::identity(delta.size());
    res.score = 0.0;
    res.do_not_intervene = true;
    return;
  }
  if (trimmed) score = stages.final_stage().value(delta, c.alpha);
  res.transformation = Transformation::shift_by(std::move(delta));
  res.score = score;
  res.do_not_intervene = (res.score <= 0.0);
}

}  // namespace

SparseShiftResult sparse_shift(const GpPosterior& model, const GainContext& ctx,
                               const InterventionConstraints& c,
                               const OptimizerSettings& settings) {
  settings.validate();
  c.validate();
  const Eigen::Index d = model.dim();
  if (c.lower.size() != d) fail("sparse_shift: dimension mismatch");
  const int k = c.cardinality_k;

  const ShiftStageCache stages(model, ctx, settings.schedule);
  SparseShiftResult res;
  res.transformation = Transformation::identity(d);

  if (k == 0) {
    res.score = 0.0;
    res.do_not_intervene = true;
    return res;
  }

  // Unpenalized first: if the free maximizer already respects the budget the
  // penalty machinery is unnecessary.
  const ContinuationResult free_best =
      continuation_maximize(stages, c, 0.0, settings);
  res.iterations += free_best.iterations;
  const std::vector<int> supp0 = support_of(free_best.delta, settings.support_tol);
  if (static_cast<int>(supp0.size()) <= k) {
    finalize_shift_result(stages, c, settings, free_best.delta,
                          free_best.objective, res);
    return res;
  }

  SupportObservations obs(settings);
  obs.record(0.0, supp0.size());

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  auto solve_at = [&](double lambda, const Eigen::VectorXd& warm_a,
                      const Eigen::VectorXd& warm_b) {
    ContinuationResult best;
    bool have = false;
    std::vector<const Eigen::VectorXd*> inits{&warm_a};
    if (warm_b != warm_a) inits.push_back(&warm_b);
    if (warm_a != zero && warm_b != zero) inits.push_back(&zero);
    for (const Eigen::VectorXd* init : inits) {
      ContinuationResult r = continuation_maximize_from(stages, c, lambda, *init,
                                                        settings, false);
      res.iterations += r.iterations;
      if (!have || r.objective > best.objective) {
        best = std::move(r);
        have = true;
      }
    }
    return best;
  };

  // Grow the penalty until the maximizer fits the budget.
  double lambda_lo = 0.0;
  double lambda_hi = 1.0;
  Eigen::VectorXd warm_lo = free_best.delta;
  ContinuationResult feasible;
  bool have_feasible = false;
  for (int attempt = 0; attempt < settings.bisect_max; ++attempt) {
    const ContinuationResult r = solve_at(lambda_hi, warm_lo, warm_lo);
    const std::vector<int> s = support_of(r.delta, settings.support_tol);
    obs.record(lambda_hi, s.size());
    if (static_cast<int>(s.size()) <= k) {
      feasible = r;
      have_feasible = true;
      break;
    }
    lambda_lo = lambda_hi;
    warm_lo = r.delta;
    lambda_hi *= 2.0;
  }
  std::vector<int> chosen_support;
  if (have_feasible) {
    Eigen::VectorXd warm_hi = feasible.delta;
    int evals = 0;
    while (lambda_hi / std::max(lambda_lo, 1e-12) > settings.bracket_ratio &&
           evals < settings.bisect_max) {
      const double lambda_mid = lambda_lo > 0.0
                                    ? std::sqrt(lambda_lo * lambda_hi)
                                    : 0.5 * lambda_hi;
      const ContinuationResult r = solve_at(lambda_mid, warm_lo, warm_hi);
      const std::vector<int> s = support_of(r.delta, settings.support_tol);
      obs.record(lambda_mid, s.size());
      if (static_cast<int>(s.size()) <= k) {
        lambda_hi = lambda_mid;
        feasible = r;
        warm_hi = r.delta;
      } else {
        lambda_lo = lambda_mid;
        warm_lo = r.delta;
      }
      ++evals;
    }
    res.lambda = lambda_hi;
    chosen_support = support_of(feasible.delta, settings.support_tol);
  }
  if (chosen_support.empty()) {
    // Either the penalty never became feasible within the attempt budget, or
    // the bracket endpoint killed every coordinate at once (support size
    // jumps discontinuously in the penalty, so the window with exactly k
    // movers can be skipped entirely).  Neither outcome says intervening is
    // worthless; keep the largest coordinates of the unpenalized maximizer
    // and let the restricted re-maximization judge the support on its merits.
    res.lambda = 0.0;
    std::vector<int> order(static_cast<std::size_t>(d));
    for (Eigen::Index s = 0; s < d; ++s) order[static_cast<std::size_t>(s)] = static_cast<int>(s);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(free_best.delta[a]) > std::abs(free_best.delta[b]);
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    chosen_support = std::move(order);
    if (settings.log)
      settings.log("penalty search found no usable support; keeping the "
                   "largest unpenalized coordinates");
  }

  // Re-maximize without penalty, moving only the chosen covariates.
  InterventionConstraints restricted = c;
  std::vector<char> keep(static_cast<std::size_t>(d), 0);
  for (int s : chosen_support) keep[static_cast<std::size_t>(s)] = 1;
  for (Eigen::Index s = 0; s < d; ++s) {
    if (!keep[static_cast<std::size_t>(s)]) {
      restricted.lower[s] = 0.0;
      restricted.upper[s] = 0.0;
      restricted.immutable[static_cast<std::size_t>(s)] = 1;
    }
  }
  const ContinuationResult refined =
      continuation_maximize(stages, restricted, 0.0, settings);
  res.iterations += refined.iterations;
  finalize_shift_result(stages, c, settings, refined.delta, refined.objective,
                        res);
  return res;
}

SparseShiftResult personalized_intervention(const GpPosterior& model,
                                            const Eigen::VectorXd& x,
                                            const InterventionConstraints& c,
                                            const OptimizerSettings& settings) {
  const GainContext ctx = GainContext::individual(x);
  SparseShiftResult res = sparse_shift(model, ctx, c, settings);
  if (res.do_not_intervene) {
    res.transformation = Transformation::identity(model.dim());
    res.support.clear();
  }
  return res;
}

CovfixResult forward_stepwise_covfix(const GpPosterior& model, const Dataset& data,
                                     int k, const Eigen::MatrixXd& ranges,
                                     double alpha,
                                     const OptimizerSettings& settings) {
  settings.validate();
  data.validate();
  const Eigen::Index d = model.dim();
  if (data.dim() != d) fail("covfix: dataset dimension mismatch");
  if (ranges.rows() != d || ranges.cols() != 2)
    fail("covfix: ranges must be d x 2");
  for (Eigen::Index s = 0; s < d; ++s)
    if (!(ranges(s, 0) <= ranges(s, 1)))
      fail("covfix: range low must not exceed high");
  if (k < 0 || k > d) fail("covfix: cardinality must lie in [0, d]");
  if (!(alpha > 0.0 && alpha <= 0.5)) fail("covfix: alpha must lie in (0, 0.5]");

  CovfixResult res;
  res.transformation = Transformation::identity(d);
  if (k == 0) {
    res.do_not_intervene = true;
    return res;
  }

  const detail::PopulationCache cache(model, data);
  Rng rng(settings.seed);
  const Eigen::VectorXd col_means = data.covariates.colwise().mean();

  auto optimize_constants = [&](const std::vector<int>& set,
                                const Eigen::VectorXd& warm) {
    const Eigen::Index q = static_cast<Eigen::Index>(set.size());
    Eigen::VectorXd lo(q), hi(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      lo[i] = ranges(set[static_cast<std::size_t>(i)], 0);
      hi[i] = ranges(set[static_cast<std::size_t>(i)], 1);
    }
    const CovfixGainEval eval(cache, set);
    const SmoothFn fn = [&eval, alpha](const Eigen::VectorXd& z,
                                       Eigen::VectorXd* grad) {
      if (grad) return eval.value_and_grad(z, alpha, *grad);
      return eval.value(z, alpha);
    };
    std::vector<Eigen::VectorXd> inits;
    inits.push_back(warm);
    for (int r = 0; r < settings.random_restarts; ++r)
      inits.push_back(draw_in_box(rng, lo, hi));
    CoreResult best;
    bool have = false;
    const Eigen::VectorXd costs = Eigen::VectorXd::Ones(q);
    for (const Eigen::VectorXd& init : inits) {
      CoreResult r = core_prox_max(fn, lo, hi, 0.0, costs, init,
                                   settings.max_iters, settings.step_tol);
      res.iterations += r.iterations;
      if (!have || r.penalized > best.penalized) {
        best = std::move(r);
        have = true;
      }
    }
    return best;
  };

  std::vector<int> fix_set;
  Eigen::VectorXd constants;
  double best_score = 0.0;  // the empty set scores an exact zero

  for (int step = 0; step < k; ++step) {
    int pick = -1;
    double pick_score = best_score;
    Eigen::VectorXd pick_constants;
    for (int j = 0; j < static_cast<int>(d); ++j) {
      if (std::find(fix_set.begin(), fix_set.end(), j) != fix_set.end()) continue;
      std::vector<int> trial = fix_set;
      trial.push_back(j);
      Eigen::VectorXd warm(constants.size() + 1);
      warm.head(constants.size()) = constants;
      warm[constants.size()] =
          std::min(std::max(col_means[j], ranges(j, 0)), ranges(j, 1));
      const CoreResult r = optimize_constants(trial, warm);
      if (r.penalized > pick_score) {
        pick_score = r.penalized;
        pick = j;
        pick_constants = r.x;
      }
    }
    if (pick < 0) break;
    fix_set.push_back(pick);
    constants = pick_constants;
    best_score = pick_score;
  }

  if (!fix_set.empty()) {
    // Joint refinement of all chosen constants.
    const CoreResult joint = optimize_constants(fix_set, constants);
    if (joint.penalized > best_score) {
      best_score = joint.penalized;
      constants = joint.x;
    }
    res.transformation = Transformation::fix(fix_set, constants, d);
  }
  res.fix_set = fix_set;
  res.score = best_score;
  res.do_not_intervene = (res.score <= 0.0);
  return res;
}

}  // namespace intervene
