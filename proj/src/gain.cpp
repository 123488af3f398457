#include "intervene/gain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "intervene/numerics.hpp"
#include "intervene/simd/kernels.hpp"

namespace intervene {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr double kVarianceRoundoff = -1e-8;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

GpHyperparams subset_hyper(const GpHyperparams& h, const std::vector<int>& dims) {
  GpHyperparams out;
  out.lengthscales.resize(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    out.lengthscales[static_cast<Eigen::Index>(i)] = h.lengthscales[dims[i]];
  out.signal_variance = h.signal_variance;
  out.noise_variance = h.noise_variance;
  return out;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& dims) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = X.col(dims[i]);
  return out;
}

// Chain rule through mean + z * sqrt(variance); the deviation term is dropped
// below the same floor gaussian_quantile uses so value and gradient agree.
Eigen::VectorXd assemble_grad(const Eigen::VectorXd& dmean,
                              const Eigen::VectorXd& dvar, double variance,
                              double alpha) {
  if (variance < kVarianceFloor) return dmean;
  return dmean + (normal_quantile(alpha) / (2.0 * std::sqrt(variance))) * dvar;
}

}  // namespace

InterventionConstraints InterventionConstraints::box(Eigen::Index d, double half_width,
                                                     int k, double alpha) {
  InterventionConstraints c;
  c.lower = Eigen::VectorXd::Constant(d, -half_width);
  c.upper = Eigen::VectorXd::Constant(d, half_width);
  c.cardinality_k = k;
  c.costs = Eigen::VectorXd::Ones(d);
  c.immutable.assign(static_cast<std::size_t>(d), 0);
  c.alpha = alpha;
  c.validate();
  return c;
}

void InterventionConstraints::validate() const {
  const Eigen::Index d = lower.size();
  if (upper.size() != d || costs.size() != d ||
      static_cast<Eigen::Index>(immutable.size()) != d)
    fail("constraints: lower/upper/costs/immutable lengths disagree");
  if (!lower.allFinite() || !upper.allFinite() || !costs.allFinite())
    fail("constraints: non-finite entry");
  for (Eigen::Index s = 0; s < d; ++s) {
    if (!(lower[s] <= 0.0 && 0.0 <= upper[s]))
      fail("constraints: bounds for covariate " + std::to_string(s) +
           " must straddle 0");
    if (!(costs[s] > 0.0))
      fail("constraints: costs must be positive");
    if (immutable[static_cast<std::size_t>(s)] &&
        (lower[s] != 0.0 || upper[s] != 0.0))
      fail("constraints: immutable covariate " + std::to_string(s) +
           " must have zero bounds");
  }
  if (cardinality_k < 0 || cardinality_k > d)
    fail("constraints: cardinality_k must lie in [0, d]");
  if (!(alpha > 0.0 && alpha <= 0.5))
    fail("constraints: alpha must lie in (0, 0.5]");
}

Transformation Transformation::identity(Eigen::Index d) {
  return shift_by(Eigen::VectorXd::Zero(d));
}

Transformation Transformation::shift_by(Eigen::VectorXd delta) {
  Transformation t;
  t.kind = Kind::Shift;
  t.dim_ = delta.size();
  t.shift = std::move(delta);
  t.validate();
  return t;
}

Transformation Transformation::fix(std::vector<int> indices, Eigen::VectorXd values,
                                   Eigen::Index d) {
  Transformation t;
  t.kind = Kind::CovariateFixing;
  t.dim_ = d;
  t.fix_set = std::move(indices);
  t.fix_values = std::move(values);
  t.validate();
  return t;
}

bool Transformation::is_identity() const {
  if (kind == Kind::Shift) return (shift.array() == 0.0).all();
  return fix_set.empty();
}

void Transformation::validate() const {
  if (kind == Kind::Shift) {
    if (shift.size() != dim_ || !shift.allFinite())
      fail("transformation: shift must be finite with length d");
    return;
  }
  if (fix_set.empty()) fail("transformation: covariate fixing needs a non-empty set");
  if (static_cast<Eigen::Index>(fix_set.size()) != fix_values.size())
    fail("transformation: fix set and values lengths disagree");
  if (!fix_values.allFinite()) fail("transformation: fix values must be finite");
  std::vector<int> sorted = fix_set;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 0 || sorted[i] >= dim_)
      fail("transformation: fix index out of range");
    if (i > 0 && sorted[i] == sorted[i - 1])
      fail("transformation: duplicate fix index");
  }
}

Eigen::VectorXd Transformation::apply(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) fail("transformation: point dimension mismatch");
  if (kind == Kind::Shift) return x + shift;
  Eigen::VectorXd out = x;
  for (std::size_t i = 0; i < fix_set.size(); ++i)
    out[fix_set[i]] = fix_values[static_cast<Eigen::Index>(i)];
  return out;
}

Eigen::MatrixXd Transformation::apply_rows(const Eigen::MatrixXd& X) const {
  if (X.cols() != dim_) fail("transformation: row dimension mismatch");
  Eigen::MatrixXd out = X;
  if (kind == Kind::Shift) {
    out.rowwise() += shift.transpose();
  } else {
    for (std::size_t i = 0; i < fix_set.size(); ++i)
      out.col(fix_set[i]).setConstant(fix_values[static_cast<Eigen::Index>(i)]);
  }
  return out;
}

nlohmann::json Transformation::to_json() const {
  nlohmann::json j;
  if (kind == Kind::Shift) {
    j["kind"] = "shift";
    j["shift"] = std::vector<double>(shift.begin(), shift.end());
  } else {
    j["kind"] = "fix";
    j["indices"] = fix_set;
    j["values"] = std::vector<double>(fix_values.begin(), fix_values.end());
  }
  return j;
}

Transformation Transformation::from_json(const nlohmann::json& j, Eigen::Index d) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "shift") {
    const auto v = j.at("shift").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != d)
      fail("transformation json: shift length != d");
    return shift_by(Eigen::Map<const Eigen::VectorXd>(v.data(), d));
  }
  if (kind == "fix") {
    auto idx = j.at("indices").get<std::vector<int>>();
    const auto v = j.at("values").get<std::vector<double>>();
    return fix(std::move(idx),
               Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                 static_cast<Eigen::Index>(v.size())),
               d);
  }
  fail("transformation json: kind must be 'shift' or 'fix'");
}

GainContext GainContext::individual(Eigen::VectorXd x) {
  GainContext c;
  c.x_ = std::move(x);
  return c;
}

GainContext GainContext::population(const Dataset& data) {
  data.validate();
  GainContext c;
  c.data_ = &data;
  return c;
}

double gaussian_quantile(double mean, double variance, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    fail("gaussian_quantile: alpha must lie in (0, 1)");
  if (!std::isfinite(mean) || !std::isfinite(variance))
    fail("gaussian_quantile: non-finite inputs");
  if (variance < kVarianceRoundoff)
    fail("gaussian_quantile: variance " + std::to_string(variance) + " is negative");
  const double v = std::max(variance, 0.0);
  if (v < kVarianceFloor) return mean;
  return mean + normal_quantile(alpha) * std::sqrt(v);
}

GainDistribution individual_gain(const GpPosterior& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& t) {
  if (x.size() != model.dim() || t.size() != model.dim())
    fail("individual_gain: point dimension mismatch");
  if ((x.array() == t.array()).all()) return {0.0, 0.0};

  Eigen::MatrixXd P(2, model.dim());
  P.row(0) = x.transpose();
  P.row(1) = t.transpose();
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  model.mean_cov(P, mean, cov);
  GainDistribution g;
  g.mean = mean[1] - mean[0];
  g.variance = std::max(cov(1, 1) + cov(0, 0) - 2.0 * cov(1, 0), 0.0);
  return g;
}

GainDistribution population_gain(const GpPosterior& model, const Dataset& data,
                                 const Transformation& t) {
  data.validate();
  t.validate();
  if (data.dim() != model.dim() || t.dim() != model.dim())
    fail("population_gain: dimension mismatch");
  const Eigen::Index n = data.rows();
  if (n == 0) fail("population_gain: empty population");
  if (t.is_identity()) return {0.0, 0.0};

  // One covariance over original and transformed rows together captures every
  // cross term of the averaged difference.
  Eigen::MatrixXd P(2 * n, model.dim());
  P.topRows(n) = data.covariates;
  P.bottomRows(n) = t.apply_rows(data.covariates);
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  model.mean_cov(P, mean, cov);

  const double inv_n = 1.0 / static_cast<double>(n);
  GainDistribution g;
  g.mean = (mean.tail(n).sum() - mean.head(n).sum()) * inv_n;
  const double s_tt = cov.bottomRightCorner(n, n).sum();
  const double s_xx = cov.topLeftCorner(n, n).sum();
  const double s_tx = cov.bottomLeftCorner(n, n).sum();
  g.variance = std::max(s_tt + s_xx - 2.0 * s_tx, 0.0) * inv_n * inv_n;
  return g;
}

GainDistribution gain(const GpPosterior& model, const GainContext& ctx,
                      const Transformation& t) {
  if (ctx.is_individual())
    return individual_gain(model, ctx.point(), t.apply(ctx.point()));
  return population_gain(model, ctx.data(), t);
}

double objective(const GpPosterior& model, const GainContext& ctx,
                 const Transformation& t, const InterventionConstraints& c,
                 double lambda) {
  c.validate();
  t.validate();
  if (lambda < 0.0) fail("objective: lambda must be >= 0");
  if (lambda > 0.0 && t.kind != Transformation::Kind::Shift)
    fail("objective: sparsity penalty applies to shifts only");
  const GainDistribution g = gain(model, ctx, t);
  double q = gaussian_quantile(g.mean, g.variance, c.alpha);
  if (lambda > 0.0)
    q -= lambda * c.costs.cwiseProduct(t.shift.cwiseAbs()).sum();
  return q;
}

Eigen::VectorXd objective_gradient(const GpPosterior& model, const GainContext& ctx,
                                   const Eigen::VectorXd& shift,
                                   const InterventionConstraints& c) {
  c.validate();
  ShiftGainEval eval(model, ctx);
  Eigen::VectorXd grad;
  eval.value_and_grad(shift, c.alpha, grad);
  return grad;
}

std::vector<RankedCandidate> rank_candidates(const GpPosterior& model,
                                             const Dataset& data,
                                             const std::vector<Transformation>& candidates,
                                             double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5))
    fail("rank_candidates: alpha must lie in (0, 0.5]");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const GainDistribution g = population_gain(model, data, candidates[i]);
    RankedCandidate r;
    r.transformation = candidates[i];
    r.score = gaussian_quantile(g.mean, g.variance, alpha);
    r.do_not_intervene = (r.score <= 0.0);
    r.original_index = static_cast<int>(i);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     return a.score > b.score;
                   });
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

PopulationCache::PopulationCache(const GpPosterior& m, const Dataset& data)
    : model(&m) {
  data.validate();
  if (data.dim() != m.dim()) fail("population cache: dimension mismatch");
  if (data.rows() == 0) fail("population cache: empty population");
  Xp = data.covariates;
  const Eigen::Index n_tr = m.train_count();
  shares_train = (n_tr == Xp.rows()) &&
                 (n_tr == 0 || m.train_inputs().cwiseEqual(Xp).all());

  const Eigen::MatrixXd Gp = kernel_gram(Xp, m.hyperparams());
  sum_gram_pop = Gp.sum();
  if (n_tr == 0) {
    S_XX = sum_gram_pop;
    mu_X_sum = 0.0;
    return;
  }
  const Eigen::MatrixXd cross =
      shares_train ? Gp : kernel_cross(m.train_inputs(), Xp, m.hyperparams());
  u_X = cross.rowwise().sum();
  w_X = m.solve(u_X);
  S_XX = sum_gram_pop - u_X.dot(w_X);
  mu_X_sum = m.weight_vector().dot(u_X);
}

}  // namespace detail

ShiftGainEval::ShiftGainEval(const GpPosterior& model, const GainContext& ctx)
    : model_(&model), dim_(model.dim()) {
  if (ctx.is_individual()) {
    if (ctx.point().size() != dim_) fail("shift eval: point dimension mismatch");
    x_ = ctx.point();
    if (model.train_count() > 0) {
      Eigen::MatrixXd row = x_->transpose();
      k_x_ = kernel_cross(model.train_inputs(), row, model.hyperparams()).col(0);
      w_x_ = model.solve(k_x_);
      mu_x_ = k_x_.dot(model.weight_vector());
      var_x_ = std::max(model.hyperparams().signal_variance - k_x_.dot(w_x_), 0.0);
    } else {
      mu_x_ = 0.0;
      var_x_ = model.hyperparams().signal_variance;
    }
  } else {
    pop_.emplace(model, ctx.data());
  }
}

GainDistribution ShiftGainEval::gain(const Eigen::VectorXd& delta) const {
  Eigen::VectorXd grad;
  GainDistribution g;
  eval_impl(delta, 0.5, false, g, grad);
  return g;
}

double ShiftGainEval::value(const Eigen::VectorXd& delta, double alpha) const {
  Eigen::VectorXd grad;
  GainDistribution g;
  eval_impl(delta, alpha, false, g, grad);
  return gaussian_quantile(g.mean, g.variance, alpha);
}

double ShiftGainEval::value_and_grad(const Eigen::VectorXd& delta, double alpha,
                                     Eigen::VectorXd& grad) const {
  GainDistribution g;
  eval_impl(delta, alpha, true, g, grad);
  return gaussian_quantile(g.mean, g.variance, alpha);
}

void ShiftGainEval::eval_impl(const Eigen::VectorXd& delta, double alpha,
                              bool want_grad, GainDistribution& g,
                              Eigen::VectorXd& grad) const {
  if (delta.size() != dim_) fail("shift eval: delta dimension mismatch");
  if (x_.has_value())
    individual_impl(delta, alpha, want_grad, g, grad);
  else
    population_impl(delta, alpha, want_grad, g, grad);
}

void ShiftGainEval::individual_impl(const Eigen::VectorXd& delta, double alpha,
                                    bool want_grad, GainDistribution& g,
                                    Eigen::VectorXd& grad) const {
  const GpHyperparams& h = model_->hyperparams();
  const Eigen::VectorXd inv_l2 = h.lengthscales.array().square().inverse();
  const Eigen::VectorXd t = *x_ + delta;
  const double k_tx = ard_kernel(t, *x_, h);

  if (model_->train_count() == 0) {
    g.mean = 0.0;
    g.variance = std::max(2.0 * h.signal_variance - 2.0 * k_tx, 0.0);
    if (want_grad) {
      const Eigen::VectorXd dk = k_tx * inv_l2.cwiseProduct(*x_ - t);
      const Eigen::VectorXd dvar = -2.0 * dk;
      grad = assemble_grad(Eigen::VectorXd::Zero(dim_), dvar, g.variance, alpha);
    }
    return;
  }

  const Eigen::MatrixXd& X = model_->train_inputs();
  const Eigen::VectorXd& alpha_w = model_->weight_vector();
  Eigen::MatrixXd row = t.transpose();
  const Eigen::VectorXd k_t = kernel_cross(X, row, h).col(0);
  const Eigen::VectorXd w_t = model_->solve(k_t);
  const double mu_t = k_t.dot(alpha_w);
  const double var_t = h.signal_variance - k_t.dot(w_t);
  const double cov = k_tx - k_t.dot(w_x_);
  g.mean = mu_t - mu_x_;
  g.variance = std::max(var_t + var_x_ - 2.0 * cov, 0.0);
  if (!want_grad) return;

  // d k(train_m, t) / d t_s = k * inv_l2_s * (X_ms - t_s); contract against a
  // weight vector w as inv_l2 .* (X^T (w .* k_t) - t * dot(w, k_t)).
  auto contract = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd wk = w.cwiseProduct(k_t);
    return (X.transpose() * wk - t * wk.sum()).cwiseProduct(inv_l2).eval();
  };
  const Eigen::VectorXd dmu = contract(alpha_w);
  const Eigen::VectorXd dvar_t = -2.0 * contract(w_t);
  const Eigen::VectorXd dk_tx = k_tx * inv_l2.cwiseProduct(*x_ - t);
  const Eigen::VectorXd dcov = dk_tx - contract(w_x_);
  const Eigen::VectorXd dvar = dvar_t - 2.0 * dcov;
  grad = assemble_grad(dmu, dvar, g.variance, alpha);
}

void ShiftGainEval::population_impl(const Eigen::VectorXd& delta, double alpha,
                                    bool want_grad, GainDistribution& g,
                                    Eigen::VectorXd& grad) const {
  const detail::PopulationCache& c = *pop_;
  const GpHyperparams& h = model_->hyperparams();
  const Eigen::VectorXd inv_l2 = h.lengthscales.array().square().inverse();
  const Eigen::Index n_pop = c.Xp.rows();
  const double inv_n = 1.0 / static_cast<double>(n_pop);
  Eigen::MatrixXd Tp = c.Xp;
  Tp.rowwise() += delta.transpose();

  if (model_->train_count() == 0) {
    const Eigen::MatrixXd K2 = kernel_cross(c.Xp, Tp, h);
    const double c_tx = K2.sum();
    g.mean = 0.0;
    g.variance =
        std::max(2.0 * c.sum_gram_pop - 2.0 * c_tx, 0.0) * inv_n * inv_n;
    if (want_grad) {
      const Eigen::VectorXd u2 = K2.rowwise().sum();
      const Eigen::VectorXd col2 = K2.colwise().sum();
      Eigen::VectorXd dvar(dim_);
      for (Eigen::Index s = 0; s < dim_; ++s) {
        const double dctx =
            inv_l2[s] * (c.Xp.col(s).dot(u2) - Tp.col(s).dot(col2));
        dvar[s] = -2.0 * dctx * inv_n * inv_n;
      }
      grad = assemble_grad(Eigen::VectorXd::Zero(dim_), dvar, g.variance, alpha);
    }
    return;
  }

  const Eigen::MatrixXd& X = model_->train_inputs();
  const Eigen::VectorXd& alpha_w = model_->weight_vector();
  const Eigen::MatrixXd Kp = kernel_cross(X, Tp, h);
  const Eigen::VectorXd u_t = Kp.rowwise().sum();
  const Eigen::VectorXd w_t = model_->solve(u_t);
  const double mu_t_sum = alpha_w.dot(u_t);

  double c_tx;
  Eigen::MatrixXd K2;  // population vs transformed, only when tables differ
  if (c.shares_train) {
    c_tx = Kp.sum();
  } else {
    K2 = kernel_cross(c.Xp, Tp, h);
    c_tx = K2.sum();
  }
  const double s_tt = c.sum_gram_pop - u_t.dot(w_t);
  const double s_tx = c_tx - u_t.dot(c.w_X);
  g.mean = (mu_t_sum - c.mu_X_sum) * inv_n;
  g.variance = std::max(s_tt + c.S_XX - 2.0 * s_tx, 0.0) * inv_n * inv_n;
  if (!want_grad) return;

  const Eigen::VectorXd arow = Kp.transpose() * alpha_w;
  const Eigen::MatrixXd KT = Kp * Tp;  // for d u_t
  Eigen::VectorXd dmean(dim_), dvar(dim_);
  Eigen::VectorXd u2, col2;
  if (!c.shares_train) {
    u2 = K2.rowwise().sum();
    col2 = K2.colwise().sum();
  } else {
    col2 = Kp.colwise().sum();
  }
  for (Eigen::Index s = 0; s < dim_; ++s) {
    const Eigen::VectorXd du_t =
        inv_l2[s] * (X.col(s).cwiseProduct(u_t) - KT.col(s));
    const double dmu_t =
        inv_l2[s] * (alpha_w.cwiseProduct(X.col(s)).dot(u_t) - arow.dot(Tp.col(s)));
    double dctx;
    if (c.shares_train)
      dctx = inv_l2[s] * (X.col(s).dot(u_t) - col2.dot(Tp.col(s)));
    else
      dctx = inv_l2[s] * (c.Xp.col(s).dot(u2) - col2.dot(Tp.col(s)));
    const double ds_tt = -2.0 * w_t.dot(du_t);
    const double ds_tx = dctx - c.w_X.dot(du_t);
    dmean[s] = dmu_t * inv_n;
    dvar[s] = (ds_tt - 2.0 * ds_tx) * inv_n * inv_n;
  }
  grad = assemble_grad(dmean, dvar, g.variance, alpha);
}

CovfixGainEval::CovfixGainEval(const detail::PopulationCache& cache,
                               std::vector<int> fix_set)
    : cache_(&cache), fix_set_(std::move(fix_set)) {
  const GpPosterior& m = *cache.model;
  const Eigen::Index d = m.dim();
  if (fix_set_.empty()) fail("covfix eval: empty fix set");
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  for (int s : fix_set_) {
    if (s < 0 || s >= d) fail("covfix eval: fix index out of range");
    if (seen[static_cast<std::size_t>(s)]++) fail("covfix eval: duplicate fix index");
  }
  std::vector<int> unfixed;
  for (Eigen::Index s = 0; s < d; ++s)
    if (!seen[static_cast<std::size_t>(s)]) unfixed.push_back(static_cast<int>(s));

  const GpHyperparams& h = m.hyperparams();
  const GpHyperparams h_sub = subset_hyper(h, unfixed);
  const Eigen::MatrixXd pop_unfixed = select_columns(cache.Xp, unfixed);

  inv_l2_fixed_.resize(static_cast<Eigen::Index>(fix_set_.size()));
  for (std::size_t i = 0; i < fix_set_.size(); ++i)
    inv_l2_fixed_[static_cast<Eigen::Index>(i)] =
        1.0 / (h.lengthscales[fix_set_[i]] * h.lengthscales[fix_set_[i]]);
  pop_fixed_ = select_columns(cache.Xp, fix_set_);

  if (m.train_count() > 0) {
    const Eigen::MatrixXd train_unfixed = select_columns(m.train_inputs(), unfixed);
    const Eigen::MatrixXd E = kernel_cross(train_unfixed, pop_unfixed, h_sub);
    row_sum_unfixed_ = E.rowwise().sum();
    train_fixed_ = select_columns(m.train_inputs(), fix_set_);
    if (cache.shares_train) {
      col_sum_unfixed_ = E.colwise().sum();
      sum_unfixed_ = E.sum();
      return;
    }
  }
  const Eigen::MatrixXd F = kernel_gram(pop_unfixed, h_sub);
  col_sum_unfixed_ = F.colwise().sum();
  sum_unfixed_ = F.sum();
}

// exp(-0.5 sum_r inv_l2_r (coords_(m,r) - z_r)^2) per row.
Eigen::VectorXd CovfixGainEval::fixed_part(const Eigen::MatrixXd& coords,
                                           const Eigen::VectorXd& z) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(coords.rows());
  const auto& ops = simd::active();
  for (Eigen::Index r = 0; r < z.size(); ++r)
    ops.ard_accumulate(acc.data(), coords.col(r).data(), z[r], inv_l2_fixed_[r],
                       static_cast<std::size_t>(coords.rows()));
  return (-0.5 * acc.array()).exp();
}

GainDistribution CovfixGainEval::gain(const Eigen::VectorXd& z) const {
  Eigen::VectorXd grad;
  GainDistribution g;
  eval_impl(z, 0.5, false, g, grad);
  return g;
}

double CovfixGainEval::value(const Eigen::VectorXd& z, double alpha) const {
  Eigen::VectorXd grad;
  GainDistribution g;
  eval_impl(z, alpha, false, g, grad);
  return gaussian_quantile(g.mean, g.variance, alpha);
}

double CovfixGainEval::value_and_grad(const Eigen::VectorXd& z, double alpha,
                                      Eigen::VectorXd& grad) const {
  GainDistribution g;
  eval_impl(z, alpha, true, g, grad);
  return gaussian_quantile(g.mean, g.variance, alpha);
}

void CovfixGainEval::eval_impl(const Eigen::VectorXd& z, double alpha,
                               bool want_grad, GainDistribution& g,
                               Eigen::VectorXd& grad) const {
  const detail::PopulationCache& c = *cache_;
  const Eigen::Index q = static_cast<Eigen::Index>(fix_set_.size());
  if (z.size() != q) fail("covfix eval: constant vector length mismatch");
  const Eigen::Index n_pop = c.Xp.rows();
  const double inv_n = 1.0 / static_cast<double>(n_pop);
  const GpPosterior& m = *c.model;

  const Eigen::VectorXd cpop = fixed_part(pop_fixed_, z);
  const double c_tx = col_sum_unfixed_.dot(cpop);
  const double c_tt = sum_unfixed_;

  if (m.train_count() == 0) {
    g.mean = 0.0;
    g.variance = std::max(c_tt + c.S_XX - 2.0 * c_tx, 0.0) * inv_n * inv_n;
    if (want_grad) {
      grad.resize(q);
      for (Eigen::Index r = 0; r < q; ++r) {
        const Eigen::VectorXd dc = cpop.cwiseProduct(
            inv_l2_fixed_[r] * (pop_fixed_.col(r).array() - z[r]).matrix());
        grad[r] = -2.0 * col_sum_unfixed_.dot(dc) * inv_n * inv_n;
      }
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(q);
      grad = assemble_grad(zero, grad, g.variance, alpha);
    }
    return;
  }

  const Eigen::VectorXd b = fixed_part(train_fixed_, z);
  const Eigen::VectorXd u_t = row_sum_unfixed_.cwiseProduct(b);
  const Eigen::VectorXd w_t = m.solve(u_t);
  const double mu_t_sum = m.weight_vector().dot(u_t);
  const double s_tt = c_tt - u_t.dot(w_t);
  const double s_tx = c_tx - u_t.dot(c.w_X);
  g.mean = (mu_t_sum - c.mu_X_sum) * inv_n;
  g.variance = std::max(s_tt + c.S_XX - 2.0 * s_tx, 0.0) * inv_n * inv_n;
  if (!want_grad) return;

  Eigen::VectorXd dmean(q), dvar(q);
  for (Eigen::Index r = 0; r < q; ++r) {
    const Eigen::VectorXd db = b.cwiseProduct(
        inv_l2_fixed_[r] * (train_fixed_.col(r).array() - z[r]).matrix());
    const Eigen::VectorXd du_t = row_sum_unfixed_.cwiseProduct(db);
    const Eigen::VectorXd dc = cpop.cwiseProduct(
        inv_l2_fixed_[r] * (pop_fixed_.col(r).array() - z[r]).matrix());
    const double dctx = col_sum_unfixed_.dot(dc);
    const double ds_tt = -2.0 * w_t.dot(du_t);
    const double ds_tx = dctx - c.w_X.dot(du_t);
    dmean[r] = m.weight_vector().dot(du_t) * inv_n;
    dvar[r] = (ds_tt - 2.0 * ds_tx) * inv_n * inv_n;
  }
  grad = assemble_grad(dmean, dvar, g.variance, alpha);
}

}  // namespace intervene
