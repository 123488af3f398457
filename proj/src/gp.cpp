#include "intervene/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "intervene/numerics.hpp"
#include "intervene/rng.hpp"
#include "intervene/simd/kernels.hpp"

namespace intervene {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_dims(const Eigen::MatrixXd& X, const GpHyperparams& h) {
  if (h.lengthscales.size() != X.cols())
    throw std::invalid_argument("gp: " + std::to_string(h.lengthscales.size()) +
                                " lengthscales for " + std::to_string(X.cols()) +
                                " covariates");
}

Eigen::VectorXd inverse_sq_lengthscales(const GpHyperparams& h) {
  return h.lengthscales.array().square().inverse();
}

// Scaled squared distances between the rows of X and the rows of P, built one
// covariate at a time so the inner loop is a contiguous SIMD pass.
Eigen::MatrixXd scaled_sqdist(const Eigen::MatrixXd& X, const Eigen::MatrixXd& P,
                              const Eigen::VectorXd& inv_l2) {
  const Eigen::Index n = X.rows();
  const Eigen::Index m = P.rows();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, m);
  const auto& ops = simd::active();
  for (Eigen::Index s = 0; s < X.cols(); ++s) {
    const double* col = X.col(s).data();
    const double w = inv_l2[s];
    for (Eigen::Index j = 0; j < m; ++j)
      ops.ard_accumulate(acc.col(j).data(), col, P(j, s), w,
                         static_cast<std::size_t>(n));
  }
  return acc;
}

struct Factorization {
  Eigen::MatrixXd K;  // noise-free Gram
  Eigen::MatrixXd L;
  Eigen::VectorXd alpha;
  double jitter = 0.0;
  double lml = 0.0;
};

// Cholesky of K + noise I with an escalating relative jitter ladder.
bool factor_gram(const Eigen::MatrixXd& K, double noise_variance,
                 const Eigen::VectorXd& y, Factorization& out) {
  const Eigen::Index n = K.rows();
  const double mean_diag = K.diagonal().mean();
  double jitter = 1e-10 * mean_diag;  // baseline stabilizer, always applied
  while (jitter <= 1e-4 * mean_diag * 1.0000001) {
    Eigen::MatrixXd M = K;
    M.diagonal().array() += noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) {
      out.L = llt.matrixL();
      out.alpha = llt.solve(y);
      out.jitter = jitter;
      const double quad = y.dot(out.alpha);
      const double logdet = 2.0 * out.L.diagonal().array().log().sum();
      out.lml = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
      return true;
    }
    jitter *= 10.0;
  }
  return false;
}

Factorization factor_or_throw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const GpHyperparams& h) {
  Factorization f;
  f.K = kernel_gram(X, h);
  if (!factor_gram(f.K, h.noise_variance, y, f))
    throw NumericalError("gp: Gram matrix not positive definite after jitter escalation");
  return f;
}

}  // namespace

void GpHyperparams::validate() const {
  if (lengthscales.size() == 0 || !(lengthscales.array() > 0.0).all() ||
      !lengthscales.allFinite())
    throw std::invalid_argument("gp: lengthscales must be positive and finite");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw std::invalid_argument("gp: signal_variance must be positive and finite");
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw std::invalid_argument("gp: noise_variance must be positive and finite");
}

double ard_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  const GpHyperparams& h) {
  if (a.size() != b.size() || a.size() != h.lengthscales.size())
    throw std::invalid_argument("ard_kernel: dimension mismatch");
  const Eigen::VectorXd inv_l2 = inverse_sq_lengthscales(h);
  const double sq = simd::active().weighted_sqdist(
      a.data(), b.data(), inv_l2.data(), static_cast<std::size_t>(a.size()));
  return h.signal_variance * std::exp(-0.5 * sq);
}

Eigen::MatrixXd kernel_gram(const Eigen::MatrixXd& X, const GpHyperparams& h) {
  check_dims(X, h);
  Eigen::MatrixXd acc = scaled_sqdist(X, X, inverse_sq_lengthscales(h));
  return h.signal_variance * (-0.5 * acc.array()).exp().matrix();
}

Eigen::MatrixXd kernel_cross(const Eigen::MatrixXd& X, const Eigen::MatrixXd& P,
                             const GpHyperparams& h) {
  check_dims(X, h);
  if (P.cols() != X.cols())
    throw std::invalid_argument("kernel_cross: point dimension mismatch");
  Eigen::MatrixXd acc = scaled_sqdist(X, P, inverse_sq_lengthscales(h));
  return h.signal_variance * (-0.5 * acc.array()).exp().matrix();
}

double log_marginal_likelihood(const Dataset& data, const GpHyperparams& h) {
  h.validate();
  return factor_or_throw(data.covariates, data.outcomes, h).lml;
}

namespace {

// lml and its gradient in log-parameter space, sharing one factorization.
struct LmlEvaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;  // d + 2 (log lengthscales, log signal, log noise)
  bool ok = false;
};

LmlEvaluation evaluate_lml(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const GpHyperparams& h, bool want_grad) {
  LmlEvaluation out;
  Factorization f;
  f.K = kernel_gram(X, h);
  if (!factor_gram(f.K, h.noise_variance, y, f)) return out;
  out.value = f.lml;
  out.ok = true;
  if (!want_grad) return out;

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
  f.L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
  f.L.transpose().triangularView<Eigen::Upper>().solveInPlace(Kinv);

  // d lml / d theta = 0.5 tr((alpha alpha^T - M^-1) dM/dtheta)
  const double trace_inv = Kinv.trace();
  Eigen::MatrixXd P = (f.alpha * f.alpha.transpose() - Kinv).cwiseProduct(f.K);
  const Eigen::VectorXd r = P.rowwise().sum();
  const Eigen::MatrixXd PX = P.selfadjointView<Eigen::Lower>() * X;

  out.grad.resize(d + 2);
  const Eigen::VectorXd inv_l2 = inverse_sq_lengthscales(h);
  for (Eigen::Index s = 0; s < d; ++s) {
    const auto xs = X.col(s);
    const double term = (xs.array().square() * r.array()).sum() - xs.dot(PX.col(s));
    out.grad[s] = inv_l2[s] * term;
  }
  out.grad[d] = 0.5 * r.sum();
  out.grad[d + 1] =
      0.5 * h.noise_variance * (f.alpha.squaredNorm() - trace_inv);
  return out;
}

GpHyperparams hyper_from_log(const Eigen::VectorXd& theta, Eigen::Index d, bool ard) {
  GpHyperparams h;
  if (ard) {
    h.lengthscales = theta.head(d).array().exp();
    h.signal_variance = std::exp(theta[d]);
    h.noise_variance = std::exp(theta[d + 1]);
  } else {
    h.lengthscales = Eigen::VectorXd::Constant(d, std::exp(theta[0]));
    h.signal_variance = std::exp(theta[1]);
    h.noise_variance = std::exp(theta[2]);
  }
  return h;
}

// Collapse the full (d+2) gradient to the tied parameterization.
Eigen::VectorXd collapse_grad(const Eigen::VectorXd& g, Eigen::Index d, bool ard) {
  if (ard) return g;
  Eigen::VectorXd out(3);
  out[0] = g.head(d).sum();
  out[1] = g[d];
  out[2] = g[d + 1];
  return out;
}

struct AscentResult {
  Eigen::VectorXd theta;
  double value = -std::numeric_limits<double>::infinity();
  double initial_value = -std::numeric_limits<double>::infinity();
  bool ok = false;
};

// Monotone gradient ascent with Barzilai-Borwein step proposals and
// backtracking acceptance, in box-clamped log-parameter space.
AscentResult ascend_lml(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        Eigen::VectorXd theta, bool ard, const FitConfig& cfg) {
  const Eigen::Index d = X.cols();
  const Eigen::Index p = theta.size();
  Eigen::VectorXd lo(p), hi(p);
  const Eigen::Index n_len = ard ? d : 1;
  for (Eigen::Index i = 0; i < n_len; ++i) { lo[i] = std::log(1e-3); hi[i] = std::log(1e3); }
  lo[n_len] = std::log(1e-8); hi[n_len] = std::log(1e3);       // signal variance
  lo[n_len + 1] = std::log(1e-8); hi[n_len + 1] = std::log(1e3);  // noise variance
  auto clamp = [&](Eigen::VectorXd v) {
    return v.cwiseMax(lo).cwiseMin(hi).eval();
  };

  AscentResult res;
  theta = clamp(std::move(theta));
  auto full_eval = [&](const Eigen::VectorXd& t, bool want_grad) {
    LmlEvaluation e = evaluate_lml(X, y, hyper_from_log(t, d, ard), want_grad);
    if (e.ok && want_grad) e.grad = collapse_grad(e.grad, d, ard);
    return e;
  };

  LmlEvaluation cur = full_eval(theta, true);
  if (!cur.ok) return res;
  res.initial_value = cur.value;

  double eta = 0.1 / std::max(1.0, cur.grad.lpNorm<Eigen::Infinity>());
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (cur.grad.lpNorm<Eigen::Infinity>() < cfg.grad_tol) break;
    Eigen::VectorXd trial;
    LmlEvaluation next;
    bool accepted = false;
    double step = eta;
    for (int bt = 0; bt < 40; ++bt) {
      trial = clamp(theta + step * cur.grad);
      if ((trial - theta).lpNorm<Eigen::Infinity>() < 1e-14) break;
      next = full_eval(trial, false);
      if (next.ok && next.value > cur.value) { accepted = true; break; }
      step *= 0.5;
    }
    if (!accepted) break;

    LmlEvaluation next_full = full_eval(trial, true);
    if (!next_full.ok) break;
    const Eigen::VectorXd s = trial - theta;
    const Eigen::VectorXd dg = next_full.grad - cur.grad;
    const double sy = std::fabs(s.dot(dg));
    eta = (sy > 1e-16) ? std::clamp(s.squaredNorm() / sy, 1e-8, 1e3) : step;
    theta = trial;
    cur = next_full;
  }
  res.theta = theta;
  res.value = cur.value;
  res.ok = true;
  return res;
}

}  // namespace

Eigen::VectorXd log_marginal_likelihood_gradient(const Dataset& data,
                                                 const GpHyperparams& h) {
  h.validate();
  LmlEvaluation e = evaluate_lml(data.covariates, data.outcomes, h, true);
  if (!e.ok)
    throw NumericalError("gp: Gram matrix not positive definite after jitter escalation");
  return e.grad;
}

GpPosterior GpPosterior::prior(GpHyperparams h, Eigen::Index dim) {
  if (h.lengthscales.size() != dim)
    throw std::invalid_argument("gp: prior lengthscale count != dim");
  h.validate();
  GpPosterior g;
  g.hyper_ = std::move(h);
  g.X_.resize(0, dim);
  g.y_.resize(0);
  g.L_.resize(0, 0);
  g.alpha_.resize(0);
  return g;
}

GpPosterior GpPosterior::condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   GpHyperparams h) {
  h.validate();
  check_dims(X, h);
  if (X.rows() != y.size())
    throw std::invalid_argument("gp: input/outcome row mismatch");
  if (X.rows() == 0) return prior(std::move(h), X.cols());
  Factorization f = factor_or_throw(X, y, h);
  GpPosterior g;
  g.hyper_ = std::move(h);
  g.X_ = X;
  g.y_ = y;
  g.L_ = std::move(f.L);
  g.alpha_ = std::move(f.alpha);
  g.jitter_ = f.jitter;
  g.lml_ = f.lml;
  return g;
}

GpPosterior GpPosterior::condition(const Dataset& data, GpHyperparams h) {
  data.validate();
  return condition(data.covariates, data.outcomes, std::move(h));
}

void GpPosterior::solve_in_place(Eigen::Ref<Eigen::MatrixXd> B) const {
  L_.triangularView<Eigen::Lower>().solveInPlace(B);
  L_.transpose().triangularView<Eigen::Upper>().solveInPlace(B);
}

Eigen::VectorXd GpPosterior::solve(const Eigen::VectorXd& b) const {
  Eigen::MatrixXd tmp = b;
  solve_in_place(tmp);
  return tmp.col(0);
}

void GpPosterior::mean_cov(const Eigen::MatrixXd& P, Eigen::VectorXd& mean,
                           Eigen::MatrixXd& cov) const {
  if (P.cols() != dim())
    throw std::invalid_argument("gp: query dimension mismatch");
  const Eigen::Index m = P.rows();
  cov = kernel_gram(P, hyper_);
  if (train_count() == 0) {
    mean = Eigen::VectorXd::Zero(m);
    return;
  }
  const Eigen::MatrixXd Kc = kernel_cross(X_, P, hyper_);
  mean = Kc.transpose() * alpha_;
  Eigen::MatrixXd V = Kc;
  L_.triangularView<Eigen::Lower>().solveInPlace(V);
  cov.noalias() -= V.transpose() * V;
  for (Eigen::Index i = 0; i < m; ++i) cov(i, i) = std::max(cov(i, i), 0.0);
}

void GpPosterior::mean_var(const Eigen::MatrixXd& P, Eigen::VectorXd& mean,
                           Eigen::VectorXd& var) const {
  if (P.cols() != dim())
    throw std::invalid_argument("gp: query dimension mismatch");
  const Eigen::Index m = P.rows();
  var = Eigen::VectorXd::Constant(m, hyper_.signal_variance);
  if (train_count() == 0) {
    mean = Eigen::VectorXd::Zero(m);
    return;
  }
  const Eigen::MatrixXd Kc = kernel_cross(X_, P, hyper_);
  mean = Kc.transpose() * alpha_;
  Eigen::MatrixXd V = Kc;
  L_.triangularView<Eigen::Lower>().solveInPlace(V);
  var -= V.colwise().squaredNorm().transpose();
  var = var.cwiseMax(0.0);
}

Eigen::VectorXd GpPosterior::mean_at(const Eigen::MatrixXd& P) const {
  if (P.cols() != dim())
    throw std::invalid_argument("gp: query dimension mismatch");
  if (train_count() == 0) return Eigen::VectorXd::Zero(P.rows());
  return kernel_cross(X_, P, hyper_).transpose() * alpha_;
}

GpPosterior GpPosterior::smoothed(double factor) const {
  if (!(factor >= 1.0))
    throw std::invalid_argument("gp: smoothing factor must be >= 1");
  GpHyperparams h = hyper_;
  h.lengthscales *= factor;
  if (train_count() == 0) return prior(std::move(h), dim());
  return condition(X_, y_, std::move(h));
}

GpPosterior fit(const Dataset& data, const FitConfig& cfg, FitDiagnostics* diagnostics) {
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.dim();
  if (n < 2) throw std::invalid_argument("fit: need at least 2 rows");
  if (cfg.restarts < 1) throw std::invalid_argument("fit: restarts must be >= 1");

  Rng rng(cfg.seed);
  const Eigen::Index p = cfg.ard ? d + 2 : 3;
  AscentResult best;
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd theta(p);
    const Eigen::Index n_len = cfg.ard ? d : 1;
    for (Eigen::Index i = 0; i < n_len; ++i)
      theta[i] = std::log(rng.log_uniform(cfg.lengthscale_lo, cfg.lengthscale_hi));
    theta[n_len] = std::log(1.0);  // signal variance starts at 1
    theta[n_len + 1] = std::log(rng.log_uniform(cfg.noise_lo, cfg.noise_hi));

    AscentResult res = ascend_lml(data.covariates, data.outcomes, theta, cfg.ard, cfg);
    if (diagnostics != nullptr) {
      diagnostics->initial_lml.push_back(res.initial_value);
      diagnostics->final_lml.push_back(res.value);
    }
    if (res.ok && res.value > best.value) best = res;
  }
  if (!best.ok)
    throw NumericalError("fit: every restart failed to factorize the Gram matrix");
  return GpPosterior::condition(data, hyper_from_log(best.theta, d, cfg.ard));
}

nlohmann::json ModelFile::to_json() const {
  nlohmann::json j;
  j["kernel"] = ard ? "ard" : "iso";
  j["lengthscales"] =
      std::vector<double>(hyper.lengthscales.begin(), hyper.lengthscales.end());
  j["signal_variance"] = hyper.signal_variance;
  j["noise_variance"] = hyper.noise_variance;
  std::ostringstream hex;
  hex << std::hex << data_checksum;
  j["data_checksum"] = hex.str();
  j["scaling"] = scaling.to_json();
  j["outcome_name"] = outcome_name;
  j["n"] = n;
  j["d"] = d;
  return j;
}

ModelFile ModelFile::from_json(const nlohmann::json& j) {
  ModelFile m;
  const std::string kernel = j.at("kernel").get<std::string>();
  if (kernel != "ard" && kernel != "iso")
    throw std::invalid_argument("model json: kernel must be 'ard' or 'iso'");
  m.ard = (kernel == "ard");
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  m.hyper.lengthscales =
      Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  m.hyper.signal_variance = j.at("signal_variance").get<double>();
  m.hyper.noise_variance = j.at("noise_variance").get<double>();
  m.hyper.validate();
  m.data_checksum = std::stoull(j.at("data_checksum").get<std::string>(), nullptr, 16);
  m.scaling = ScalingInfo::from_json(j.at("scaling"));
  m.outcome_name = j.at("outcome_name").get<std::string>();
  m.n = j.at("n").get<Eigen::Index>();
  m.d = j.at("d").get<Eigen::Index>();
  return m;
}

}  // namespace intervene
