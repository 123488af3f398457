#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "intervene/dataset.hpp"

namespace intervene {

// Anisotropic squared-exponential kernel parameters.  `lengthscales` has one
// entry per covariate; an isotropic model simply keeps them all equal.
struct GpHyperparams {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 0.1;

  void validate() const;  // positivity / finiteness
};

struct FitConfig {
  int restarts = 5;
  std::uint64_t seed = 0;
  bool ard = true;  // false ties all lengthscales together
  int max_iters = 80;
  double grad_tol = 1e-4;
  // Log-uniform initialization ranges.
  double lengthscale_lo = 0.1, lengthscale_hi = 10.0;
  double noise_lo = 1e-3, noise_hi = 1.0;
};

// Optional per-restart telemetry from fit().
struct FitDiagnostics {
  std::vector<double> initial_lml;
  std::vector<double> final_lml;
};

double ard_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  const GpHyperparams& h);

// Noise-free kernel matrix of the rows of X against themselves (n x n).
Eigen::MatrixXd kernel_gram(const Eigen::MatrixXd& X, const GpHyperparams& h);

// Kernel matrix between the rows of X and the rows of P (n x m).
Eigen::MatrixXd kernel_cross(const Eigen::MatrixXd& X, const Eigen::MatrixXd& P,
                             const GpHyperparams& h);

double log_marginal_likelihood(const Dataset& data, const GpHyperparams& h);

// Gradient of the log marginal likelihood with respect to
// (log l_1 .. log l_d, log signal_variance, log noise_variance).
Eigen::VectorXd log_marginal_likelihood_gradient(const Dataset& data,
                                                 const GpHyperparams& h);

// Zero-mean GP conditioned on a training table via a Cholesky factor of
// K + noise * I (jitter-escalated when the factorization stalls).
class GpPosterior {
 public:
  // Prior with no training data: mean 0, covariance = prior kernel.
  static GpPosterior prior(GpHyperparams h, Eigen::Index dim);

  static GpPosterior condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               GpHyperparams h);
  static GpPosterior condition(const Dataset& data, GpHyperparams h);

  // Posterior mean and full covariance at the rows of P.  Covariance diagonal
  // entries are clamped at 0 against roundoff.
  void mean_cov(const Eigen::MatrixXd& P, Eigen::VectorXd& mean,
                Eigen::MatrixXd& cov) const;

  // Diagonal-only variant (no cross terms), much cheaper for large P.
  void mean_var(const Eigen::MatrixXd& P, Eigen::VectorXd& mean,
                Eigen::VectorXd& var) const;

  Eigen::VectorXd mean_at(const Eigen::MatrixXd& P) const;

  // Same model with every lengthscale multiplied by `factor` (>= 1) and the
  // weights refit on the stored training data.
  GpPosterior smoothed(double factor) const;

  const GpHyperparams& hyperparams() const { return hyper_; }
  Eigen::Index train_count() const { return X_.rows(); }
  Eigen::Index dim() const { return X_.cols(); }
  const Eigen::MatrixXd& train_inputs() const { return X_; }
  const Eigen::VectorXd& train_outputs() const { return y_; }
  const Eigen::VectorXd& weight_vector() const { return alpha_; }
  const Eigen::MatrixXd& chol_lower() const { return L_; }
  double jitter() const { return jitter_; }
  double log_marginal() const { return lml_; }

  // (K + noise I)^-1 B via the stored factor; B is overwritten.
  void solve_in_place(Eigen::Ref<Eigen::MatrixXd> B) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  GpHyperparams hyper_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd L_;       // lower Cholesky factor of K + noise I (+ jitter)
  Eigen::VectorXd alpha_;   // (K + noise I)^-1 y
  double jitter_ = 0.0;
  double lml_ = 0.0;
};

GpPosterior fit(const Dataset& data, const FitConfig& cfg = {},
                FitDiagnostics* diagnostics = nullptr);

inline GpPosterior smoothed(const GpPosterior& model, double factor) {
  return model.smoothed(factor);
}

// Serialized form: hyperparameters plus a checksum of the training table and
// the scaling used to standardize it.  Rebuilding the posterior needs the
// original data file; the checksum guards against mismatches.
struct ModelFile {
  GpHyperparams hyper;
  bool ard = true;
  std::uint64_t data_checksum = 0;
  ScalingInfo scaling;
  std::string outcome_name;
  Eigen::Index n = 0, d = 0;

  nlohmann::json to_json() const;
  static ModelFile from_json(const nlohmann::json& j);
};

}  // namespace intervene
