#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "intervene/dataset.hpp"
#include "intervene/gp.hpp"
#include "intervene/rng.hpp"

using namespace intervene;

namespace {

Dataset toy_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Dataset d;
  d.covariates = X;
  d.outcomes = y;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    d.column_names.push_back("x" + std::to_string(c + 1));
  d.outcome_name = "y";
  return d;
}

GpHyperparams hyper(std::initializer_list<double> ls, double sv, double nv) {
  GpHyperparams h;
  h.lengthscales = Eigen::VectorXd(static_cast<Eigen::Index>(ls.size()));
  Eigen::Index i = 0;
  for (double l : ls) h.lengthscales[i++] = l;
  h.signal_variance = sv;
  h.noise_variance = nv;
  return h;
}

struct RandomInstance {
  Dataset data;
  GpHyperparams h;
};

RandomInstance random_instance(std::mt19937_64& eng, int max_n = 8, int max_d = 3) {
  std::uniform_int_distribution<int> nd(3, max_n), dd(1, max_d);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> logl(std::log(0.3), std::log(3.0));
  const int n = nd(eng), d = dd(eng);
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) X(r, c) = u(eng);
    y[r] = u(eng);
  }
  GpHyperparams h;
  h.lengthscales = Eigen::VectorXd(d);
  for (int c = 0; c < d; ++c) h.lengthscales[c] = std::exp(logl(eng));
  h.signal_variance = std::exp(std::uniform_real_distribution<double>(
      std::log(0.5), std::log(2.0))(eng));
  h.noise_variance = std::exp(std::uniform_real_distribution<double>(
      std::log(0.05), std::log(1.0))(eng));
  return {toy_data(X, y), h};
}

}  // namespace

TEST_CASE("ard kernel closed-form values") {
  const GpHyperparams h = hyper({1.0, 2.0}, 1.5, 0.1);
  Eigen::VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 2.0;
  // exponent = -(1/2)(1/1 + 4/4) = -1
  CHECK(ard_kernel(a, b, h) == doctest::Approx(1.5 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(ard_kernel(a, a, h) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(ard_kernel(a, b, h) == doctest::Approx(ard_kernel(b, a, h)).epsilon(1e-15));
}

TEST_CASE("gram matrices are symmetric with near-nonnegative spectrum") {
  std::mt19937_64 eng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const RandomInstance inst = random_instance(eng, 12, 3);
    const Eigen::MatrixXd K = kernel_gram(inst.data.covariates, inst.h);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    const Eigen::VectorXd evals =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues();
    CHECK(evals.minCoeff() >= -1e-8);
  }
}

TEST_CASE("single-point log marginal likelihood matches the closed form") {
  const GpHyperparams h = hyper({1.0}, 1.0, 1e-12);
  Eigen::MatrixXd X(1, 1);
  X << 0.0;
  Eigen::VectorXd y(1);

  y << 0.0;  // -(1/2)log(2*pi*1)
  CHECK(log_marginal_likelihood(toy_data(X, y), h) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-9));

  y << 1.0;  // extra -(1/2) * 1^2 / 1
  CHECK(log_marginal_likelihood(toy_data(X, y), h) ==
        doctest::Approx(-1.4189385332046727).epsilon(1e-9));
}

TEST_CASE("cholesky likelihood equals a dense determinant evaluation") {
  std::mt19937_64 eng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const RandomInstance inst = random_instance(eng);
    Eigen::MatrixXd K = kernel_gram(inst.data.covariates, inst.h);
    // Match the documented baseline stabilizer of 1e-10 x mean diagonal.
    K.diagonal().array() +=
        inst.h.noise_variance + 1e-10 * K.diagonal().mean();
    const Eigen::VectorXd& y = inst.data.outcomes;
    const double quad = y.dot(K.ldlt().solve(y));
    const double logdet = std::log(K.determinant());
    const double expected =
        -0.5 * quad - 0.5 * logdet -
        0.5 * static_cast<double>(inst.data.rows()) * std::log(2.0 * M_PI);
    CHECK(log_marginal_likelihood(inst.data, inst.h) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("likelihood gradient matches central finite differences") {
  std::mt19937_64 eng(29);
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const RandomInstance inst = random_instance(eng);
    const Eigen::VectorXd grad =
        log_marginal_likelihood_gradient(inst.data, inst.h);
    const Eigen::Index d = inst.h.lengthscales.size();
    REQUIRE(grad.size() == d + 2);

    const auto eval_log = [&](Eigen::Index j, double bump) {
      GpHyperparams h = inst.h;
      if (j < d)
        h.lengthscales[j] *= std::exp(bump);
      else if (j == d)
        h.signal_variance *= std::exp(bump);
      else
        h.noise_variance *= std::exp(bump);
      return log_marginal_likelihood(inst.data, h);
    };
    for (Eigen::Index j = 0; j < d + 2; ++j) {
      const double step = 1e-5;
      const double fd = (eval_log(j, step) - eval_log(j, -step)) / (2.0 * step);
      CAPTURE(rep);
      CAPTURE(j);
      CHECK(std::abs(grad[j] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked >= 150);
}

TEST_CASE("two-point conditioning reproduces the textbook posterior") {
  const GpHyperparams h = hyper({1.0}, 1.0, 1.0);
  Eigen::MatrixXd X(1, 1);
  X << 0.0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const GpPosterior post = GpPosterior::condition(X, y, h);

  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  post.mean_cov(q, mean, cov);
  CHECK(mean[0] == doctest::Approx(0.5).epsilon(1e-9));   // 1/(1+1)
  CHECK(cov(0, 0) == doctest::Approx(0.5).epsilon(1e-9));  // 1 - 1/2
}

TEST_CASE("posterior variance at training inputs never exceeds the prior") {
  std::mt19937_64 eng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const RandomInstance inst = random_instance(eng);
    const GpPosterior post = GpPosterior::condition(inst.data, inst.h);
    Eigen::VectorXd mean, var;
    post.mean_var(inst.data.covariates, mean, var);
    CHECK(var.maxCoeff() <= inst.h.signal_variance + 1e-8);
    CHECK(var.minCoeff() >= 0.0);
  }
}

TEST_CASE("mean_var agrees with the mean_cov diagonal") {
  std::mt19937_64 eng(37);
  const RandomInstance inst = random_instance(eng);
  const GpPosterior post = GpPosterior::condition(inst.data, inst.h);
  Eigen::MatrixXd q(4, inst.data.dim());
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < q.cols(); ++c) q(r, c) = u(eng);
  Eigen::VectorXd mean_a, var_a, mean_b;
  Eigen::MatrixXd cov;
  post.mean_var(q, mean_a, var_a);
  post.mean_cov(q, mean_b, cov);
  CHECK((mean_a - mean_b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((var_a - cov.diagonal()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.mean_at(q) - mean_a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("posterior matches a sampled conditioning oracle") {
  // Draw joint prior samples over train + query points, condition by the
  // pathwise update, and compare moments: an oracle that never touches the
  // posterior formulas under test.
  const GpHyperparams h = hyper({0.8}, 1.3, 0.4);
  Eigen::MatrixXd X(3, 1), Q(2, 1);
  X << -1.0, 0.2, 1.1;
  Q << -0.4, 0.7;
  Eigen::VectorXd y(3);
  y << 0.5, -0.2, 0.9;
  const GpPosterior post = GpPosterior::condition(X, y, h);
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  post.mean_cov(Q, mean, cov);

  Eigen::MatrixXd joint(5, 1);
  joint << X, Q;
  const Eigen::MatrixXd Kj = kernel_gram(joint, h);
  const Eigen::LLT<Eigen::MatrixXd> chol(
      Kj + 1e-12 * Eigen::MatrixXd::Identity(5, 5));
  const Eigen::MatrixXd Ktt =
      kernel_gram(X, h) + h.noise_variance * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd Kqt = kernel_cross(Q, X, h);
  const Eigen::LLT<Eigen::MatrixXd> train_chol(Ktt);

  const int num_samples = 60000;
  std::mt19937_64 eng(101);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd acc2 = Eigen::MatrixXd::Zero(2, 2);
  for (int s = 0; s < num_samples; ++s) {
    Eigen::VectorXd z(5);
    for (int i = 0; i < 5; ++i) z[i] = gauss(eng);
    const Eigen::VectorXd f = chol.matrixL() * z;
    Eigen::VectorXd y_sim = f.head(3);
    for (int i = 0; i < 3; ++i)
      y_sim[i] += std::sqrt(h.noise_variance) * gauss(eng);
    const Eigen::VectorXd f_post =
        f.tail(2) + Kqt * train_chol.solve(y - y_sim);
    acc += f_post;
    acc2 += f_post * f_post.transpose();
  }
  const Eigen::VectorXd mc_mean = acc / num_samples;
  const Eigen::MatrixXd mc_cov =
      acc2 / num_samples - mc_mean * mc_mean.transpose();

  for (int i = 0; i < 2; ++i) {
    const double se_mean = std::sqrt(cov(i, i) / num_samples);
    CHECK(std::abs(mc_mean[i] - mean[i]) <= 3.0 * se_mean + 1e-6);
    for (int j = 0; j < 2; ++j) {
      const double se_cov = std::sqrt(
          (cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / num_samples);
      CHECK(std::abs(mc_cov(i, j) - cov(i, j)) <= 3.0 * se_cov + 1e-6);
    }
  }
}

TEST_CASE("duplicate rows survive via the jitter ladder") {
  Eigen::MatrixXd X(4, 1);
  X << 0.5, 0.5, 0.5, -1.0;  // exactly repeated inputs
  Eigen::VectorXd y(4);
  y << 1.0, 1.0, 1.0, -1.0;
  const GpHyperparams h = hyper({1.0}, 1.0, 1e-10);
  const GpPosterior post = GpPosterior::condition(X, y, h);
  Eigen::VectorXd mean, var;
  post.mean_var(X, mean, var);
  CHECK(std::isfinite(mean[0]));
  CHECK(var.minCoeff() >= 0.0);
  CHECK(var.maxCoeff() <= h.signal_variance + 1e-8);
  CHECK(post.jitter() > 0.0);
}

TEST_CASE("prior posterior has zero mean and full prior variance") {
  const GpHyperparams h = hyper({1.0, 1.0}, 2.5, 0.1);
  const GpPosterior prior = GpPosterior::prior(h, 2);
  Eigen::MatrixXd q(3, 2);
  q << 0.0, 0.0, 1.0, -1.0, 2.0, 0.5;
  Eigen::VectorXd mean, var;
  prior.mean_var(q, mean, var);
  CHECK(mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK((var.array() - 2.5).abs().maxCoeff() < 1e-14);
  CHECK(prior.train_count() == 0);
}

TEST_CASE("smoothing stretches lengthscales but keeps the training table") {
  std::mt19937_64 eng(41);
  const RandomInstance inst = random_instance(eng);
  const GpPosterior post = GpPosterior::condition(inst.data, inst.h);
  const GpPosterior wide = post.smoothed(4.0);
  CHECK((wide.hyperparams().lengthscales -
         4.0 * post.hyperparams().lengthscales)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK(wide.hyperparams().signal_variance ==
        doctest::Approx(post.hyperparams().signal_variance));
  CHECK((wide.train_inputs() - post.train_inputs()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((wide.train_outputs() - post.train_outputs()).cwiseAbs().maxCoeff() == 0.0);

  const GpPosterior same = post.smoothed(1.0);
  Eigen::MatrixXd q(1, inst.data.dim());
  q.setZero();
  CHECK(same.mean_at(q)[0] == doctest::Approx(post.mean_at(q)[0]).epsilon(1e-12));
  CHECK_THROWS_AS(post.smoothed(0.5), std::invalid_argument);
}

TEST_CASE("solve applies the inverse of the noisy gram matrix") {
  std::mt19937_64 eng(43);
  const RandomInstance inst = random_instance(eng);
  const GpPosterior post = GpPosterior::condition(inst.data, inst.h);
  const Eigen::Index n = inst.data.rows();
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) b[i] = std::sin(static_cast<double>(i));
  const Eigen::VectorXd x = post.solve(b);
  const Eigen::MatrixXd K =
      kernel_gram(inst.data.covariates, inst.h) +
      (inst.h.noise_variance + post.jitter()) *
          Eigen::MatrixXd::Identity(n, n);
  CHECK((K * x - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit improves the likelihood and is deterministic in the seed") {
  // Smooth low-noise function: the optimizer has a clear target.
  const int n = 40;
  Rng rng(5);
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) {
    X(r, 0) = rng.uniform(-1.0, 1.0);
    X(r, 1) = rng.uniform(-1.0, 1.0);
    y[r] = std::sin(2.0 * X(r, 0)) + 0.5 * X(r, 1) + 0.02 * rng.normal();
  }
  const Dataset data = toy_data(X, y);

  FitConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 99;
  cfg.max_iters = 60;
  FitDiagnostics diag;
  const GpPosterior fitted = fit(data, cfg, &diag);

  REQUIRE(diag.initial_lml.size() == 3);
  REQUIRE(diag.final_lml.size() == 3);
  for (std::size_t i = 0; i < diag.final_lml.size(); ++i)
    CHECK(diag.final_lml[i] >= diag.initial_lml[i] - 1e-9);
  double best = diag.final_lml[0];
  for (double v : diag.final_lml) best = std::max(best, v);
  CHECK(fitted.log_marginal() == doctest::Approx(best).epsilon(1e-9));

  const GpPosterior again = fit(data, cfg);
  CHECK((again.hyperparams().lengthscales - fitted.hyperparams().lengthscales)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(again.hyperparams().noise_variance ==
        fitted.hyperparams().noise_variance);

  // The fit should beat a deliberately poor setting.
  CHECK(fitted.log_marginal() >
        log_marginal_likelihood(data, hyper({0.01, 0.01}, 1.0, 1.0)));
}

TEST_CASE("non-ard fit ties all lengthscales together") {
  Rng rng(6);
  const int n = 25;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < 3; ++c) X(r, c) = rng.uniform(-1.0, 1.0);
    y[r] = X(r, 0) - X(r, 2) + 0.05 * rng.normal();
  }
  FitConfig cfg;
  cfg.restarts = 2;
  cfg.seed = 7;
  cfg.max_iters = 40;
  cfg.ard = false;
  const GpPosterior fitted = fit(toy_data(X, y), cfg);
  const Eigen::VectorXd& ls = fitted.hyperparams().lengthscales;
  REQUIRE(ls.size() == 3);
  CHECK((ls.array() - ls[0]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("pure noise pushes the explained signal down") {
  Rng rng(8);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) {
    X(r, 0) = rng.uniform(-1.0, 1.0);
    X(r, 1) = rng.uniform(-1.0, 1.0);
    y[r] = rng.normal();  // outcome independent of X
  }
  FitConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 17;
  cfg.max_iters = 60;
  const GpPosterior fitted = fit(toy_data(X, y), cfg);
  // Noise should absorb at least a third of the unit variance.
  CHECK(fitted.hyperparams().noise_variance > 0.3);
}

TEST_CASE("model file json round-trip preserves every field") {
  ModelFile m;
  m.hyper = hyper({0.5, 2.0}, 1.7, 0.03);
  m.ard = true;
  m.data_checksum = 0xDEADBEEFCAFEF00DULL;
  m.scaling.means = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
  m.scaling.scales = Eigen::VectorXd::LinSpaced(3, 0.5, 1.5);
  m.scaling.columns = {"a", "b", "y"};
  m.outcome_name = "y";
  m.n = 42;
  m.d = 2;
  const ModelFile back = ModelFile::from_json(m.to_json());
  CHECK((back.hyper.lengthscales - m.hyper.lengthscales).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.hyper.signal_variance == m.hyper.signal_variance);
  CHECK(back.hyper.noise_variance == m.hyper.noise_variance);
  CHECK(back.ard == m.ard);
  CHECK(back.data_checksum == m.data_checksum);
  CHECK(back.outcome_name == "y");
  CHECK(back.n == 42);
  CHECK(back.d == 2);
  CHECK((back.scaling.means - m.scaling.means).cwiseAbs().maxCoeff() == 0.0);
}
