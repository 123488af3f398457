#include "intervene/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "intervene/dataset.hpp"
#include "intervene/rng.hpp"

namespace intervene {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kUnifSecondMoment = 1.0 / 3.0;  // E[X^2] for X ~ Unif[-1,1]
constexpr std::uint64_t kStreamSalt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kFitSalt = 0xA076'1D64'78BD'642FULL;
constexpr std::uint64_t kOptSalt = 0xE703'7ED1'A0B4'28DBULL;
constexpr std::uint64_t kDagSalt = 0x8EBC'6AF0'9C88'C6E3ULL;

std::uint64_t trial_stream(std::uint64_t seed, int trial, Eigen::Index n) {
  // Distinct, stable stream per (trial, n) pair.
  std::uint64_t h = seed ^ (kStreamSalt * static_cast<std::uint64_t>(trial + 1));
  h ^= static_cast<std::uint64_t>(n) * 0xD6E8'FEB8'6659'FD93ULL;
  return h;
}

double f_value(Relationship rel, const Eigen::VectorXd& x) {
  switch (rel) {
    case Relationship::Linear37:
      return 0.3 * x[0] + 0.7 * x[1];
    case Relationship::QuadraticBowl:
      return 1.0 - x[0] * x[0] - x[1] * x[1];
    case Relationship::Product:
      return x[0] * x[1];
  }
  fail("unknown relationship");
}

double true_individual_change(Relationship rel, const Eigen::VectorXd& x,
                              const Transformation& t) {
  return f_value(rel, t.apply(x)) - f_value(rel, x);
}

// Exact expectation over the i.i.d. Unif[-1,1] covariate law.
double true_population_change(Relationship rel, const Transformation& t) {
  if (t.kind == Transformation::Kind::Shift) {
    const Eigen::VectorXd& m = t.shift;
    switch (rel) {
      case Relationship::Linear37:
        return 0.3 * m[0] + 0.7 * m[1];
      case Relationship::QuadraticBowl:
        return -(m[0] * m[0] + m[1] * m[1]);
      case Relationship::Product:
        return m[0] * m[1];
    }
    fail("unknown relationship");
  }
  bool has0 = false, has1 = false;
  double z0 = 0.0, z1 = 0.0;
  for (std::size_t i = 0; i < t.fix_set.size(); ++i) {
    if (t.fix_set[i] == 0) {
      has0 = true;
      z0 = t.fix_values[static_cast<Eigen::Index>(i)];
    } else if (t.fix_set[i] == 1) {
      has1 = true;
      z1 = t.fix_values[static_cast<Eigen::Index>(i)];
    }
  }
  switch (rel) {
    case Relationship::Linear37:
      return (has0 ? 0.3 * z0 : 0.0) + (has1 ? 0.7 * z1 : 0.0);
    case Relationship::QuadraticBowl:
      return (has0 ? kUnifSecondMoment - z0 * z0 : 0.0) +
             (has1 ? kUnifSecondMoment - z1 * z1 : 0.0);
    case Relationship::Product:
      if (has0 && has1) return z0 * z1;
      return 0.0;  // one fixed factor still averages to zero
  }
  fail("unknown relationship");
}

// Analytic optimum of the true change under the trial's action space.
double best_possible_change(Relationship rel, InterventionType type,
                            const Eigen::VectorXd* x_star, int k, double b) {
  const auto top_sum = [&](double g0, double g1) {
    if (k >= 2) return g0 + g1;
    if (k == 1) return std::max(g0, g1);
    return 0.0;
  };
  switch (type) {
    case InterventionType::Personalized: {
      const Eigen::VectorXd& x = *x_star;
      switch (rel) {
        case Relationship::Linear37:
          return top_sum(0.3 * b, 0.7 * b);
        case Relationship::QuadraticBowl: {
          const auto pull = [&](double v) {
            const double rest = std::max(0.0, std::abs(v) - b);
            return v * v - rest * rest;
          };
          return top_sum(pull(x[0]), pull(x[1]));
        }
        case Relationship::Product: {
          double best = 0.0;
          for (double d0 : {-b, 0.0, b})
            for (double d1 : {-b, 0.0, b}) {
              const int moved = (d0 != 0.0 ? 1 : 0) + (d1 != 0.0 ? 1 : 0);
              if (moved > k) continue;
              best = std::max(best,
                              (x[0] + d0) * (x[1] + d1) - x[0] * x[1]);
            }
          return best;
        }
      }
      fail("unknown relationship");
    }
    case InterventionType::PopulationShift:
      switch (rel) {
        case Relationship::Linear37:
          return top_sum(0.3 * b, 0.7 * b);
        case Relationship::QuadraticBowl:
          return 0.0;  // every shift is harmful on average
        case Relationship::Product:
          return k >= 2 ? b * b : 0.0;
      }
      fail("unknown relationship");
    case InterventionType::CovariateFixing:
      switch (rel) {
        case Relationship::Linear37:
          return top_sum(0.3 * b, 0.7 * b);
        case Relationship::QuadraticBowl:
          return top_sum(kUnifSecondMoment, kUnifSecondMoment);
        case Relationship::Product:
          return k >= 2 ? b * b : 0.0;
      }
      fail("unknown relationship");
  }
  fail("unknown intervention type");
}

// The support the analytic optimum uses, for the recovery statistic.
std::vector<int> expected_support(Relationship rel, InterventionType type, int k) {
  if (rel == Relationship::QuadraticBowl &&
      type == InterventionType::PopulationShift)
    return {};
  if (rel == Relationship::Product && type != InterventionType::Personalized &&
      k < 2)
    return {};
  if (k >= 2) return {0, 1};
  if (k == 1) {
    if (rel == Relationship::Linear37) return {1};   // larger coefficient
    if (rel == Relationship::QuadraticBowl) return {0};  // tie, lowest index
    return {0, 1};  // product: unattainable single-coordinate target
  }
  return {};
}

nlohmann::json fit_to_json(const FitConfig& f) {
  return {{"restarts", f.restarts},       {"max_iters", f.max_iters},
          {"grad_tol", f.grad_tol},       {"ard", f.ard},
          {"lengthscale_lo", f.lengthscale_lo},
          {"lengthscale_hi", f.lengthscale_hi},
          {"noise_lo", f.noise_lo},       {"noise_hi", f.noise_hi}};
}

FitConfig fit_from_json(const nlohmann::json& j) {
  FitConfig f;
  f.restarts = j.value("restarts", f.restarts);
  f.max_iters = j.value("max_iters", f.max_iters);
  f.grad_tol = j.value("grad_tol", f.grad_tol);
  f.ard = j.value("ard", f.ard);
  f.lengthscale_lo = j.value("lengthscale_lo", f.lengthscale_lo);
  f.lengthscale_hi = j.value("lengthscale_hi", f.lengthscale_hi);
  f.noise_lo = j.value("noise_lo", f.noise_lo);
  f.noise_hi = j.value("noise_hi", f.noise_hi);
  return f;
}

nlohmann::json optimizer_to_json(const OptimizerSettings& s) {
  return {{"schedule", s.schedule},
          {"max_iters", s.max_iters},
          {"step_tol", s.step_tol},
          {"random_restarts", s.random_restarts},
          {"support_tol", s.support_tol},
          {"bisect_max", s.bisect_max},
          {"bracket_ratio", s.bracket_ratio}};
}

OptimizerSettings optimizer_from_json(const nlohmann::json& j) {
  OptimizerSettings s;
  s.schedule = j.value("schedule", s.schedule);
  s.max_iters = j.value("max_iters", s.max_iters);
  s.step_tol = j.value("step_tol", s.step_tol);
  s.random_restarts = j.value("random_restarts", s.random_restarts);
  s.support_tol = j.value("support_tol", s.support_tol);
  s.bisect_max = j.value("bisect_max", s.bisect_max);
  s.bracket_ratio = j.value("bracket_ratio", s.bracket_ratio);
  return s;
}

struct StandardizedTrial {
  Dataset data;          // standardized copy
  ScalingInfo scaling;
  GpPosterior model;
};

Eigen::VectorXd covariate_scales(const ScalingInfo& scaling, Eigen::Index d) {
  return scaling.scales.head(d);
}

Eigen::VectorXd covariate_means(const ScalingInfo& scaling, Eigen::Index d) {
  return scaling.means.head(d);
}

// Shared per-trial preparation: standardize and fit once.
StandardizedTrial prepare_trial(const Dataset& data, FitConfig fit_cfg) {
  auto prepared = standardize(data);
  GpPosterior model = fit(prepared.first, fit_cfg);
  return StandardizedTrial{std::move(prepared.first), std::move(prepared.second),
                           std::move(model)};
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string support_field(const std::vector<int>& support) {
  std::string out;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (i) out += '|';
    out += std::to_string(support[i] + 1);  // 1-based in reports
  }
  return out;
}

std::vector<int> parse_support_field(const std::string& field) {
  std::vector<int> out;
  std::stringstream ss(field);
  std::string piece;
  while (std::getline(ss, piece, '|'))
    if (!piece.empty()) out.push_back(std::stoi(piece) - 1);
  return out;
}

}  // namespace

std::string relationship_name(Relationship r) {
  switch (r) {
    case Relationship::Linear37: return "linear_0.3_0.7";
    case Relationship::QuadraticBowl: return "quadratic_bowl";
    case Relationship::Product: return "product";
  }
  fail("unknown relationship");
}

Relationship relationship_from(const std::string& name) {
  if (name == "linear_0.3_0.7") return Relationship::Linear37;
  if (name == "quadratic_bowl") return Relationship::QuadraticBowl;
  if (name == "product") return Relationship::Product;
  if (name == "custom_sem")
    fail("relationship 'custom_sem' runs through the sem-study pipeline");
  fail("unknown relationship '" + name + "'");
}

std::string intervention_name(InterventionType t) {
  switch (t) {
    case InterventionType::Personalized: return "personalized";
    case InterventionType::PopulationShift: return "population_shift";
    case InterventionType::CovariateFixing: return "covariate_fixing";
  }
  fail("unknown intervention type");
}

InterventionType intervention_from(const std::string& name) {
  if (name == "personalized") return InterventionType::Personalized;
  if (name == "population_shift") return InterventionType::PopulationShift;
  if (name == "covariate_fixing") return InterventionType::CovariateFixing;
  fail("unknown intervention type '" + name + "'");
}

std::string method_name(MethodKind m) {
  return m == MethodKind::Standard ? "standard" : "smoothed";
}

MethodKind method_from(const std::string& name) {
  if (name == "standard") return MethodKind::Standard;
  if (name == "smoothed") return MethodKind::Smoothed;
  fail("unknown method '" + name + "'");
}

void SimConfig::validate() const {
  if (d < 2) fail("sim config: need at least two covariates");
  if (trials < 1) fail("sim config: trials must be >= 1");
  if (n_grid.empty()) fail("sim config: n_grid must be non-empty");
  for (Eigen::Index n : n_grid)
    if (n < 10) fail("sim config: n_grid entries must be >= 10");
  if (!(noise_sd >= 0.0)) fail("sim config: noise_sd must be >= 0");
  if (!(box_half_width > 0.0)) fail("sim config: box_half_width must be > 0");
  if (cardinality_k < 0 || cardinality_k > d)
    fail("sim config: cardinality must lie in [0, d]");
  if (alphas.empty()) fail("sim config: alphas must be non-empty");
  for (double a : alphas)
    if (!(a > 0.0 && a <= 0.5)) fail("sim config: alphas must lie in (0, 0.5]");
  if (methods.empty()) fail("sim config: methods must be non-empty");
  optimizer.validate();
}

nlohmann::json SimConfig::to_json() const {
  nlohmann::json j;
  j["relationship"] = relationship_name(relationship);
  j["intervention"] = intervention_name(intervention);
  j["d"] = d;
  j["n_grid"] = n_grid;
  j["trials"] = trials;
  j["noise_sd"] = noise_sd;
  j["box_half_width"] = box_half_width;
  j["k"] = cardinality_k;
  j["alphas"] = alphas;
  std::vector<std::string> method_names;
  for (MethodKind m : methods) method_names.push_back(method_name(m));
  j["methods"] = method_names;
  j["seed"] = seed;
  j["fit"] = fit_to_json(fit);
  j["optimizer"] = optimizer_to_json(optimizer);
  return j;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  if (j.contains("relationship"))
    c.relationship = relationship_from(j.at("relationship").get<std::string>());
  if (j.contains("intervention"))
    c.intervention = intervention_from(j.at("intervention").get<std::string>());
  c.d = j.value("d", c.d);
  if (j.contains("n_grid")) {
    c.n_grid.clear();
    for (const auto& n : j.at("n_grid")) c.n_grid.push_back(n.get<Eigen::Index>());
  }
  c.trials = j.value("trials", c.trials);
  c.noise_sd = j.value("noise_sd", c.noise_sd);
  c.box_half_width = j.value("box_half_width", c.box_half_width);
  c.cardinality_k = j.value("k", c.cardinality_k);
  if (j.contains("alphas")) c.alphas = j.at("alphas").get<std::vector<double>>();
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods"))
      c.methods.push_back(method_from(m.get<std::string>()));
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("fit")) c.fit = fit_from_json(j.at("fit"));
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

SimReport run_simulation(const SimConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  SimReport report;
  report.seed = config.seed;
  report.config = config.to_json();
  const Eigen::Index d = config.d;

  for (Eigen::Index n : config.n_grid) {
    for (int trial = 0; trial < config.trials; ++trial) {
      const std::uint64_t stream = trial_stream(config.seed, trial, n);
      Rng rng(stream);

      Dataset data;
      data.covariates.resize(n, d);
      data.outcomes.resize(n);
      for (Eigen::Index s = 0; s < d; ++s)
        data.column_names.push_back("x" + std::to_string(s + 1));
      data.outcome_name = "y";
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index s = 0; s < d; ++s)
          data.covariates(r, s) = rng.uniform(-1.0, 1.0);
        data.outcomes[r] =
            f_value(config.relationship, data.covariates.row(r).transpose()) +
            config.noise_sd * rng.normal();
      }
      Eigen::VectorXd x_star(d);
      for (Eigen::Index s = 0; s < d; ++s) x_star[s] = rng.uniform(-1.0, 1.0);

      try {
        FitConfig fit_cfg = config.fit;
        fit_cfg.seed = stream ^ kFitSalt;
        const StandardizedTrial prep = prepare_trial(data, fit_cfg);
        const Eigen::VectorXd scales = covariate_scales(prep.scaling, d);
        const Eigen::VectorXd means = covariate_means(prep.scaling, d);
        const double b = config.box_half_width;

        for (MethodKind method : config.methods) {
          for (double alpha : config.alphas) {
            OptimizerSettings opt = config.optimizer;
            opt.seed = stream ^ kOptSalt;
            if (method == MethodKind::Standard) opt.schedule = {1.0};

            InterventionConstraints c;
            c.lower = (-b) * scales.cwiseInverse();
            c.upper = b * scales.cwiseInverse();
            c.cardinality_k = config.cardinality_k;
            c.costs = Eigen::VectorXd::Ones(d);
            c.immutable.assign(static_cast<std::size_t>(d), 0);
            c.alpha = alpha;

            TrialRecord rec;
            rec.trial = trial;
            rec.n = n;
            rec.alpha = alpha;
            rec.method = method;

            Transformation applied = Transformation::identity(d);
            if (config.intervention == InterventionType::Personalized) {
              const Eigen::VectorXd x_std =
                  (x_star - means).cwiseQuotient(scales);
              const SparseShiftResult r =
                  personalized_intervention(prep.model, x_std, c, opt);
              rec.claimed_score = r.score;
              rec.intervened = !r.do_not_intervene;
              if (rec.intervened) {
                applied = Transformation::shift_by(
                    r.transformation.shift.cwiseProduct(scales));
                rec.support = r.support;
              }
            } else if (config.intervention == InterventionType::PopulationShift) {
              const GainContext ctx = GainContext::population(prep.data);
              const SparseShiftResult r = sparse_shift(prep.model, ctx, c, opt);
              rec.claimed_score = r.score;
              rec.intervened = !r.do_not_intervene;
              if (rec.intervened) {
                applied = Transformation::shift_by(
                    r.transformation.shift.cwiseProduct(scales));
                rec.support = r.support;
              }
            } else {
              Eigen::MatrixXd ranges(d, 2);
              ranges.col(0) = ((-b - means.array()) / scales.array()).matrix();
              ranges.col(1) = ((b - means.array()) / scales.array()).matrix();
              const CovfixResult r = forward_stepwise_covfix(
                  prep.model, prep.data, config.cardinality_k, ranges, alpha, opt);
              rec.claimed_score = r.score;
              rec.intervened = !r.do_not_intervene && !r.fix_set.empty();
              if (rec.intervened) {
                Eigen::VectorXd z_orig(r.transformation.fix_values.size());
                for (Eigen::Index i = 0; i < z_orig.size(); ++i) {
                  const int s = r.transformation.fix_set[static_cast<std::size_t>(i)];
                  z_orig[i] = means[s] +
                              r.transformation.fix_values[i] * scales[s];
                }
                applied =
                    Transformation::fix(r.transformation.fix_set, z_orig, d);
                rec.support = r.fix_set;
                std::sort(rec.support.begin(), rec.support.end());
              }
            }

            rec.improvement =
                config.intervention == InterventionType::Personalized
                    ? true_individual_change(config.relationship, x_star, applied)
                    : true_population_change(config.relationship, applied);
            rec.harmful = rec.improvement < 0.0;
            rec.best_possible = best_possible_change(
                config.relationship, config.intervention, &x_star,
                config.cardinality_k, b);
            rec.support_correct =
                rec.support == expected_support(config.relationship,
                                                config.intervention,
                                                config.cardinality_k);
            report.records.push_back(std::move(rec));
          }
        }
      } catch (const std::exception& e) {
        report.failures.push_back({trial, n, e.what()});
      }
    }
  }

  report.cells = aggregate(report.records);
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

void write_trials_csv(const std::vector<TrialRecord>& records, std::ostream& os) {
  os << "trial,n,alpha,method,improvement,harmful,support\n";
  for (const TrialRecord& r : records) {
    os << r.trial << ',' << r.n << ',' << format_double(r.alpha) << ','
       << method_name(r.method) << ',' << format_double(r.improvement) << ','
       << (r.harmful ? 1 : 0) << ',' << support_field(r.support) << '\n';
  }
}

void write_trials_csv(const std::vector<TrialRecord>& records,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) fail("cannot open '" + path + "' for writing");
  write_trials_csv(records, os);
}

std::vector<TrialRecord> load_trials_csv(std::istream& is) {
  std::vector<TrialRecord> out;
  std::string line;
  if (!std::getline(is, line)) fail("trials csv: empty stream");
  if (line == "trial,n,alpha,method,improvement,harmful,support\r")
    line.pop_back();
  if (line != "trial,n,alpha,method,improvement,harmful,support")
    fail("trials csv: unexpected header '" + line + "'");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 7)
      fail("trials csv: line " + std::to_string(line_no) +
           " has " + std::to_string(cells.size()) + " fields, expected 7");
    TrialRecord r;
    try {
      r.trial = std::stoi(cells[0]);
      r.n = static_cast<Eigen::Index>(std::stoll(cells[1]));
      r.alpha = std::stod(cells[2]);
      r.method = method_from(cells[3]);
      r.improvement = std::stod(cells[4]);
      r.harmful = std::stoi(cells[5]) != 0;
      r.support = parse_support_field(cells[6]);
    } catch (const std::invalid_argument&) {
      fail("trials csv: line " + std::to_string(line_no) + " is malformed");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TrialRecord> load_trials_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open '" + path + "'");
  return load_trials_csv(is);
}

std::vector<SimCell> aggregate(const std::vector<TrialRecord>& records) {
  std::vector<SimCell> cells;
  auto find_cell = [&](const TrialRecord& r) -> SimCell& {
    for (SimCell& c : cells)
      if (c.n == r.n && c.alpha == r.alpha && c.method == r.method) return c;
    SimCell c;
    c.n = r.n;
    c.alpha = r.alpha;
    c.method = r.method;
    cells.push_back(c);
    return cells.back();
  };
  for (const TrialRecord& r : records) find_cell(r);

  for (SimCell& c : cells) {
    std::vector<double> improvements;
    double sum = 0.0, sum_best = 0.0;
    int harmful = 0, correct = 0;
    for (const TrialRecord& r : records) {
      if (r.n != c.n || r.alpha != c.alpha || r.method != c.method) continue;
      improvements.push_back(r.improvement);
      sum += r.improvement;
      sum_best += r.best_possible;
      if (r.harmful) ++harmful;
      if (r.support_correct) ++correct;
    }
    c.trials = static_cast<int>(improvements.size());
    if (c.trials == 0) continue;
    c.mean_improvement = sum / c.trials;
    c.mean_best_possible = sum_best / c.trials;
    c.harmful_count = harmful;
    c.support_recovery_rate = static_cast<double>(correct) / c.trials;
    std::sort(improvements.begin(), improvements.end());
    const std::size_t idx = static_cast<std::size_t>(
        std::floor(0.05 * static_cast<double>(improvements.size() - 1)));
    c.q05_improvement = improvements[idx];
  }
  return cells;
}

nlohmann::json summary_json(const SimReport& report) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["duration_seconds"] = report.duration_seconds;
  j["config"] = report.config;
  nlohmann::json cells = nlohmann::json::array();
  for (const SimCell& c : report.cells) {
    cells.push_back({{"n", c.n},
                     {"alpha", c.alpha},
                     {"method", method_name(c.method)},
                     {"trials", c.trials},
                     {"mean_improvement", c.mean_improvement},
                     {"q05_improvement", c.q05_improvement},
                     {"harmful_count", c.harmful_count},
                     {"support_recovery_rate", c.support_recovery_rate},
                     {"mean_best_possible", c.mean_best_possible}});
  }
  j["cells"] = cells;
  nlohmann::json failures = nlohmann::json::array();
  for (const TrialFailure& f : report.failures)
    failures.push_back({{"trial", f.trial}, {"n", f.n}, {"message", f.message}});
  j["failures"] = failures;
  return j;
}

void SemStudyConfig::validate() const {
  if (!sem.has_value()) {
    if (d < 1) fail("sem study: need at least one covariate");
    if (!(density >= 0.0 && density <= 1.0))
      fail("sem study: density must lie in [0, 1]");
  }
  if (n_grid.empty()) fail("sem study: n_grid must be non-empty");
  for (Eigen::Index n : n_grid)
    if (n < 10) fail("sem study: n_grid entries must be >= 10");
  if (trials < 1) fail("sem study: trials must be >= 1");
  if (!(shift_bound_sd >= 0.0)) fail("sem study: shift bound must be >= 0");
  if (cardinality_k < 1) fail("sem study: cardinality must be >= 1");
  if (!(alpha > 0.0 && alpha <= 0.5)) fail("sem study: alpha must lie in (0, 0.5]");
  optimizer.validate();
}

nlohmann::json SemStudyConfig::to_json() const {
  nlohmann::json j;
  if (sem.has_value()) j["sem"] = *sem;
  j["d"] = d;
  j["density"] = density;
  j["n_grid"] = n_grid;
  j["trials"] = trials;
  j["shift_bound_sd"] = shift_bound_sd;
  j["k"] = cardinality_k;
  j["alpha"] = alpha;
  j["seed"] = seed;
  j["fit"] = fit_to_json(fit);
  j["optimizer"] = optimizer_to_json(optimizer);
  return j;
}

SemStudyConfig SemStudyConfig::from_json(const nlohmann::json& j) {
  SemStudyConfig c;
  if (j.contains("sem")) c.sem = j.at("sem");
  c.d = j.value("d", c.d);
  c.density = j.value("density", c.density);
  if (j.contains("n_grid")) {
    c.n_grid.clear();
    for (const auto& n : j.at("n_grid")) c.n_grid.push_back(n.get<Eigen::Index>());
  }
  c.trials = j.value("trials", c.trials);
  c.shift_bound_sd = j.value("shift_bound_sd", c.shift_bound_sd);
  c.cardinality_k = j.value("k", c.cardinality_k);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  if (j.contains("fit")) c.fit = fit_from_json(j.at("fit"));
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

SimReport run_sem_study(const SemStudyConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  SimReport report;
  report.seed = config.seed;
  report.config = config.to_json();

  std::optional<Sem> fixed_model;
  if (config.sem.has_value()) fixed_model = Sem::from_json(*config.sem);
  const MethodKind method_label = (config.optimizer.schedule.size() == 1)
                                      ? MethodKind::Standard
                                      : MethodKind::Smoothed;

  for (Eigen::Index n : config.n_grid) {
    for (int trial = 0; trial < config.trials; ++trial) {
      const std::uint64_t stream = trial_stream(config.seed, trial, n);
      const Sem sem = fixed_model.has_value()
                          ? *fixed_model
                          : Sem::random_dag(config.d, config.density,
                                            stream ^ kDagSalt);
      const Eigen::Index d = sem.covariates();
      Rng rng(stream);
      const Dataset data = sem.sample(n, rng);
      const Eigen::VectorXd caps =
          config.shift_bound_sd * sem.marginal_sds().head(d);
      const Sem::SingleShift oracle = sem.optimal_single_shift(caps);

      try {
        FitConfig fit_cfg = config.fit;
        fit_cfg.seed = stream ^ kFitSalt;
        const StandardizedTrial prep = prepare_trial(data, fit_cfg);
        const Eigen::VectorXd scales = covariate_scales(prep.scaling, d);

        OptimizerSettings opt = config.optimizer;
        opt.seed = stream ^ kOptSalt;

        InterventionConstraints c;
        c.lower = (-caps).cwiseQuotient(scales);
        c.upper = caps.cwiseQuotient(scales);
        c.cardinality_k = config.cardinality_k;
        c.costs = Eigen::VectorXd::Ones(d);
        c.immutable.assign(static_cast<std::size_t>(d), 0);
        c.alpha = config.alpha;

        const GainContext ctx = GainContext::population(prep.data);
        const SparseShiftResult r = sparse_shift(prep.model, ctx, c, opt);

        TrialRecord rec;
        rec.trial = trial;
        rec.n = n;
        rec.alpha = config.alpha;
        rec.method = method_label;
        rec.claimed_score = r.score;
        rec.intervened = !r.do_not_intervene;
        Transformation applied = Transformation::identity(d);
        if (rec.intervened) {
          applied =
              Transformation::shift_by(r.transformation.shift.cwiseProduct(scales));
          rec.support = r.support;
        }
        rec.improvement = sem.do_expected_outcome_change(applied);
        rec.harmful = rec.improvement < 0.0;
        rec.best_possible = oracle.change;
        std::vector<int> expected;
        if (oracle.index >= 0 && oracle.change > 0.0)
          expected.push_back(oracle.index);
        rec.support_correct = (rec.support == expected);
        report.records.push_back(std::move(rec));
      } catch (const std::exception& e) {
        report.failures.push_back({trial, n, e.what()});
      }
    }
  }

  report.cells = aggregate(report.records);
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

}  // namespace intervene
