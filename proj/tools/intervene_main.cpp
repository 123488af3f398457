// Command-line front end: fit models, propose interventions, run the
// simulation suites.  Exit codes: 0 success, 1 validation error, 2 numerical
// failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "intervene/baselines.hpp"
#include "intervene/dataset.hpp"
#include "intervene/gain.hpp"
#include "intervene/gp.hpp"
#include "intervene/harness.hpp"
#include "intervene/numerics.hpp"
#include "intervene/optimize.hpp"
#include "intervene/sem.hpp"

namespace {

using namespace intervene;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("'" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open '" + path + "' for writing");
  os << j.dump(2) << '\n';
}

std::string out_path(const std::string& out_dir, const std::string& name) {
  std::filesystem::create_directories(out_dir);
  return (std::filesystem::path(out_dir) / name).string();
}

// Re-applies a stored column scaling instead of recomputing it, so a rebuilt
// posterior matches the serialized fit bit for bit.
Dataset apply_scaling(const Dataset& data, const ScalingInfo& scaling) {
  const Eigen::Index d = data.dim();
  if (scaling.means.size() != d + 1)
    throw std::invalid_argument("model scaling does not match data width");
  Dataset out = data;
  for (Eigen::Index c = 0; c < d; ++c)
    out.covariates.col(c) =
        (out.covariates.col(c).array() - scaling.means[c]) / scaling.scales[c];
  out.outcomes =
      ((out.outcomes.array() - scaling.means[d]) / scaling.scales[d]).matrix();
  return out;
}

struct RebuiltModel {
  ModelFile file;
  Dataset raw;  // original units
  Dataset std_data;
  GpPosterior model;
  double outcome_scale = 1.0;
};

RebuiltModel rebuild(const std::string& model_path, const std::string& data_path) {
  ModelFile file = ModelFile::from_json(read_json_file(model_path));
  Dataset raw = load_dataset(data_path, file.outcome_name);
  if (dataset_checksum(raw) != file.data_checksum)
    throw std::invalid_argument(
        "data file does not match the model's training checksum");
  Dataset std_data = apply_scaling(raw, file.scaling);
  GpPosterior model = GpPosterior::condition(std_data, file.hyper);
  const double outcome_scale = file.scaling.scales[raw.dim()];
  return RebuiltModel{std::move(file), std::move(raw), std::move(std_data),
                      std::move(model), outcome_scale};
}

struct SharedFlags {
  double alpha = 0.05;
  int k = -1;  // -1 = no cardinality restriction
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = ".";
};

nlohmann::json load_config(const SharedFlags& flags) {
  if (flags.config_path.empty()) return nlohmann::json::object();
  return read_json_file(flags.config_path);
}

FitConfig fit_config_from(const nlohmann::json& cfg, std::uint64_t seed) {
  FitConfig f;
  if (cfg.contains("fit")) {
    const nlohmann::json& j = cfg.at("fit");
    f.restarts = j.value("restarts", f.restarts);
    f.max_iters = j.value("max_iters", f.max_iters);
    f.grad_tol = j.value("grad_tol", f.grad_tol);
    f.ard = j.value("ard", f.ard);
    f.lengthscale_lo = j.value("lengthscale_lo", f.lengthscale_lo);
    f.lengthscale_hi = j.value("lengthscale_hi", f.lengthscale_hi);
    f.noise_lo = j.value("noise_lo", f.noise_lo);
    f.noise_hi = j.value("noise_hi", f.noise_hi);
  }
  f.seed = seed;
  return f;
}

OptimizerSettings optimizer_from(const nlohmann::json& cfg, std::uint64_t seed) {
  OptimizerSettings s;
  if (cfg.contains("optimizer")) {
    const nlohmann::json& j = cfg.at("optimizer");
    s.schedule = j.value("schedule", s.schedule);
    s.max_iters = j.value("max_iters", s.max_iters);
    s.step_tol = j.value("step_tol", s.step_tol);
    s.random_restarts = j.value("random_restarts", s.random_restarts);
    s.support_tol = j.value("support_tol", s.support_tol);
    s.bisect_max = j.value("bisect_max", s.bisect_max);
    s.bracket_ratio = j.value("bracket_ratio", s.bracket_ratio);
  }
  s.seed = seed;
  return s;
}

InterventionConstraints shift_constraints(const RebuiltModel& r, double box,
                                          const SharedFlags& flags) {
  const Eigen::Index d = r.raw.dim();
  InterventionConstraints c;
  const Eigen::VectorXd scales = r.file.scaling.scales.head(d);
  c.lower = (-box) * scales.cwiseInverse();
  c.upper = box * scales.cwiseInverse();
  c.cardinality_k = flags.k < 0 ? static_cast<int>(d) : flags.k;
  c.costs = Eigen::VectorXd::Ones(d);
  c.immutable.assign(static_cast<std::size_t>(d), 0);
  c.alpha = flags.alpha;
  return c;
}

std::vector<std::string> support_names(const Dataset& raw,
                                       const std::vector<int>& support) {
  std::vector<std::string> names;
  for (int s : support) names.push_back(raw.column_names[static_cast<std::size_t>(s)]);
  return names;
}

nlohmann::json shift_result_json(const RebuiltModel& r,
                                 const SparseShiftResult& res) {
  const Eigen::Index d = r.raw.dim();
  const Eigen::VectorXd scales = r.file.scaling.scales.head(d);
  nlohmann::json j;
  j["do_not_intervene"] = res.do_not_intervene;
  j["expected_outcome_change"] = res.score * r.outcome_scale;
  j["penalty_level"] = res.lambda;
  j["iterations"] = res.iterations;
  j["support"] = support_names(r.raw, res.support);
  Transformation orig = res.do_not_intervene
                            ? Transformation::identity(d)
                            : Transformation::shift_by(
                                  res.transformation.shift.cwiseProduct(scales));
  j["transformation"] = orig.to_json();
  return j;
}

nlohmann::json covfix_result_json(const RebuiltModel& r, const CovfixResult& res) {
  const Eigen::Index d = r.raw.dim();
  nlohmann::json j;
  j["do_not_intervene"] = res.do_not_intervene;
  j["expected_outcome_change"] = res.score * r.outcome_scale;
  j["iterations"] = res.iterations;
  j["support"] = support_names(r.raw, res.fix_set);
  Transformation orig = Transformation::identity(d);
  if (!res.do_not_intervene && !res.fix_set.empty()) {
    Eigen::VectorXd z(res.transformation.fix_values.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const int s = res.transformation.fix_set[static_cast<std::size_t>(i)];
      z[i] = r.file.scaling.means[s] +
             res.transformation.fix_values[i] * r.file.scaling.scales[s];
    }
    orig = Transformation::fix(res.transformation.fix_set, z, d);
  }
  j["transformation"] = orig.to_json();
  return j;
}

void print_report(const SimReport& report) {
  std::cout << "n,alpha,method,trials,mean_improvement,q05_improvement,"
               "harmful_count,support_recovery_rate,mean_best_possible\n";
  for (const SimCell& c : report.cells) {
    std::cout << c.n << ',' << c.alpha << ',' << method_name(c.method) << ','
              << c.trials << ',' << c.mean_improvement << ','
              << c.q05_improvement << ',' << c.harmful_count << ','
              << c.support_recovery_rate << ',' << c.mean_best_possible << '\n';
  }
  for (const TrialFailure& f : report.failures)
    std::cerr << "trial " << f.trial << " (n=" << f.n
              << ") failed: " << f.message << '\n';
}

void emit_report(const SimReport& report, const SharedFlags& flags) {
  write_trials_csv(report.records, out_path(flags.out_dir, "trials.csv"));
  write_json_file(out_path(flags.out_dir, "summary.json"), summary_json(report));
  print_report(report);
  std::cout << "wrote " << out_path(flags.out_dir, "trials.csv") << " and "
            << out_path(flags.out_dir, "summary.json") << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Conservative intervention proposals from observational data"};
  app.require_subcommand(1);

  SharedFlags flags;
  app.add_option("--alpha", flags.alpha,
                 "Lower quantile level for conservative scoring")
      ->capture_default_str();
  app.add_option("--k", flags.k, "Cardinality cap (-1 = unrestricted)")
      ->capture_default_str();
  app.add_option("--seed", flags.seed, "Random seed")->capture_default_str();
  app.add_option("--config", flags.config_path,
                 "JSON file with fit/optimizer (or full run) configuration");
  app.add_option("--out", flags.out_dir, "Output directory")
      ->capture_default_str();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write model.json");
  std::string fit_data, fit_outcome = "y", fit_kernel = "ard";
  int fit_restarts = -1;
  fit_cmd->add_option("--data", fit_data, "Training CSV")->required();
  fit_cmd->add_option("--outcome", fit_outcome, "Outcome column name")
      ->capture_default_str();
  fit_cmd->add_option("--kernel", fit_kernel, "ard | iso")
      ->check(CLI::IsMember({"ard", "iso"}))
      ->capture_default_str();
  fit_cmd->add_option("--restarts", fit_restarts,
                      "Hyperparameter restarts (-1 = config default)");

  // model + data commands
  std::string model_path, data_path;
  double box = 1.0;
  auto add_model_data = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "model.json from fit")->required();
    cmd->add_option("--data", data_path, "Training CSV (checksum-verified)")
        ->required();
  };

  auto* personalize_cmd =
      app.add_subcommand("personalize", "Sparse shift for one data row");
  add_model_data(personalize_cmd);
  int row_index = 0;
  personalize_cmd->add_option("--row", row_index, "0-based row in the data file")
      ->required();
  personalize_cmd->add_option("--box", box, "Per-covariate bound, original units")
      ->capture_default_str();

  auto* shift_cmd =
      app.add_subcommand("shift", "Population-level sparse shift");
  add_model_data(shift_cmd);
  shift_cmd->add_option("--box", box, "Per-covariate bound, original units")
      ->capture_default_str();

  auto* covfix_cmd =
      app.add_subcommand("covfix", "Population-level covariate fixing");
  add_model_data(covfix_cmd);
  covfix_cmd->add_option("--box", box,
                         "Fixing range ±box around 0, original units "
                         "(default: observed column ranges)");

  auto* rank_cmd =
      app.add_subcommand("rank", "Score and rank candidate transformations");
  add_model_data(rank_cmd);
  std::string candidates_path;
  rank_cmd->add_option("--candidates", candidates_path,
                       "JSON array of transformations, original units")
      ->required();

  auto* simulate_cmd =
      app.add_subcommand("simulate", "Run a synthetic simulation suite");
  auto* sem_cmd =
      app.add_subcommand("sem-study", "Run the SEM misspecification study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version are successes, bad usage is not
  }

  const nlohmann::json cfg = load_config(flags);

  if (fit_cmd->parsed()) {
    Dataset raw = load_dataset(fit_data, fit_outcome);
    auto [std_data, scaling] = standardize(raw);
    FitConfig fc = fit_config_from(cfg, flags.seed);
    fc.ard = (fit_kernel == "ard");
    if (fit_restarts >= 0) fc.restarts = fit_restarts;
    FitDiagnostics diag;
    GpPosterior model = fit(std_data, fc, &diag);
    ModelFile mf;
    mf.hyper = model.hyperparams();
    mf.ard = fc.ard;
    mf.data_checksum = dataset_checksum(raw);
    mf.scaling = scaling;
    mf.outcome_name = fit_outcome;
    mf.n = raw.rows();
    mf.d = raw.dim();
    const std::string path = out_path(flags.out_dir, "model.json");
    write_json_file(path, mf.to_json());
    std::cout << "fit " << raw.rows() << " rows, " << raw.dim()
              << " covariates; log marginal likelihood "
              << model.log_marginal() << "; wrote " << path << '\n';
    return 0;
  }

  if (personalize_cmd->parsed() || shift_cmd->parsed()) {
    RebuiltModel r = rebuild(model_path, data_path);
    const InterventionConstraints c = shift_constraints(r, box, flags);
    const OptimizerSettings opt = optimizer_from(cfg, flags.seed);
    SparseShiftResult res;
    if (personalize_cmd->parsed()) {
      if (row_index < 0 || row_index >= r.raw.rows())
        throw std::invalid_argument("--row out of range");
      res = personalized_intervention(
          r.model, r.std_data.covariates.row(row_index).transpose(), c, opt);
    } else {
      res = sparse_shift(r.model, GainContext::population(r.std_data), c, opt);
    }
    std::cout << shift_result_json(r, res).dump(2) << '\n';
    return 0;
  }

  if (covfix_cmd->parsed()) {
    RebuiltModel r = rebuild(model_path, data_path);
    const Eigen::Index d = r.raw.dim();
    Eigen::MatrixXd ranges(d, 2);
    for (Eigen::Index s = 0; s < d; ++s) {
      double lo, hi;
      if (covfix_cmd->count("--box")) {
        lo = -box;
        hi = box;
      } else {
        lo = r.raw.covariates.col(s).minCoeff();
        hi = r.raw.covariates.col(s).maxCoeff();
      }
      ranges(s, 0) = (lo - r.file.scaling.means[s]) / r.file.scaling.scales[s];
      ranges(s, 1) = (hi - r.file.scaling.means[s]) / r.file.scaling.scales[s];
    }
    const int k = flags.k < 0 ? static_cast<int>(d) : flags.k;
    const OptimizerSettings opt = optimizer_from(cfg, flags.seed);
    const CovfixResult res = forward_stepwise_covfix(r.model, r.std_data, k,
                                                     ranges, flags.alpha, opt);
    std::cout << covfix_result_json(r, res).dump(2) << '\n';
    return 0;
  }

  if (rank_cmd->parsed()) {
    RebuiltModel r = rebuild(model_path, data_path);
    const Eigen::Index d = r.raw.dim();
    const Eigen::VectorXd scales = r.file.scaling.scales.head(d);
    const nlohmann::json list = read_json_file(candidates_path);
    if (!list.is_array())
      throw std::invalid_argument("candidates file must hold a JSON array");
    std::vector<Transformation> std_candidates;
    std::vector<Transformation> orig_candidates;
    for (const nlohmann::json& j : list) {
      Transformation t = Transformation::from_json(j, d);
      orig_candidates.push_back(t);
      if (t.kind == Transformation::Kind::Shift) {
        std_candidates.push_back(
            Transformation::shift_by(t.shift.cwiseQuotient(scales)));
      } else {
        Eigen::VectorXd z(t.fix_values.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          const int s = t.fix_set[static_cast<std::size_t>(i)];
          z[i] = (t.fix_values[i] - r.file.scaling.means[s]) /
                 r.file.scaling.scales[s];
        }
        std_candidates.push_back(Transformation::fix(t.fix_set, z, d));
      }
    }
    const std::vector<RankedCandidate> ranked =
        rank_candidates(r.model, r.std_data, std_candidates, flags.alpha);
    nlohmann::json out = nlohmann::json::array();
    for (const RankedCandidate& rc : ranked) {
      out.push_back(
          {{"rank", out.size()},
           {"candidate_index", rc.original_index},
           {"expected_outcome_change", rc.score * r.outcome_scale},
           {"do_not_intervene", rc.do_not_intervene},
           {"transformation",
            orig_candidates[static_cast<std::size_t>(rc.original_index)]
                .to_json()}});
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  }

  if (simulate_cmd->parsed()) {
    SimConfig sc = SimConfig::from_json(cfg);
    if (app.count("--seed")) sc.seed = flags.seed;
    if (app.count("--alpha")) sc.alphas = {flags.alpha};
    if (app.count("--k")) sc.cardinality_k = flags.k;
    emit_report(run_simulation(sc), flags);
    return 0;
  }

  if (sem_cmd->parsed()) {
    SemStudyConfig sc = SemStudyConfig::from_json(cfg);
    if (app.count("--seed")) sc.seed = flags.seed;
    if (app.count("--alpha")) sc.alpha = flags.alpha;
    if (app.count("--k")) sc.cardinality_k = flags.k;
    emit_report(run_sem_study(sc), flags);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const intervene::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
