#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "intervene/gain.hpp"
#include "intervene/gp.hpp"
#include "intervene/optimize.hpp"
#include "intervene/sem.hpp"

namespace intervene {

// Known generating functions for the synthetic suites; covariates draw i.i.d.
// Unif[-1,1] and the outcome adds Gaussian noise.
enum class Relationship { Linear37, QuadraticBowl, Product };

enum class InterventionType { Personalized, PopulationShift, CovariateFixing };

// standard = plain proximal ascent (schedule {1}); smoothed = the full
// continuation schedule.
enum class MethodKind { Standard, Smoothed };

std::string relationship_name(Relationship r);
Relationship relationship_from(const std::string& name);
std::string intervention_name(InterventionType t);
InterventionType intervention_from(const std::string& name);
std::string method_name(MethodKind m);
MethodKind method_from(const std::string& name);

struct SimConfig {
  Relationship relationship = Relationship::Linear37;
  InterventionType intervention = InterventionType::Personalized;
  Eigen::Index d = 10;
  std::vector<Eigen::Index> n_grid{400};
  int trials = 20;
  double noise_sd = 0.2;
  double box_half_width = 1.0;  // per-covariate bound, original units
  int cardinality_k = 2;
  std::vector<double> alphas{0.05, 0.5};
  std::vector<MethodKind> methods{MethodKind::Standard, MethodKind::Smoothed};
  std::uint64_t seed = 0;
  FitConfig fit;
  OptimizerSettings optimizer;

  void validate() const;
  nlohmann::json to_json() const;
  static SimConfig from_json(const nlohmann::json& j);
};

struct TrialRecord {
  int trial = 0;
  Eigen::Index n = 0;
  double alpha = 0.0;
  MethodKind method = MethodKind::Standard;
  double improvement = 0.0;  // true expected outcome change, original units
  bool harmful = false;      // improvement < 0
  std::vector<int> support;  // moved/fixed covariates, 0-based ascending
  bool support_correct = false;
  double best_possible = 0.0;  // analytic optimum for this trial
  double claimed_score = 0.0;  // model's standardized quantile value
  bool intervened = false;
};

struct TrialFailure {
  int trial = 0;
  Eigen::Index n = 0;
  std::string message;
};

struct SimCell {
  Eigen::Index n = 0;
  double alpha = 0.0;
  MethodKind method = MethodKind::Standard;
  int trials = 0;
  double mean_improvement = 0.0;
  double q05_improvement = 0.0;  // lower 5% order statistic
  int harmful_count = 0;
  double support_recovery_rate = 0.0;
  double mean_best_possible = 0.0;
};

struct SimReport {
  std::vector<TrialRecord> records;
  std::vector<TrialFailure> failures;
  std::vector<SimCell> cells;
  std::uint64_t seed = 0;
  double duration_seconds = 0.0;
  nlohmann::json config;  // provenance snapshot of the run configuration
};

// Full synthetic suite: per trial generate data, fit once, then solve the
// configured intervention for every (alpha, method) pair on the shared fit.
// Deterministic given the seed; fit failures are recorded, not fatal.
SimReport run_simulation(const SimConfig& config);

// Exactly: trial,n,alpha,method,improvement,harmful,support with support as
// |-joined 1-based indices.
void write_trials_csv(const std::vector<TrialRecord>& records, std::ostream& os);
void write_trials_csv(const std::vector<TrialRecord>& records,
                      const std::string& path);
std::vector<TrialRecord> load_trials_csv(std::istream& is);
std::vector<TrialRecord> load_trials_csv_file(const std::string& path);

// Group records by (n, alpha, method) in first-seen order and recompute every
// cell statistic from scratch.
std::vector<SimCell> aggregate(const std::vector<TrialRecord>& records);

nlohmann::json summary_json(const SimReport& report);

// Misspecification study: data comes from a linear non-Gaussian SEM, the GP
// pipeline proposes a 1-sparse (or k-sparse) shift, and the proposal is scored
// with the exact do-operation against the analytic single-shift optimum.
struct SemStudyConfig {
  std::optional<nlohmann::json> sem;  // explicit model; absent = random per trial
  Eigen::Index d = 6;                 // random-model size
  double density = 0.3;               // random-model edge probability
  std::vector<Eigen::Index> n_grid{500};
  int trials = 20;
  double shift_bound_sd = 1.0;  // per-covariate cap in marginal-sd multiples
  int cardinality_k = 1;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  FitConfig fit;
  OptimizerSettings optimizer;

  void validate() const;
  nlohmann::json to_json() const;
  static SemStudyConfig from_json(const nlohmann::json& j);
};

SimReport run_sem_study(const SemStudyConfig& config);

}  // namespace intervene
