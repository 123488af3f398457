#pragma once

#include <Eigen/Dense>
#include <vector>

#include "intervene/dataset.hpp"

namespace intervene {

// Which way a proposed covariate would be pushed; a candidate only qualifies
// when moving it that way raises the outcome (Down suits knockdown-style
// actions, where a negative coefficient is the beneficial one).
enum class InterventionDirection { Up, Down };

struct LinearTestSummary {
  int index = -1;           // covariate column
  double coefficient = 0.0;
  double std_error = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;  // after the method's multiple-testing rule
};

struct BaselinePickerReport {
  struct Method {
    std::vector<LinearTestSummary> tests;  // candidate order
    int proposed = -1;  // best qualifying covariate, -1 for no proposal
  };
  Method multivariate;  // joint least squares, per-coefficient t-tests at 0.05
  Method marginal;      // one regression per covariate, Benjamini-Hochberg FDR
};

// The two linear-regression reference methods: each proposes the single
// candidate with the largest |t| among those significant with a coefficient
// sign that benefits the requested direction, or nothing.  The multivariate
// variant needs n > candidates + 1 rows and a full-rank design.
BaselinePickerReport baseline_linear_pickers(const Dataset& data,
                                             const std::vector<int>& candidates,
                                             InterventionDirection direction,
                                             double level = 0.05);

// Benjamini-Hochberg step-up: marks which p-values survive at the given false
// discovery rate.  Exposed for direct testing.
std::vector<char> benjamini_hochberg(const std::vector<double>& p_values,
                                     double fdr);

}  // namespace intervene
