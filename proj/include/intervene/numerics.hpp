#pragma once

#include <stdexcept>

namespace intervene {

// Raised when a linear-algebra step cannot be completed (e.g. a Gram matrix
// stays indefinite after the jitter escalation).  Maps to CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inverse standard normal CDF, accurate to full double precision
// (Wichura's rational-minimax scheme).  Requires p in (0, 1).
double normal_quantile(double p);

// Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value for a Student-t statistic with nu degrees of freedom.
double student_t_two_sided_p(double t, double nu);

}  // namespace intervene
