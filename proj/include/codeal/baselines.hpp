#pragma once

#include <cstdint>
#include <vector>

#include "codeal/types.hpp"

namespace codeal {

// Difference-in-differences on a block layout: rows below control_rows and
// columns past pre_periods form the treated corner. Every cell gets
//   rowPreMean_i + colControlMean_t - grandControlPreMean,
// which reproduces additive panels exactly.
Matrix did_impute(const Matrix& outcomes, Index control_rows,
                  Index pre_periods);

struct VertRegConfig {
  // Ridge penalty on the control coefficients (the intercept is free).
  // Negative selects the penalty per unit by leave-one-out cross-validation
  // over the pre-periods.
  double ridge = -1.0;
};

// Vertical regression: each treated row's pre-period outcomes are regressed
// on the control rows' pre-period outcomes plus an intercept, then the fit is
// propagated through the post periods. Control rows pass through unchanged.
Matrix vertical_regression_impute(const Matrix& outcomes, Index control_rows,
                                  Index pre_periods,
                                  const VertRegConfig& config = {});

struct McNnmConfig {
  // Negative selects lambda on a log-spaced grid by holdout validation.
  double lambda = -1.0;
  int max_iterations = 500;
  double tolerance = 1e-9;
  int grid_size = 10;
  double holdout_fraction = 0.1;
  // Anneal from a large penalty down to the target with warm starts before
  // the final fit. Small penalties converge far faster this way; disable only
  // to study a single cold-started run.
  bool warm_start_path = true;
};

struct McNnmResult {
  Matrix completed;       // low_rank + row_effects + col_effects everywhere
  Matrix low_rank;
  Vector row_effects;
  Vector col_effects;
  double lambda = 0.0;
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
};

// Matrix completion with additive row/column effects and a nuclear-norm
// penalized residual, minimizing
//   0.5 * sum_observed (Y - a_i - b_t - L_it)^2 + lambda * ||L||_* .
// missing marks cells excluded from the fit (1 = missing). Non-convergence
// within max_iterations is reported through the converged flag; the last
// iterate is returned since the objective never increases. The seed drives
// only the holdout split used for lambda selection.
McNnmResult mc_nnm_impute(const Matrix& outcomes, const IntMatrix& missing,
                          const McNnmConfig& config = {}, uint64_t seed = 0);

}  // namespace codeal
