#pragma once

#include <vector>

#include "codeal/net.hpp"
#include "codeal/rng.hpp"
#include "codeal/types.hpp"

namespace codeal {

enum class CovariateKind { kNone, kLinear, kDnn };

struct CovariateConfig {
  CovariateKind kind = CovariateKind::kDnn;
  std::vector<Index> hidden = {32, 32};  // dnn hidden layer widths
  TrainConfig training;
  double ridge = 0.0;        // linear only; the intercept is never penalized
  bool shared_trunk = false; // dnn only: one network over (x, t) pairs
  double output_bound = kUnbounded;
  double weight_bound = kUnbounded;
  int threads = 1;
};

// Period-wise covariate effect estimates. predictions(i, t) approximates the
// covariate contribution g_t(X_i) for every cell, fitted on control cells
// only. With kind none, or when the panel has no covariates, predictions are
// identically zero.
struct CovariateModel {
  Matrix predictions;
  CovariateKind kind = CovariateKind::kNone;

  Matrix adjust(const Matrix& outcomes) const { return outcomes - predictions; }
  Matrix restore(const Matrix& adjusted) const { return adjusted + predictions; }
};

// Fits one predictor per period on the units with treatment == 0 at that
// period. outcomes and treatment are N x T, covariates N x P. Covariate
// columns are standardized internally before fitting.
CovariateModel fit_covariates(const Matrix& outcomes,
                              const IntMatrix& treatment,
                              const Matrix& covariates,
                              const CovariateConfig& config,
                              const SeedSequence& seeds);

}  // namespace codeal
