#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codeal/estimators.hpp"
#include "codeal/panel.hpp"
#include "codeal/types.hpp"

namespace codeal {

enum class DesignKind { kFourBlock, kStaggered };
enum class FactorKind { kLinear, kSine, kPolynomial, kReluMlp };
enum class DgpCovariateKind {
  kNone,
  kMatrixLinear,
  kVectorLinear,
  kTanh,
  kPoly,
  kLog,
  kRelu
};

struct DgpConfig {
  Index units = 100;          // N
  Index periods = 200;        // T
  Index control_units = 50;   // N1, four-block only
  Index pre_periods = 100;    // T1, four-block only
  Index covariate_dim = 3;    // P
  Index factor_dim = 4;       // K
  DesignKind design = DesignKind::kFourBlock;
  int staggered_groups = 5;   // r, staggered only
  FactorKind factor_kind = FactorKind::kLinear;
  DgpCovariateKind covariate_kind = DgpCovariateKind::kNone;
  double noise_sd = 0.5;
  double tau_mean = 12.0;
  // Variance, not standard deviation. The effect distribution is kept
  // configurable because either reading is defensible.
  double tau_variance = 5.0;
  std::uint64_t seed = 0;
};

// A generated panel together with every latent piece that produced it:
//   Y = factor_component + covariate_component + tau * 1{W = 1} + noise
// holds elementwise, exactly.
struct SimulatedPanel {
  PanelDataset panel;
  Matrix factor_component;     // phi_i(F_t)
  Matrix covariate_component;  // g_t(X_i), zero when no covariate effect
  Vector tau;                  // unit effects, drawn for every unit
  Matrix noise;
};

SimulatedPanel generate(const DgpConfig& config);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
};

// Error of imputed counterfactuals against the known effects: per treated
// cell the deviation is Y_it - imputed_it - tau_i, aggregated as mean
// absolute value and mean square over all treated cells.
Metrics metrics(const PanelDataset& panel, const Vector& tau,
                const Matrix& imputed);
inline Metrics metrics(const SimulatedPanel& truth, const Matrix& imputed) {
  return metrics(truth.panel, truth.tau, imputed);
}

struct ExperimentEstimator {
  std::string name;
  EstimatorConfig config;
};

struct ExperimentRow {
  std::string estimator;
  std::vector<double> mae_reps;
  std::vector<double> mse_reps;
  double mae_mean = 0.0;
  double mae_se = 0.0;  // NaN when replications == 1
  double mse_mean = 0.0;
  double mse_se = 0.0;
};

struct ExperimentResult {
  DgpConfig config;
  int replications = 0;
  std::vector<ExperimentRow> rows;  // one per estimator, input order
};

// Replication k generates a panel from seed + k and scores every estimator
// on it, so estimators always face identical data within a replication.
// Replications run in parallel when threads > 1 without changing any value.
ExperimentResult run_experiment(const DgpConfig& config,
                                const std::vector<ExperimentEstimator>& estimators,
                                int replications, int threads = 1);

}  // namespace codeal
