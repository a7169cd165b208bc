#pragma once

#include <vector>

#include "codeal/baselines.hpp"
#include "codeal/covariate.hpp"
#include "codeal/factor_ae.hpp"
#include "codeal/panel.hpp"
#include "codeal/rng.hpp"

namespace codeal {

enum class EstimatorKind { kCodeal, kSingleAe, kDid, kVertReg, kMcNnm };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kCodeal;
  CovariateConfig covariate;
  AeConfig autoencoder;  // codeal and single-ae
  VertRegConfig vert_reg;
  McNnmConfig mc_nnm;
};

struct SubproblemInfo {
  // Group and segment of the imputed target block; (-1, -1) marks a
  // whole-panel fit.
  int xi0 = 0;
  int eta0 = 0;
  Index rows = 0;
  Index cols = 0;
  double final_loss = 0.0;
  bool converged = true;
};

// Everything a counterfactual run produces, in the original unit order of
// the input panel.
struct ImputationResult {
  // Observed outcome on untreated cells, model prediction of the untreated
  // outcome on treated cells.
  Matrix counterfactuals;
  // 0 on observed cells; on imputed cells the group/segment of the
  // subproblem that produced the value, or -1 for whole-panel methods.
  IntMatrix provenance_xi;
  IntMatrix provenance_eta;
  AttEstimate att;
  Matrix covariate_predictions;
  std::vector<SubproblemInfo> subproblems;
};

// Estimates untreated counterfactuals for every treated cell of a staggered
// panel and derives per-unit treatment effects. Units may arrive in any
// order; results are mapped back to the input order.
ImputationResult run_estimator(const PanelDataset& panel,
                               const EstimatorConfig& config,
                               const SeedSequence& seeds);

}  // namespace codeal
