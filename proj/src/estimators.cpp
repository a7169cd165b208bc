#include "codeal/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "codeal/errors.hpp"

namespace codeal {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Predictions for one four-block subproblem over the whole view. The caller
// copies out only the target block, so values elsewhere never matter.
Matrix impute_view(const FourBlockView& view, const EstimatorConfig& config,
                   const SeedSequence& seeds, SubproblemInfo& info) {
  switch (config.kind) {
    case EstimatorKind::kDid:
      return did_impute(view.outcomes, view.control_rows, view.pre_periods);
    case EstimatorKind::kVertReg:
      return vertical_regression_impute(view.outcomes, view.control_rows,
                                        view.pre_periods, config.vert_reg);
    case EstimatorKind::kCodeal:
    case EstimatorKind::kSingleAe: {
      AeConfig ae_config = config.autoencoder;
      ae_config.shared_decoder = config.kind == EstimatorKind::kSingleAe;
      const auto xi = static_cast<std::uint64_t>(view.xi0);
      const auto eta = static_cast<std::uint64_t>(view.eta0);
      const int restarts = std::max(1, ae_config.restarts);
      // Restart index in the upper half of the stream slot keeps the
      // single-fit streams unchanged.
      Matrix mean = Matrix::Zero(view.rows(), view.cols());
      double loss_sum = 0.0;
      int loss_count = 0;
      for (int r = 0; r < restarts; ++r) {
        const std::uint64_t slot =
            eta | (static_cast<std::uint64_t>(r) << 32);
        FactorAutoencoder ae(view.rows(), ae_config);
        Rng init_rng = seeds.stream("ae-init", xi, slot);
        ae.init(init_rng);
        Rng fit_rng = seeds.stream("ae-fit", xi, slot);
        TrainResult trained = ae.fit(view.outcomes, view.indicator, fit_rng);
        if (!trained.loss_trace.empty()) {
          loss_sum += trained.loss_trace.back();
          ++loss_count;
        }
        mean += ae.reconstruct(view.outcomes);
      }
      mean /= static_cast<double>(restarts);
      if (loss_count > 0) {
        info.final_loss = loss_sum / static_cast<double>(loss_count);
      }
      return mean;
    }
    case EstimatorKind::kMcNnm:
      break;
  }
  throw UnknownEstimator("whole-panel estimator reached the block driver");
}

}  // namespace

ImputationResult run_estimator(const PanelDataset& panel,
                               const EstimatorConfig& config,
                               const SeedSequence& seeds) {
  SortedPanel sorted = validate_and_sort(panel);
  const PanelDataset& sp = sorted.panel;
  const Index n = sp.units();
  const Index t = sp.periods();

  CovariateModel covariate = fit_covariates(
      sp.outcomes, sp.treatment, sp.covariates, config.covariate, seeds);
  const Matrix adjusted = covariate.adjust(sp.outcomes);

  // Counterfactual in sorted order; observed cells keep their outcome and
  // treated cells are overwritten below.
  Matrix counterfactual = sp.outcomes;
  IntMatrix prov_xi = IntMatrix::Zero(n, t);
  IntMatrix prov_eta = IntMatrix::Zero(n, t);
  std::vector<SubproblemInfo> subproblems;

  if (config.kind == EstimatorKind::kMcNnm) {
    McNnmResult fit = mc_nnm_impute(adjusted, sp.treatment, config.mc_nnm,
                                    seeds.derive("mc-nnm"));
    for (Index i = 0; i < n; ++i) {
      for (Index s = 0; s < t; ++s) {
        if (sp.treatment(i, s) == 0) continue;
        counterfactual(i, s) = fit.completed(i, s) + covariate.predictions(i, s);
        prov_xi(i, s) = -1;
        prov_eta(i, s) = -1;
      }
    }
    SubproblemInfo info;
    info.xi0 = -1;
    info.eta0 = -1;
    info.rows = n;
    info.cols = t;
    info.final_loss =
        fit.objective_trace.empty() ? kNan : fit.objective_trace.back();
    info.converged = fit.converged;
    subproblems.push_back(info);
  } else {
    const BlockPartition partition = extract_block_partition(sp.treatment);
    for (const auto& [xi0, eta0] : partition.treated_blocks) {
      FourBlockView view =
          build_four_block(adjusted, sp.covariates, partition, xi0, eta0);
      SubproblemInfo info;
      info.xi0 = xi0;
      info.eta0 = eta0;
      info.rows = view.rows();
      info.cols = view.cols();
      info.final_loss = kNan;
      const Matrix predicted = impute_view(view, config, seeds, info);
      for (Index i = view.target_row_begin; i < view.target_row_end; ++i) {
        const Index pi = view.origin_rows[static_cast<std::size_t>(i)];
        for (Index s = view.target_col_begin; s < view.target_col_end; ++s) {
          const Index ps = view.origin_cols[static_cast<std::size_t>(s)];
          counterfactual(pi, ps) =
              predicted(i, s) + covariate.predictions(pi, ps);
          prov_xi(pi, ps) = xi0;
          prov_eta(pi, ps) = eta0;
        }
      }
      subproblems.push_back(info);
    }
  }

  const AttEstimate att = att_from_imputation(sp, counterfactual);

  // Everything above lives in sorted unit order; undo the permutation so the
  // caller sees rows in the order it supplied them.
  ImputationResult out;
  out.counterfactuals.resize(n, t);
  out.provenance_xi.resize(n, t);
  out.provenance_eta.resize(n, t);
  out.covariate_predictions.resize(n, t);
  out.att.per_unit.resize(static_cast<std::size_t>(n));
  out.att.treated_period_counts.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Index orig = sorted.permutation[static_cast<std::size_t>(k)];
    out.counterfactuals.row(orig) = counterfactual.row(k);
    out.provenance_xi.row(orig) = prov_xi.row(k);
    out.provenance_eta.row(orig) = prov_eta.row(k);
    out.covariate_predictions.row(orig) = covariate.predictions.row(k);
    out.att.per_unit[static_cast<std::size_t>(orig)] =
        att.per_unit[static_cast<std::size_t>(k)];
    out.att.treated_period_counts[static_cast<std::size_t>(orig)] =
        att.treated_period_counts[static_cast<std::size_t>(k)];
  }
  out.subproblems = std::move(subproblems);
  return out;
}

}  // namespace codeal
