#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "codeal/errors.hpp"
#include "codeal/estimators.hpp"
#include "codeal/rng.hpp"

using namespace codeal;

namespace {

IntMatrix indicator_from_adoption(const std::vector<int>& adoption, Index t) {
  IntMatrix w = IntMatrix::Zero(static_cast<Index>(adoption.size()), t);
  for (std::size_t i = 0; i < adoption.size(); ++i) {
    for (Index s = 0; s < t; ++s) {
      if (adoption[i] != kNeverTreated && static_cast<int>(s) >= adoption[i]) {
        w(static_cast<Index>(i), s) = 1;
      }
    }
  }
  return w;
}

std::vector<std::string> numbered(const char* prefix, Index n) {
  std::vector<std::string> labels;
  for (Index i = 0; i < n; ++i) {
    labels.push_back(prefix + std::to_string(i));
  }
  return labels;
}

// Additive panel with a constant effect of 3 added to treated cells. The
// untreated outcome a_i + b_t is reproduced exactly by row/column means.
PanelDataset additive_panel(const std::vector<int>& adoption, Index t) {
  const Index n = static_cast<Index>(adoption.size());
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.outcomes.resize(n, t);
  Rng rng(99);
  Vector a(n), b(t);
  for (Index i = 0; i < n; ++i) a(i) = rng.normal(0.0, 2.0);
  for (Index s = 0; s < t; ++s) b(s) = rng.normal(1.0, 1.5);
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t; ++s) {
      p.outcomes(i, s) = a(i) + b(s) + 3.0 * p.treatment(i, s);
    }
  }
  p.covariates.resize(n, 0);
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);
  return p;
}

}  // namespace

TEST_CASE("driver imputes exactly the treated cells and keeps the rest") {
  const std::vector<int> adoption = {kNeverTreated, kNeverTreated, 8, 8,
                                     6,             4,             4, 2};
  PanelDataset p = additive_panel(adoption, 12);
  EstimatorConfig config;
  config.kind = EstimatorKind::kDid;
  config.covariate.kind = CovariateKind::kNone;
  ImputationResult result = run_estimator(p, config, SeedSequence(1));

  for (Index i = 0; i < p.units(); ++i) {
    for (Index s = 0; s < p.periods(); ++s) {
      if (p.treatment(i, s) == 0) {
        CHECK(result.counterfactuals(i, s) == p.outcomes(i, s));
        CHECK(result.provenance_xi(i, s) == 0);
        CHECK(result.provenance_eta(i, s) == 0);
      } else {
        CHECK(result.provenance_xi(i, s) >= 2);
        CHECK(result.provenance_eta(i, s) >= 1);
      }
    }
  }

  SUBCASE("every treated cell came from the block that contains it") {
    // The panel above is already sorted, so block boundaries can be read off
    // the partition directly.
    SortedPanel sorted = validate_and_sort(p);
    BlockPartition partition = extract_block_partition(sorted.panel.treatment);
    for (Index i = 0; i < p.units(); ++i) {
      for (Index s = 0; s < p.periods(); ++s) {
        if (p.treatment(i, s) == 0) continue;
        const int xi = result.provenance_xi(i, s);
        const int eta = result.provenance_eta(i, s);
        CHECK(partition.is_treated(xi, eta));
        CHECK(partition.group_row_begin(xi) <= i);
        CHECK(i < partition.group_row_begin(xi + 1));
        CHECK(partition.segment_col_begin(eta) <= s);
        CHECK(s < partition.segment_col_begin(eta + 1));
      }
    }
  }

  SUBCASE("one subproblem per treated block, none repeated") {
    SortedPanel sorted = validate_and_sort(p);
    BlockPartition partition = extract_block_partition(sorted.panel.treatment);
    CHECK(result.subproblems.size() == partition.treated_blocks.size());
    std::set<std::pair<int, int>> seen;
    for (const SubproblemInfo& info : result.subproblems) {
      CHECK(partition.is_treated(info.xi0, info.eta0));
      CHECK(seen.insert({info.xi0, info.eta0}).second);
    }
  }
}

TEST_CASE("difference in differences is exact on additive panels end to end") {
  const std::vector<int> adoption = {kNeverTreated, kNeverTreated, kNeverTreated,
                                     9, 9, 6, 6, 6, 3, 3};
  PanelDataset p = additive_panel(adoption, 12);
  EstimatorConfig config;
  config.kind = EstimatorKind::kDid;
  config.covariate.kind = CovariateKind::kNone;
  ImputationResult result = run_estimator(p, config, SeedSequence(7));

  for (Index i = 0; i < p.units(); ++i) {
    for (Index s = 0; s < p.periods(); ++s) {
      if (p.treatment(i, s) == 1) {
        CHECK(result.counterfactuals(i, s) ==
              doctest::Approx(p.outcomes(i, s) - 3.0).epsilon(1e-10));
      }
    }
    if (adoption[static_cast<std::size_t>(i)] == kNeverTreated) {
      CHECK_FALSE(result.att.has(i));
      CHECK(std::isnan(result.att.per_unit[static_cast<std::size_t>(i)]));
    } else {
      CHECK(result.att.has(i));
      CHECK(result.att.treated_period_counts[static_cast<std::size_t>(i)] ==
            12 - adoption[static_cast<std::size_t>(i)]);
      CHECK(result.att.per_unit[static_cast<std::size_t>(i)] ==
            doctest::Approx(3.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("vertical regression recovers linear-combination structure") {
  // Treated rows are exact linear combinations of the controls plus an
  // intercept, which an unpenalized fit reproduces everywhere.
  const Index n = 8, t = 14;
  const std::vector<int> adoption = {kNeverTreated, kNeverTreated, kNeverTreated,
                                     kNeverTreated, 9, 9, 9, 9};
  Rng rng(41);
  Matrix controls(4, t);
  for (Index i = 0; i < 4; ++i) {
    for (Index s = 0; s < t; ++s) controls(i, s) = rng.normal();
  }
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.outcomes.resize(n, t);
  p.outcomes.topRows(4) = controls;
  Matrix truth(4, t);
  for (Index i = 0; i < 4; ++i) {
    Vector beta(4);
    for (Index j = 0; j < 4; ++j) beta(j) = rng.normal();
    const double intercept = rng.normal();
    truth.row(i) =
        (beta.transpose() * controls).array() + intercept;
  }
  for (Index i = 0; i < 4; ++i) {
    for (Index s = 0; s < t; ++s) {
      p.outcomes(4 + i, s) = truth(i, s) + 2.5 * p.treatment(4 + i, s);
    }
  }
  p.covariates.resize(n, 0);
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);

  EstimatorConfig config;
  config.kind = EstimatorKind::kVertReg;
  config.covariate.kind = CovariateKind::kNone;
  config.vert_reg.ridge = 0.0;
  ImputationResult result = run_estimator(p, config, SeedSequence(2));
  for (Index i = 0; i < 4; ++i) {
    for (Index s = 9; s < t; ++s) {
      CHECK(result.counterfactuals(4 + i, s) ==
            doctest::Approx(truth(i, s)).epsilon(1e-7));
    }
    CHECK(result.att.per_unit[static_cast<std::size_t>(4 + i)] ==
          doctest::Approx(2.5).epsilon(1e-7));
  }
}

TEST_CASE("covariate removal and add-back round the counterfactual trip") {
  // Outcomes are purely covariate-driven, so the period-wise linear stage
  // explains everything and the block imputer only has to predict zeros.
  const Index n = 12, t = 10, pdim = 2;
  std::vector<int> adoption(static_cast<std::size_t>(n), kNeverTreated);
  for (std::size_t i = 6; i < 9; ++i) adoption[i] = 7;
  for (std::size_t i = 9; i < 12; ++i) adoption[i] = 4;
  Rng rng(55);
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.covariates.resize(n, pdim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < pdim; ++j) p.covariates(i, j) = rng.normal();
  }
  Matrix beta(pdim, t);
  Vector intercepts(t);
  for (Index s = 0; s < t; ++s) {
    for (Index j = 0; j < pdim; ++j) beta(j, s) = rng.normal();
    intercepts(s) = rng.normal(0.0, 0.5);
  }
  Matrix clean = p.covariates * beta;
  clean.rowwise() += intercepts.transpose();
  p.outcomes = clean + 5.0 * p.treatment.cast<double>();
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);

  EstimatorConfig config;
  config.kind = EstimatorKind::kDid;
  config.covariate.kind = CovariateKind::kLinear;
  ImputationResult result = run_estimator(p, config, SeedSequence(3));

  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t; ++s) {
      if (p.treatment(i, s) == 1) {
        CHECK(result.counterfactuals(i, s) ==
              doctest::Approx(clean(i, s)).epsilon(1e-8));
      }
    }
  }
  CHECK(aggregate_att(result.att, p) == doctest::Approx(5.0).epsilon(1e-8));
  // The fitted covariate surface itself reproduces the clean outcomes.
  for (Index s = 0; s < t; ++s) {
    CHECK(result.covariate_predictions(0, s) ==
          doctest::Approx(clean(0, s)).epsilon(1e-8));
  }
}

TEST_CASE("unit order of the input does not change the estimates") {
  const std::vector<int> adoption = {kNeverTreated, kNeverTreated, 8, 8,
                                     6,             4,             4, 2};
  PanelDataset base = additive_panel(adoption, 12);

  // Reverse the rows; labels travel with their units.
  const Index n = base.units();
  PanelDataset shuffled = base;
  for (Index i = 0; i < n; ++i) {
    shuffled.outcomes.row(i) = base.outcomes.row(n - 1 - i);
    shuffled.treatment.row(i) = base.treatment.row(n - 1 - i);
    shuffled.unit_labels[static_cast<std::size_t>(i)] =
        base.unit_labels[static_cast<std::size_t>(n - 1 - i)];
  }

  EstimatorConfig config;
  config.kind = EstimatorKind::kDid;
  config.covariate.kind = CovariateKind::kNone;
  ImputationResult first = run_estimator(base, config, SeedSequence(11));
  ImputationResult second = run_estimator(shuffled, config, SeedSequence(11));

  for (Index i = 0; i < n; ++i) {
    const Index j = n - 1 - i;
    CHECK(first.att.treated_period_counts[static_cast<std::size_t>(i)] ==
          second.att.treated_period_counts[static_cast<std::size_t>(j)]);
    for (Index s = 0; s < base.periods(); ++s) {
      CHECK(first.counterfactuals(i, s) ==
            doctest::Approx(second.counterfactuals(j, s)).epsilon(1e-12));
      CHECK(first.provenance_xi(i, s) == second.provenance_xi(j, s));
      CHECK(first.provenance_eta(i, s) == second.provenance_eta(j, s));
    }
  }
}

TEST_CASE("factor model imputation recovers a low-rank panel") {
  // Rank-2 outcomes with a single treated corner. The multi-decoder model
  // should track each unit's loadings; tolerances stay loose because this is
  // a smoke test of the full pipeline rather than of the network itself.
  const Index n = 20, t = 40, n1 = 10, t1 = 20;
  Rng rng(17);
  Matrix loadings(n, 2), factors(2, t);
  for (Index i = 0; i < n; ++i) {
    loadings(i, 0) = rng.normal();
    loadings(i, 1) = rng.normal();
  }
  for (Index s = 0; s < t; ++s) {
    factors(0, s) = rng.normal();
    factors(1, s) = rng.normal();
  }
  Matrix clean = loadings * factors;
  std::vector<int> adoption(static_cast<std::size_t>(n), kNeverTreated);
  for (std::size_t i = static_cast<std::size_t>(n1); i < adoption.size(); ++i) {
    adoption[i] = static_cast<int>(t1);
  }
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.outcomes = clean + 3.0 * p.treatment.cast<double>();
  p.covariates.resize(n, 0);
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);

  EstimatorConfig config;
  config.kind = EstimatorKind::kCodeal;
  config.covariate.kind = CovariateKind::kNone;
  config.autoencoder.code_dim = 2;
  config.autoencoder.training.epochs = 1500;
  config.autoencoder.training.adam.learning_rate = 5e-3;
  ImputationResult result = run_estimator(p, config, SeedSequence(5));

  CHECK(result.subproblems.size() == 1);
  CHECK(result.subproblems[0].xi0 == 2);
  CHECK(result.subproblems[0].eta0 == 2);
  CHECK(std::isfinite(result.subproblems[0].final_loss));

  double err = 0.0, scale = 0.0;
  for (Index i = n1; i < n; ++i) {
    for (Index s = t1; s < t; ++s) {
      err += std::abs(result.counterfactuals(i, s) - clean(i, s));
      scale += std::abs(clean(i, s));
    }
  }
  CHECK(err / scale < 0.25);
  CHECK(aggregate_att(result.att, p) == doctest::Approx(3.0).epsilon(0.15));

  SUBCASE("the shared-decoder variant predicts one value per period") {
    EstimatorConfig shared = config;
    shared.kind = EstimatorKind::kSingleAe;
    shared.autoencoder.training.epochs = 200;
    ImputationResult pooled = run_estimator(p, shared, SeedSequence(5));
    for (Index s = t1; s < t; ++s) {
      for (Index i = n1 + 1; i < n; ++i) {
        CHECK(pooled.counterfactuals(i, s) ==
              doctest::Approx(pooled.counterfactuals(n1, s)).epsilon(1e-12));
      }
    }
    // The per-unit model is free to differ across units.
    bool varies = false;
    for (Index i = n1 + 1; i < n && !varies; ++i) {
      varies = std::abs(result.counterfactuals(i, t1) -
                        result.counterfactuals(n1, t1)) > 1e-6;
    }
    CHECK(varies);
  }
}

TEST_CASE("restarted fits average into the imputation") {
  // Pins the substream contract: restart r of block (xi, eta) draws from
  // streams ("ae-init"/"ae-fit", xi, eta | r << 32), so restarts = 1 keeps
  // the original single-fit streams.
  const Index n = 12, t = 10, n1 = 8, t1 = 6;
  Rng rng(31);
  Matrix clean(n, t);
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t; ++s) clean(i, s) = rng.normal();
  }
  std::vector<int> adoption(static_cast<std::size_t>(n), kNeverTreated);
  for (std::size_t i = static_cast<std::size_t>(n1); i < adoption.size(); ++i) {
    adoption[i] = static_cast<int>(t1);
  }
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.outcomes = clean + 2.0 * p.treatment.cast<double>();
  p.covariates.resize(n, 0);
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);

  EstimatorConfig config;
  config.kind = EstimatorKind::kCodeal;
  config.covariate.kind = CovariateKind::kNone;
  config.autoencoder.code_dim = 2;
  config.autoencoder.training.epochs = 40;
  config.autoencoder.restarts = 2;
  const SeedSequence seeds(77);
  const ImputationResult averaged = run_estimator(p, config, seeds);

  const BlockPartition partition = extract_block_partition(p.treatment);
  const FourBlockView view =
      build_four_block(p.outcomes, p.covariates, partition, 2, 2);
  AeConfig ae_config = config.autoencoder;
  ae_config.shared_decoder = false;
  Matrix mean = Matrix::Zero(view.rows(), view.cols());
  for (int r = 0; r < 2; ++r) {
    const std::uint64_t slot = 2ull | (static_cast<std::uint64_t>(r) << 32);
    FactorAutoencoder ae(view.rows(), ae_config);
    Rng init_rng = seeds.stream("ae-init", 2, slot);
    ae.init(init_rng);
    Rng fit_rng = seeds.stream("ae-fit", 2, slot);
    ae.fit(view.outcomes, view.indicator, fit_rng);
    mean += ae.reconstruct(view.outcomes);
  }
  mean /= 2.0;
  for (Index i = n1; i < n; ++i) {
    for (Index s = t1; s < t; ++s) {
      CHECK(averaged.counterfactuals(i, s) == mean(i, s));
    }
  }

  // One restart reproduces the unaveraged estimate.
  EstimatorConfig single = config;
  single.autoencoder.restarts = 1;
  const ImputationResult plain = run_estimator(p, single, seeds);
  FactorAutoencoder ae(view.rows(), ae_config);
  Rng init_rng = seeds.stream("ae-init", 2, 2);
  ae.init(init_rng);
  Rng fit_rng = seeds.stream("ae-fit", 2, 2);
  ae.fit(view.outcomes, view.indicator, fit_rng);
  const Matrix solo = ae.reconstruct(view.outcomes);
  bool differs_from_average = false;
  for (Index i = n1; i < n; ++i) {
    for (Index s = t1; s < t; ++s) {
      CHECK(plain.counterfactuals(i, s) == solo(i, s));
      if (plain.counterfactuals(i, s) != averaged.counterfactuals(i, s)) {
        differs_from_average = true;
      }
    }
  }
  CHECK(differs_from_average);
}

TEST_CASE("whole-panel matrix completion fills the treated region") {
  const Index n = 24, t = 30;
  Rng rng(23);
  Vector a(n), b(t), u(n), v(t);
  for (Index i = 0; i < n; ++i) {
    a(i) = rng.normal(0.0, 1.0);
    u(i) = rng.normal();
  }
  for (Index s = 0; s < t; ++s) {
    b(s) = rng.normal(0.0, 1.0);
    v(s) = rng.normal();
  }
  Matrix clean = u * v.transpose();
  clean.colwise() += a;
  clean.rowwise() += b.transpose();

  std::vector<int> adoption(static_cast<std::size_t>(n), kNeverTreated);
  for (std::size_t i = 16; i < 24; ++i) adoption[i] = 20;
  PanelDataset p;
  p.treatment = indicator_from_adoption(adoption, t);
  p.outcomes = clean + 4.0 * p.treatment.cast<double>();
  p.covariates.resize(n, 0);
  p.unit_labels = numbered("u", n);
  p.period_labels = numbered("t", t);

  EstimatorConfig config;
  config.kind = EstimatorKind::kMcNnm;
  config.covariate.kind = CovariateKind::kNone;
  config.mc_nnm.lambda = 1e-3;
  config.mc_nnm.max_iterations = 4000;
  ImputationResult result = run_estimator(p, config, SeedSequence(9));

  CHECK(result.subproblems.size() == 1);
  CHECK(result.subproblems[0].xi0 == -1);
  CHECK(result.subproblems[0].converged);
  double err = 0.0, scale = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t; ++s) {
      if (p.treatment(i, s) == 1) {
        CHECK(result.provenance_xi(i, s) == -1);
        CHECK(result.provenance_eta(i, s) == -1);
        err += std::abs(result.counterfactuals(i, s) - clean(i, s));
        scale += std::abs(clean(i, s));
      } else {
        CHECK(result.provenance_xi(i, s) == 0);
        CHECK(result.counterfactuals(i, s) == p.outcomes(i, s));
      }
    }
  }
  CHECK(err / scale < 2e-2);
  CHECK(aggregate_att(result.att, p) == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("runs repeat bit for bit under one seed and move under another") {
  const std::vector<int> adoption = {kNeverTreated, kNeverTreated, 8, 8,
                                     6,             4,             4, 2};
  PanelDataset p = additive_panel(adoption, 12);
  EstimatorConfig config;
  config.kind = EstimatorKind::kCodeal;
  config.covariate.kind = CovariateKind::kNone;
  config.autoencoder.code_dim = 2;
  config.autoencoder.training.epochs = 60;

  ImputationResult one = run_estimator(p, config, SeedSequence(31));
  ImputationResult two = run_estimator(p, config, SeedSequence(31));
  ImputationResult other = run_estimator(p, config, SeedSequence(32));
  CHECK((one.counterfactuals - two.counterfactuals).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((one.counterfactuals - other.counterfactuals).cwiseAbs().maxCoeff() >
        0.0);
}
