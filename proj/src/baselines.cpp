#include "codeal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "codeal/errors.hpp"
#include "codeal/rng.hpp"

namespace codeal {

namespace {

void check_block_layout(const Matrix& outcomes, Index control_rows,
                        Index pre_periods) {
  if (control_rows < 1 || control_rows > outcomes.rows()) {
    throw EmptyControlSet(
        fmt::format("{} control rows in a {}-row matrix", control_rows,
                    outcomes.rows()));
  }
  if (pre_periods < 1 || pre_periods > outcomes.cols()) {
    throw InsufficientPrePeriods(
        fmt::format("{} pre-periods in a {}-column matrix", pre_periods,
                    outcomes.cols()));
  }
}

}  // namespace

Matrix did_impute(const Matrix& outcomes, Index control_rows,
                  Index pre_periods) {
  check_block_layout(outcomes, control_rows, pre_periods);
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();

  const Vector row_pre_mean =
      outcomes.leftCols(pre_periods).rowwise().mean();
  const Eigen::RowVectorXd col_control_mean =
      outcomes.topRows(control_rows).colwise().mean();
  const double grand =
      outcomes.topLeftCorner(control_rows, pre_periods).mean();

  Matrix imputed(n, t);
  for (Index s = 0; s < t; ++s) {
    imputed.col(s) =
        (row_pre_mean.array() + col_control_mean(s) - grand).matrix();
  }
  return imputed;
}

namespace {

// Leave-one-out mean squared error of ridge with hat matrix diag h and
// in-sample residuals r: e_k = r_k / (1 - h_k).
double loo_error(const Vector& residuals, const Vector& hat_diag) {
  double total = 0.0;
  for (Index k = 0; k < residuals.size(); ++k) {
    const double denom = 1.0 - hat_diag(k);
    if (denom <= 1e-12) return std::numeric_limits<double>::infinity();
    const double e = residuals(k) / denom;
    total += e * e;
  }
  return total / static_cast<double>(residuals.size());
}

}  // namespace

Matrix vertical_regression_impute(const Matrix& outcomes, Index control_rows,
                                  Index pre_periods,
                                  const VertRegConfig& config) {
  check_block_layout(outcomes, control_rows, pre_periods);
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();
  const Index p = control_rows;

  const bool auto_ridge = config.ridge < 0.0;
  if (auto_ridge && pre_periods < 2) {
    throw InsufficientPrePeriods(
        "leave-one-out selection needs at least two pre-periods");
  }

  // Design shared by every treated row: pre-period cross-sections of the
  // control rows, plus an intercept.
  Matrix design(pre_periods, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) =
      outcomes.topLeftCorner(control_rows, pre_periods).transpose();
  Matrix full_design(t, p + 1);
  full_design.col(0).setOnes();
  full_design.rightCols(p) = outcomes.topRows(control_rows).transpose();

  Matrix penalty = Matrix::Identity(p + 1, p + 1);
  penalty(0, 0) = 0.0;
  const Matrix gram = design.transpose() * design;

  std::vector<double> grid;
  if (auto_ridge) {
    // Log-spaced candidates scaled by the mean control-regressor energy.
    const double scale =
        std::max(gram.diagonal().tail(p).mean(), 1e-12);
    for (int k = -4; k <= 3; ++k) {
      grid.push_back(scale * std::pow(10.0, k));
    }
  } else {
    grid.push_back(config.ridge);
  }

  struct Solve {
    Matrix coefficient_map;  // (p+1) x pre_periods, beta = map * y_pre
    Vector hat_diag;
  };
  std::vector<Solve> solves;
  solves.reserve(grid.size());
  for (const double lambda : grid) {
    const Matrix system = gram + lambda * penalty;
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Matrix> qr(design);
      if (qr.rank() < p + 1) {
        throw RankDeficientDesign(
            "pre-period design is rank deficient; use a positive ridge");
      }
    }
    Solve s;
    s.coefficient_map = system.ldlt().solve(design.transpose());
    const Matrix hat = design * s.coefficient_map;
    s.hat_diag = hat.diagonal();
    solves.push_back(std::move(s));
  }

  Matrix imputed = outcomes;
  for (Index i = control_rows; i < n; ++i) {
    const Vector target = outcomes.row(i).head(pre_periods).transpose();
    std::size_t best = 0;
    if (auto_ridge) {
      double best_err = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const Vector beta = solves[g].coefficient_map * target;
        const Vector resid = target - design * beta;
        const double err = loo_error(resid, solves[g].hat_diag);
        if (err < best_err) {
          best_err = err;
          best = g;
        }
      }
    }
    const Vector beta = solves[best].coefficient_map * target;
    imputed.row(i) = (full_design * beta).transpose();
  }
  return imputed;
}

namespace {

struct FixedEffects {
  Vector row;
  Vector col;
};

// One Gauss-Seidel sweep: each effect is set to the mean residual over the
// observed cells it touches, rows first.
void update_effects(const Matrix& outcomes, const IntMatrix& missing,
                    const Matrix& low_rank, FixedEffects& fe) {
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();
  for (Index i = 0; i < n; ++i) {
    double sum = 0.0;
    long count = 0;
    for (Index s = 0; s < t; ++s) {
      if (missing(i, s) != 0) continue;
      sum += outcomes(i, s) - fe.col(s) - low_rank(i, s);
      ++count;
    }
    if (count > 0) fe.row(i) = sum / static_cast<double>(count);
  }
  for (Index s = 0; s < t; ++s) {
    double sum = 0.0;
    long count = 0;
    for (Index i = 0; i < n; ++i) {
      if (missing(i, s) != 0) continue;
      sum += outcomes(i, s) - fe.row(i) - low_rank(i, s);
      ++count;
    }
    if (count > 0) fe.col(s) = sum / static_cast<double>(count);
  }
}

double objective(const Matrix& outcomes, const IntMatrix& missing,
                 const FixedEffects& fe, const Matrix& low_rank,
                 double lambda, double nuclear_norm) {
  double sse = 0.0;
  for (Index s = 0; s < outcomes.cols(); ++s) {
    for (Index i = 0; i < outcomes.rows(); ++i) {
      if (missing(i, s) != 0) continue;
      const double d =
          outcomes(i, s) - fe.row(i) - fe.col(s) - low_rank(i, s);
      sse += d * d;
    }
  }
  return 0.5 * sse + lambda * nuclear_norm;
}

struct SoftImputeFit {
  Matrix low_rank;
  FixedEffects fe;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

SoftImputeFit soft_impute(const Matrix& outcomes, const IntMatrix& missing,
                          double lambda, const McNnmConfig& config,
                          const Matrix* warm_start) {
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();

  SoftImputeFit fit;
  fit.fe.row = Vector::Zero(n);
  fit.fe.col = Vector::Zero(t);
  fit.low_rank = warm_start ? *warm_start : Matrix::Zero(n, t);

  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    update_effects(outcomes, missing, fit.low_rank, fit.fe);

    // Residuals with missing cells filled by the current low-rank iterate,
    // then singular value shrinkage by exactly lambda.
    Matrix filled(n, t);
    for (Index s = 0; s < t; ++s) {
      for (Index i = 0; i < n; ++i) {
        filled(i, s) = missing(i, s) == 0
                           ? outcomes(i, s) - fit.fe.row(i) - fit.fe.col(s)
                           : fit.low_rank(i, s);
      }
    }
    Eigen::BDCSVD<Matrix> svd(filled,
                              Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector shrunk = svd.singularValues();
    double nuclear = 0.0;
    for (Index k = 0; k < shrunk.size(); ++k) {
      shrunk(k) = std::max(shrunk(k) - lambda, 0.0);
      nuclear += shrunk(k);
    }
    fit.low_rank =
        svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();

    const double obj =
        objective(outcomes, missing, fit.fe, fit.low_rank, lambda, nuclear);
    fit.trace.push_back(obj);
    fit.iterations = iter + 1;
    if (std::abs(prev - obj) <=
        config.tolerance * std::max(1.0, std::abs(obj))) {
      fit.converged = true;
      break;
    }
    prev = obj;
  }
  return fit;
}

double holdout_sse(const Matrix& outcomes, const SoftImputeFit& fit,
                   const std::vector<std::pair<Index, Index>>& holdout) {
  double sse = 0.0;
  for (const auto& [i, s] : holdout) {
    const double pred = fit.fe.row(i) + fit.fe.col(s) + fit.low_rank(i, s);
    const double d = outcomes(i, s) - pred;
    sse += d * d;
  }
  return sse;
}

// Top singular value of the zero-filled residual after a fixed-effect sweep,
// the scale reference for penalty grids and annealing paths.
double initial_sigma_max(const Matrix& outcomes, const IntMatrix& missing) {
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();
  FixedEffects fe{Vector::Zero(n), Vector::Zero(t)};
  const Matrix zero_l = Matrix::Zero(n, t);
  update_effects(outcomes, missing, zero_l, fe);
  Matrix resid = Matrix::Zero(n, t);
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      if (missing(i, s) == 0) {
        resid(i, s) = outcomes(i, s) - fe.row(i) - fe.col(s);
      }
    }
  }
  return Eigen::BDCSVD<Matrix>(resid).singularValues()(0);
}

// Warm start for a target penalty: run a geometric penalty path from
// 0.5 * sigma_max down toward lambda, carrying the low-rank iterate along.
Matrix anneal_warm_start(const Matrix& outcomes, const IntMatrix& missing,
                         double lambda, const McNnmConfig& config) {
  const double top = 0.5 * initial_sigma_max(outcomes, missing);
  Matrix warm = Matrix::Zero(outcomes.rows(), outcomes.cols());
  if (lambda >= top || top <= 0.0) return warm;

  McNnmConfig stage_config = config;
  stage_config.max_iterations = std::min(config.max_iterations, 100);
  const int stages = 8;
  const double ratio =
      std::pow(std::max(lambda, 1e-12) / top, 1.0 / stages);
  double current = top;
  for (int k = 0; k < stages; ++k) {
    const SoftImputeFit fit =
        soft_impute(outcomes, missing, current, stage_config,
                    k == 0 ? nullptr : &warm);
    warm = fit.low_rank;
    current *= ratio;
  }
  return warm;
}

}  // namespace

McNnmResult mc_nnm_impute(const Matrix& outcomes, const IntMatrix& missing,
                          const McNnmConfig& config, uint64_t seed) {
  const Index n = outcomes.rows();
  const Index t = outcomes.cols();
  if (missing.rows() != n || missing.cols() != t) {
    throw ShapeMismatch("missing mask shape differs from outcomes");
  }
  std::vector<std::pair<Index, Index>> observed;
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      if (missing(i, s) == 0) observed.emplace_back(i, s);
    }
  }
  if (observed.empty()) throw NoObservedCells("no observed cells to fit on");

  double lambda = config.lambda;
  Matrix warm;
  bool have_warm = false;

  if (lambda < 0.0) {
    // Hold out a slice of observed cells, sweep a descending lambda path with
    // warm starts, and keep the best validated penalty.
    Rng rng(SeedSequence(seed).derive("mc-nnm-holdout"));
    std::vector<std::pair<Index, Index>> cells = observed;
    rng.shuffle(cells);
    const std::size_t holdout_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(
               config.holdout_fraction * static_cast<double>(cells.size()))));
    if (holdout_count >= cells.size()) {
      throw NoObservedCells("holdout would consume every observed cell");
    }
    std::vector<std::pair<Index, Index>> holdout(
        cells.begin(), cells.begin() + static_cast<long>(holdout_count));
    IntMatrix train_missing = missing;
    for (const auto& [i, s] : holdout) train_missing(i, s) = 1;

    const double sigma_max = initial_sigma_max(outcomes, train_missing);
    const int grid = std::max(2, config.grid_size);
    double best_sse = std::numeric_limits<double>::infinity();
    double best_lambda = 0.0;
    Matrix path_warm;
    bool have_path_warm = false;
    for (int g = 0; g < grid; ++g) {
      // Descending from 0.5 * sigma_max to 1e-4 * sigma_max.
      const double frac =
          0.5 * std::pow(2e-4, static_cast<double>(g) / (grid - 1));
      const double cand = frac * sigma_max;
      const SoftImputeFit fit =
          soft_impute(outcomes, train_missing, cand, config,
                      have_path_warm ? &path_warm : nullptr);
      path_warm = fit.low_rank;
      have_path_warm = true;
      const double sse = holdout_sse(outcomes, fit, holdout);
      if (sse < best_sse) {
        best_sse = sse;
        best_lambda = cand;
        warm = fit.low_rank;
        have_warm = true;
      }
    }
    lambda = best_lambda;
  }

  if (!have_warm && config.warm_start_path) {
    warm = anneal_warm_start(outcomes, missing, lambda, config);
    have_warm = true;
  }
  const SoftImputeFit fit = soft_impute(outcomes, missing, lambda, config,
                                        have_warm ? &warm : nullptr);

  McNnmResult result;
  result.low_rank = fit.low_rank;
  result.row_effects = fit.fe.row;
  result.col_effects = fit.fe.col;
  result.lambda = lambda;
  result.objective_trace = fit.trace;
  result.converged = fit.converged;
  result.iterations = fit.iterations;
  result.completed = fit.low_rank;
  result.completed.colwise() += fit.fe.row;
  result.completed.rowwise() += fit.fe.col.transpose();
  return result;
}

}  // namespace codeal
