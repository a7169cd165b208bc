#include "codeal/simulate.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "codeal/errors.hpp"
#include "codeal/rng.hpp"

namespace codeal {
namespace {

constexpr Index kReluMlpHidden = 10;  // h1
constexpr Index kReluCovHidden = 32;  // h2

void validate(const DgpConfig& c) {
  if (c.units < 2 || c.periods < 2) {
    throw InvalidConfig(fmt::format("panel must be at least 2x2, got {}x{}",
                                    c.units, c.periods));
  }
  if (c.factor_dim < 1) throw InvalidConfig("factor dimension must be >= 1");
  if (c.covariate_dim < 0) throw InvalidConfig("covariate dimension is negative");
  if (c.covariate_kind != DgpCovariateKind::kNone && c.covariate_dim < 1) {
    throw InvalidConfig("covariate effects need at least one covariate");
  }
  if (c.noise_sd < 0.0) throw InvalidConfig("negative noise level");
  if (c.tau_variance < 0.0) throw InvalidConfig("negative effect variance");
  if (c.design == DesignKind::kFourBlock) {
    if (c.control_units < 1 || c.control_units >= c.units) {
      throw InvalidConfig(fmt::format(
          "four-block design needs 1 <= N1 < N, got N1={} N={}",
          c.control_units, c.units));
    }
    if (c.pre_periods < 1 || c.pre_periods >= c.periods) {
      throw InvalidConfig(fmt::format(
          "four-block design needs 1 <= T1 < T, got T1={} T={}",
          c.pre_periods, c.periods));
    }
  } else {
    if (c.staggered_groups < 2 ||
        c.staggered_groups > static_cast<int>(c.units) ||
        c.staggered_groups > static_cast<int>(c.periods)) {
      throw InvalidConfig(fmt::format(
          "staggered design needs 2 <= r <= min(N, T), got r={}",
          c.staggered_groups));
    }
  }
}

// Equal split of total into parts, leftovers going to the earliest parts.
std::vector<Index> split_evenly(Index total, int parts) {
  std::vector<Index> sizes(static_cast<std::size_t>(parts), total / parts);
  for (Index k = 0; k < total % parts; ++k) {
    ++sizes[static_cast<std::size_t>(k)];
  }
  return sizes;
}

IntMatrix build_indicator(const DgpConfig& c) {
  IntMatrix w = IntMatrix::Zero(c.units, c.periods);
  if (c.design == DesignKind::kFourBlock) {
    w.block(c.control_units, c.pre_periods, c.units - c.control_units,
            c.periods - c.pre_periods)
        .setOnes();
    return w;
  }
  const int r = c.staggered_groups;
  const std::vector<Index> group_sizes = split_evenly(c.units, r);
  const std::vector<Index> segment_lengths = split_evenly(c.periods, r);
  std::vector<Index> segment_start(static_cast<std::size_t>(r) + 1, 0);
  for (int s = 1; s <= r; ++s) {
    segment_start[static_cast<std::size_t>(s)] =
        segment_start[static_cast<std::size_t>(s - 1)] +
        segment_lengths[static_cast<std::size_t>(s - 1)];
  }
  // Group 1 never adopts; group xi >= 2 adopts when segment r + 2 - xi
  // begins, so later groups in row order switch on earlier in time.
  Index row = group_sizes[0];
  for (int xi = 2; xi <= r; ++xi) {
    const Index adoption = segment_start[static_cast<std::size_t>(r + 2 - xi - 1)];
    const Index rows = group_sizes[static_cast<std::size_t>(xi - 1)];
    w.block(row, adoption, rows, c.periods - adoption).setOnes();
    row += rows;
  }
  return w;
}

Matrix draw_matrix(Rng& rng, Index rows, Index cols, double mean, double sd) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal(mean, sd);
  }
  return m;
}

Matrix factor_effects(const DgpConfig& c, const Matrix& loadings,
                      const Matrix& factors, Rng& rng) {
  // The amplitude draws are per unit, which is where most of the
  // cross-sectional heterogeneity in these designs comes from.
  switch (c.factor_kind) {
    case FactorKind::kLinear: {
      const Vector c1 = draw_matrix(rng, c.units, 1, 0.0, 1.0);
      return (0.5 * c1.array()).matrix().asDiagonal() * (loadings * factors);
    }
    case FactorKind::kSine: {
      const Vector c1 = draw_matrix(rng, c.units, 1, 0.0, 1.0);
      return (2.0 * c1.array()).matrix().asDiagonal() *
             (loadings * factors).array().sin().matrix();
    }
    case FactorKind::kPolynomial: {
      const Vector c1 = draw_matrix(rng, c.units, 1, 0.0, 1.0);
      const Vector c2 = draw_matrix(rng, c.units, 1, 0.0, 1.0);
      Matrix out =
          (0.2 * c1.array()).matrix().asDiagonal() * (loadings * factors);
      const Vector squared = factors.colwise().squaredNorm().transpose();
      out += (0.2 * c2.array()).matrix() * squared.transpose();
      return out;
    }
    case FactorKind::kReluMlp: {
      // One small random network per unit; weights are draws, not fitted.
      Matrix out(c.units, c.periods);
      for (Index i = 0; i < c.units; ++i) {
        const Matrix r1 =
            draw_matrix(rng, kReluMlpHidden, c.factor_dim, 0.0, 0.5);
        const Vector b1 = draw_matrix(rng, kReluMlpHidden, 1, 0.0, 0.5);
        const Vector r2 = draw_matrix(rng, kReluMlpHidden, 1, 0.0, 0.5);
        const double b2 = rng.normal(0.0, 0.5);
        Matrix hidden = r1 * factors;
        hidden.colwise() += b1;
        hidden = hidden.cwiseMax(0.0);
        out.row(i) = ((r2.transpose() * hidden).array() + b2).matrix();
      }
      return out;
    }
  }
  throw InvalidConfig("unhandled factor effect kind");
}

Matrix covariate_effects(const DgpConfig& c, const Matrix& x, Rng& rng) {
  Matrix g = Matrix::Zero(c.units, c.periods);
  const Index p = c.covariate_dim;
  switch (c.covariate_kind) {
    case DgpCovariateKind::kNone:
      break;
    case DgpCovariateKind::kMatrixLinear:
      for (Index t = 0; t < c.periods; ++t) {
        g.col(t) = x * draw_matrix(rng, p, 1, 1.0, 1.0);
      }
      break;
    case DgpCovariateKind::kVectorLinear: {
      const Vector u = draw_matrix(rng, p, 1, 1.0, 1.0);
      g = (x * u).replicate(1, c.periods);
      break;
    }
    case DgpCovariateKind::kTanh:
    case DgpCovariateKind::kPoly:
    case DgpCovariateKind::kLog:
      for (Index t = 0; t < c.periods; ++t) {
        const Vector w = draw_matrix(rng, p, 1, 0.0, 1.0);
        const double b = rng.normal();
        const Eigen::ArrayXd z = (x * w).array();
        if (c.covariate_kind == DgpCovariateKind::kTanh) {
          g.col(t) = (z.abs().tanh().sqrt() + b).matrix();
        } else if (c.covariate_kind == DgpCovariateKind::kPoly) {
          g.col(t) = (z.abs().sqrt() + b).matrix();
        } else {
          g.col(t) = (z + b).abs().log().matrix();
        }
      }
      break;
    case DgpCovariateKind::kRelu:
      for (Index t = 0; t < c.periods; ++t) {
        const Matrix r1 = draw_matrix(rng, p, kReluCovHidden, 0.0,
                                      std::sqrt(2.0 / static_cast<double>(p)));
        const Vector b1 = draw_matrix(rng, kReluCovHidden, 1, 0.0, 1.0);
        const Vector r2 =
            draw_matrix(rng, kReluCovHidden, 1, 0.0,
                        std::sqrt(2.0 / static_cast<double>(kReluCovHidden)));
        const double b2 = rng.normal();
        Matrix hidden = x * r1;
        hidden.rowwise() += b1.transpose();
        g.col(t) = ((hidden.cwiseMax(0.0) * r2).array() + b2).matrix();
      }
      break;
  }
  return g;
}

// Runs body(0..count-1), collecting one exception slot per call so a worker
// failure surfaces deterministically as the lowest failing index.
void run_indexed(int count, int threads,
                 const std::function<void(int)>& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto guarded = [&](int k) {
    try {
      body(k);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  };
  if (threads <= 1 || count <= 1) {
    for (int k = 0; k < count; ++k) guarded(k);
  } else {
    std::atomic<int> next{0};
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int k = next.fetch_add(1);
          if (k >= count) return;
          guarded(k);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace

SimulatedPanel generate(const DgpConfig& config) {
  validate(config);
  const SeedSequence seeds(config.seed);
  const Index n = config.units;
  const Index t = config.periods;

  SimulatedPanel sim;
  sim.panel.treatment = build_indicator(config);

  Rng x_rng = seeds.stream("x");
  sim.panel.covariates = draw_matrix(x_rng, n, config.covariate_dim, 0.0, 1.0);

  // Factors are drawn period by period so panels of different lengths share
  // their common prefix.
  Rng f_rng = seeds.stream("factors");
  Matrix factors(config.factor_dim, t);
  for (Index s = 0; s < t; ++s) {
    for (Index k = 0; k < config.factor_dim; ++k) {
      factors(k, s) = f_rng.normal();
    }
  }
  Rng l_rng = seeds.stream("loadings");
  const Matrix loadings = draw_matrix(l_rng, n, config.factor_dim, 0.0, 1.0);

  Rng dgp_rng = seeds.stream("factor-dgp");
  sim.factor_component = factor_effects(config, loadings, factors, dgp_rng);
  Rng cov_rng = seeds.stream("covariate-dgp");
  sim.covariate_component = covariate_effects(config, sim.panel.covariates,
                                              cov_rng);

  Rng tau_rng = seeds.stream("tau");
  sim.tau.resize(n);
  const double tau_sd = std::sqrt(config.tau_variance);
  for (Index i = 0; i < n; ++i) sim.tau(i) = tau_rng.normal(config.tau_mean, tau_sd);

  Rng noise_rng = seeds.stream("noise");
  sim.noise = draw_matrix(noise_rng, n, t, 0.0, config.noise_sd);

  sim.panel.outcomes.resize(n, t);
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < t; ++s) {
      const double effect = sim.panel.treatment(i, s) == 1 ? sim.tau(i) : 0.0;
      sim.panel.outcomes(i, s) = sim.factor_component(i, s) +
                                 sim.covariate_component(i, s) + effect +
                                 sim.noise(i, s);
    }
  }

  sim.panel.unit_labels.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    sim.panel.unit_labels.push_back(fmt::format("u{}", i));
  }
  sim.panel.period_labels.reserve(static_cast<std::size_t>(t));
  for (Index s = 0; s < t; ++s) {
    sim.panel.period_labels.push_back(fmt::format("t{}", s));
  }
  return sim;
}

Metrics metrics(const PanelDataset& panel, const Vector& tau,
                const Matrix& imputed) {
  if (imputed.rows() != panel.units() || imputed.cols() != panel.periods()) {
    throw ShapeMismatch(fmt::format("imputation is {}x{}, panel is {}x{}",
                                    imputed.rows(), imputed.cols(),
                                    panel.units(), panel.periods()));
  }
  if (tau.size() != panel.units()) {
    throw ShapeMismatch(fmt::format("{} effects for {} units", tau.size(),
                                    panel.units()));
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  Index treated = 0;
  for (Index i = 0; i < panel.units(); ++i) {
    for (Index s = 0; s < panel.periods(); ++s) {
      if (panel.treatment(i, s) == 0) continue;
      if (std::isnan(imputed(i, s))) {
        throw MissingImputedCell(
            fmt::format("no imputed value at treated cell ({}, {})", i, s));
      }
      const double dev = panel.outcomes(i, s) - imputed(i, s) - tau(i);
      abs_sum += std::abs(dev);
      sq_sum += dev * dev;
      ++treated;
    }
  }
  if (treated == 0) throw NoTreatedCells("panel has no treated cells");
  return {abs_sum / static_cast<double>(treated),
          sq_sum / static_cast<double>(treated)};
}

ExperimentResult run_experiment(
    const DgpConfig& config, const std::vector<ExperimentEstimator>& estimators,
    int replications, int threads) {
  if (replications < 1) throw InvalidConfig("need at least one replication");
  if (estimators.empty()) throw InvalidConfig("no estimators to run");

  std::vector<std::vector<Metrics>> scores(
      estimators.size(),
      std::vector<Metrics>(static_cast<std::size_t>(replications)));
  run_indexed(replications, threads, [&](int k) {
    DgpConfig rep = config;
    rep.seed = config.seed + static_cast<std::uint64_t>(k);
    const SimulatedPanel sim = generate(rep);
    const SeedSequence seeds(rep.seed);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const ImputationResult result =
          run_estimator(sim.panel, estimators[e].config, seeds);
      scores[e][static_cast<std::size_t>(k)] =
          metrics(sim, result.counterfactuals);
    }
  });

  const double r = static_cast<double>(replications);
  auto mean_of = [&](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / r;
  };
  auto se_of = [&](const std::vector<double>& v, double mean) {
    if (replications == 1) return std::numeric_limits<double>::quiet_NaN();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  };

  ExperimentResult out;
  out.config = config;
  out.replications = replications;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    ExperimentRow row;
    row.estimator = estimators[e].name;
    for (const Metrics& m : scores[e]) {
      row.mae_reps.push_back(m.mae);
      row.mse_reps.push_back(m.mse);
    }
    row.mae_mean = mean_of(row.mae_reps);
    row.mse_mean = mean_of(row.mse_reps);
    row.mae_se = se_of(row.mae_reps, row.mae_mean);
    row.mse_se = se_of(row.mse_reps, row.mse_mean);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace codeal
