#include "codeal/covariate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include <fmt/format.h>

#include "codeal/errors.hpp"

namespace codeal {

namespace {

// Column-standardized copy of X. Constant columns get scale 1 so they pass
// through centered at zero.
Matrix standardize_columns(const Matrix& x) {
  Matrix out = x;
  const double n = static_cast<double>(x.rows());
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    double sd = 0.0;
    if (x.rows() > 1) {
      sd = std::sqrt((x.col(j).array() - mean).square().sum() / (n - 1.0));
    }
    if (sd < 1e-12) sd = 1.0;
    out.col(j) = (x.col(j).array() - mean) / sd;
  }
  return out;
}

void run_periods(Index periods, int threads,
                 const std::function<void(Index)>& body) {
  if (threads <= 1) {
    for (Index t = 0; t < periods; ++t) body(t);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min<int>(threads, static_cast<int>(periods));
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const Index t = next.fetch_add(1);
        if (t >= periods) return;
        body(t);
      }
    });
  }
  for (auto& th : pool) th.join();
}

Vector fit_linear_period(const Matrix& xs, const Vector& y,
                         const std::vector<Index>& controls, double ridge) {
  const Index p = xs.cols();
  const Index nc = static_cast<Index>(controls.size());
  Matrix design(nc, p + 1);
  Vector target(nc);
  for (Index k = 0; k < nc; ++k) {
    design(k, 0) = 1.0;
    design.row(k).tail(p) = xs.row(controls[static_cast<std::size_t>(k)]);
    target(k) = y(controls[static_cast<std::size_t>(k)]);
  }
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    if (qr.rank() < p + 1) {
      throw RankDeficientDesign(fmt::format(
          "control design has rank {} < {}", qr.rank(), p + 1));
    }
  }
  Matrix normal = design.transpose() * design;
  for (Index j = 1; j <= p; ++j) normal(j, j) += ridge;
  return normal.ldlt().solve(design.transpose() * target);
}

CovariateModel fit_per_period(const Matrix& outcomes,
                              const IntMatrix& treatment, const Matrix& xs,
                              const CovariateConfig& config,
                              const SeedSequence& seeds) {
  const Index n = outcomes.rows();
  const Index periods = outcomes.cols();
  const Index p = xs.cols();

  std::vector<std::vector<Index>> controls(static_cast<std::size_t>(periods));
  for (Index t = 0; t < periods; ++t) {
    for (Index i = 0; i < n; ++i) {
      if (treatment(i, t) == 0) {
        controls[static_cast<std::size_t>(t)].push_back(i);
      }
    }
    if (controls[static_cast<std::size_t>(t)].empty()) {
      throw NoControlUnits(fmt::format("period {} has no control units", t));
    }
  }

  CovariateModel model;
  model.kind = config.kind;
  model.predictions.resize(n, periods);

  if (config.kind == CovariateKind::kLinear) {
    run_periods(periods, config.threads, [&](Index t) {
      const Vector beta = fit_linear_period(
          xs, outcomes.col(t), controls[static_cast<std::size_t>(t)],
          config.ridge);
      model.predictions.col(t) =
          Vector::Constant(n, beta(0)) + xs * beta.tail(p);
    });
    return model;
  }

  // One network per period, each with its own derived random stream so the
  // result does not depend on the thread count.
  const Matrix inputs_all = xs.transpose();
  run_periods(periods, config.threads, [&](Index t) {
    std::vector<Index> dims;
    dims.push_back(p);
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(1);
    DenseNet net(dims, config.output_bound, config.weight_bound);
    Rng rng = seeds.stream("covariate-period", static_cast<uint64_t>(t));
    net.init_he_uniform(rng);

    const auto& ctrl = controls[static_cast<std::size_t>(t)];
    Matrix in(p, static_cast<Index>(ctrl.size()));
    Matrix target(1, static_cast<Index>(ctrl.size()));
    for (std::size_t k = 0; k < ctrl.size(); ++k) {
      in.col(static_cast<Index>(k)) = xs.row(ctrl[k]).transpose();
      target(0, static_cast<Index>(k)) = outcomes(ctrl[k], t);
    }
    const IntMatrix mask = IntMatrix::Ones(1, static_cast<Index>(ctrl.size()));
    train_masked(net, in, target, mask, config.training, rng);
    model.predictions.col(t) = net.predict(inputs_all).transpose();
  });
  return model;
}

CovariateModel fit_shared_trunk(const Matrix& outcomes,
                                const IntMatrix& treatment, const Matrix& xs,
                                const CovariateConfig& config,
                                const SeedSequence& seeds) {
  const Index n = outcomes.rows();
  const Index periods = outcomes.cols();
  const Index p = xs.cols();

  // Samples are control cells; the input appends a scaled period coordinate.
  std::vector<std::pair<Index, Index>> cells;
  for (Index t = 0; t < periods; ++t) {
    for (Index i = 0; i < n; ++i) {
      if (treatment(i, t) == 0) cells.emplace_back(i, t);
    }
  }
  if (cells.empty()) throw NoControlUnits("panel has no control cells");

  const double t_scale = periods > 1 ? static_cast<double>(periods - 1) : 1.0;
  Matrix in(p + 1, static_cast<Index>(cells.size()));
  Matrix target(1, static_cast<Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [i, t] = cells[k];
    in.col(static_cast<Index>(k)).head(p) = xs.row(i).transpose();
    in(p, static_cast<Index>(k)) =
        2.0 * static_cast<double>(t) / t_scale - 1.0;
    target(0, static_cast<Index>(k)) = outcomes(i, t);
  }

  std::vector<Index> dims;
  dims.push_back(p + 1);
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(1);
  DenseNet net(dims, config.output_bound, config.weight_bound);
  Rng rng = seeds.stream("covariate-shared");
  net.init_he_uniform(rng);
  const IntMatrix mask = IntMatrix::Ones(1, static_cast<Index>(cells.size()));
  train_masked(net, in, target, mask, config.training, rng);

  CovariateModel model;
  model.kind = config.kind;
  model.predictions.resize(n, periods);
  Matrix query(p + 1, n);
  for (Index t = 0; t < periods; ++t) {
    query.topRows(p) = xs.transpose();
    query.row(p).setConstant(2.0 * static_cast<double>(t) / t_scale - 1.0);
    model.predictions.col(t) = net.predict(query).transpose();
  }
  return model;
}

}  // namespace

CovariateModel fit_covariates(const Matrix& outcomes,
                              const IntMatrix& treatment,
                              const Matrix& covariates,
                              const CovariateConfig& config,
                              const SeedSequence& seeds) {
  const Index n = outcomes.rows();
  const Index periods = outcomes.cols();
  if (treatment.rows() != n || treatment.cols() != periods) {
    throw ShapeMismatch("treatment shape differs from outcomes");
  }
  if (covariates.size() != 0 && covariates.rows() != n) {
    throw ShapeMismatch("covariate rows differ from outcomes");
  }

  if (config.kind == CovariateKind::kNone || covariates.cols() == 0) {
    CovariateModel model;
    model.kind = CovariateKind::kNone;
    model.predictions = Matrix::Zero(n, periods);
    return model;
  }

  const Matrix xs = standardize_columns(covariates);
  if (config.kind == CovariateKind::kDnn && config.shared_trunk) {
    return fit_shared_trunk(outcomes, treatment, xs, config, seeds);
  }
  return fit_per_period(outcomes, treatment, xs, config, seeds);
}

}  // namespace codeal
