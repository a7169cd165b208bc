#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "codeal/covariate.hpp"
#include "codeal/errors.hpp"

using namespace codeal;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Column standardization replicated independently of the implementation.
Matrix standardized(const Matrix& x) {
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    double sd = std::sqrt((x.col(j).array() - mean).square().sum() /
                          (static_cast<double>(x.rows()) - 1.0));
    if (sd < 1e-12) sd = 1.0;
    out.col(j) = (x.col(j).array() - mean) / sd;
  }
  return out;
}

// Staggered-looking mask: the last `treated` units are treated from period
// `adopt` onward.
IntMatrix late_treatment(Index n, Index t, Index treated, Index adopt) {
  IntMatrix w = IntMatrix::Zero(n, t);
  w.bottomRightCorner(treated, t - adopt).setOnes();
  return w;
}

}  // namespace

TEST_CASE("linear removal matches a pseudo-inverse oracle per period") {
  Rng rng(501);
  const Index n = 30, t = 6, p = 3;
  const Matrix x = random_matrix(rng, n, p);
  const Matrix y = random_matrix(rng, n, t);
  const IntMatrix w = late_treatment(n, t, 8, 2);

  CovariateConfig config;
  config.kind = CovariateKind::kLinear;
  CovariateModel model = fit_covariates(y, w, x, config, SeedSequence(1));

  const Matrix xs = standardized(x);
  for (Index s = 0; s < t; ++s) {
    std::vector<Index> ctrl;
    for (Index i = 0; i < n; ++i) {
      if (w(i, s) == 0) ctrl.push_back(i);
    }
    Matrix design(static_cast<Index>(ctrl.size()), p + 1);
    Vector target(static_cast<Index>(ctrl.size()));
    for (std::size_t k = 0; k < ctrl.size(); ++k) {
      design(static_cast<Index>(k), 0) = 1.0;
      design.row(static_cast<Index>(k)).tail(p) = xs.row(ctrl[k]);
      target(static_cast<Index>(k)) = y(ctrl[k], s);
    }
    const Vector beta = design.completeOrthogonalDecomposition().solve(target);
    for (Index i = 0; i < n; ++i) {
      const double oracle = beta(0) + (xs.row(i) * beta.tail(p))(0);
      CHECK(model.predictions(i, s) == doctest::Approx(oracle).epsilon(1e-8));
    }
  }
}

TEST_CASE("linear removal reproduces an exactly linear panel") {
  Rng rng(502);
  const Index n = 25, t = 8, p = 2;
  const Matrix x = random_matrix(rng, n, p);
  Matrix y(n, t);
  for (Index s = 0; s < t; ++s) {
    const double a = rng.normal();
    const Vector b = random_matrix(rng, p, 1);
    y.col(s) = Vector::Constant(n, a) + x * b;
  }
  const IntMatrix w = late_treatment(n, t, 6, 3);

  CovariateConfig config;
  config.kind = CovariateKind::kLinear;
  CovariateModel model = fit_covariates(y, w, x, config, SeedSequence(1));
  // Control-only fits extrapolate exactly to treated cells.
  CHECK((model.predictions - y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(model.adjust(y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((model.restore(model.adjust(y)) - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ridge penalty matches the explicit closed form") {
  Rng rng(503);
  const Index n = 20, t = 3, p = 4;
  const Matrix x = random_matrix(rng, n, p);
  const Matrix y = random_matrix(rng, n, t);
  const IntMatrix w = IntMatrix::Zero(n, t);

  CovariateConfig config;
  config.kind = CovariateKind::kLinear;
  config.ridge = 2.5;
  CovariateModel model = fit_covariates(y, w, x, config, SeedSequence(1));

  const Matrix xs = standardized(x);
  Matrix design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = xs;
  Matrix penalty = Matrix::Identity(p + 1, p + 1) * 2.5;
  penalty(0, 0) = 0.0;  // the intercept stays unpenalized
  for (Index s = 0; s < t; ++s) {
    const Vector beta = (design.transpose() * design + penalty)
                            .inverse() *
                        design.transpose() * y.col(s);
    for (Index i = 0; i < n; ++i) {
      const double oracle = beta(0) + (xs.row(i) * beta.tail(p))(0);
      CHECK(model.predictions(i, s) == doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("rank-deficient designs are rejected without ridge") {
  Rng rng(504);
  const Index n = 15, t = 2;
  Matrix x(n, 2);
  x.col(0) = random_matrix(rng, n, 1);
  x.col(1) = 2.0 * x.col(0);  // collinear
  const Matrix y = random_matrix(rng, n, t);
  const IntMatrix w = IntMatrix::Zero(n, t);

  CovariateConfig config;
  config.kind = CovariateKind::kLinear;
  CHECK_THROWS_AS(fit_covariates(y, w, x, config, SeedSequence(1)),
                  RankDeficientDesign);

  config.ridge = 1e-3;
  CHECK_NOTHROW(fit_covariates(y, w, x, config, SeedSequence(1)));
}

TEST_CASE("treated cells never influence the fit") {
  Rng rng(505);
  const Index n = 24, t = 5, p = 2;
  const Matrix x = random_matrix(rng, n, p);
  Matrix y = random_matrix(rng, n, t);
  const IntMatrix w = late_treatment(n, t, 7, 2);

  Matrix corrupted = y;
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      if (w(i, s) == 1) corrupted(i, s) = 1e9;
    }
  }

  CovariateConfig linear;
  linear.kind = CovariateKind::kLinear;
  const CovariateModel a =
      fit_covariates(y, w, x, linear, SeedSequence(9));
  const CovariateModel b =
      fit_covariates(corrupted, w, x, linear, SeedSequence(9));
  CHECK(a.predictions == b.predictions);

  CovariateConfig dnn;
  dnn.kind = CovariateKind::kDnn;
  dnn.hidden = {8};
  dnn.training.epochs = 40;
  const CovariateModel c = fit_covariates(y, w, x, dnn, SeedSequence(9));
  const CovariateModel d =
      fit_covariates(corrupted, w, x, dnn, SeedSequence(9));
  CHECK(c.predictions == d.predictions);
}

TEST_CASE("dnn removal learns a nonlinear covariate effect") {
  Rng rng(506);
  const Index n = 120, t = 4, p = 2;
  const Matrix x = random_matrix(rng, n, p);
  Matrix y(n, t);
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      const double z = x(i, 0) - 0.5 * x(i, 1);
      y(i, s) = std::tanh(z) + 0.3 * z * z;
    }
  }
  const IntMatrix w = IntMatrix::Zero(n, t);

  CovariateConfig config;
  config.kind = CovariateKind::kDnn;
  config.training.epochs = 600;
  config.training.adam.learning_rate = 5e-3;
  CovariateModel model = fit_covariates(y, w, x, config, SeedSequence(31));
  const double mse =
      (model.predictions - y).array().square().sum() / (n * t);
  CHECK(mse < 5e-3);

  // A linear fit cannot reach that error on this effect.
  CovariateConfig linear;
  linear.kind = CovariateKind::kLinear;
  CovariateModel lm = fit_covariates(y, w, x, linear, SeedSequence(31));
  const double lmse = (lm.predictions - y).array().square().sum() / (n * t);
  CHECK(lmse > 4.0 * mse);
}

TEST_CASE("thread count does not change dnn results") {
  Rng rng(507);
  const Index n = 40, t = 6, p = 2;
  const Matrix x = random_matrix(rng, n, p);
  const Matrix y = random_matrix(rng, n, t);
  const IntMatrix w = late_treatment(n, t, 10, 3);

  CovariateConfig config;
  config.kind = CovariateKind::kDnn;
  config.hidden = {8};
  config.training.epochs = 30;

  config.threads = 1;
  const CovariateModel seq = fit_covariates(y, w, x, config, SeedSequence(5));
  config.threads = 4;
  const CovariateModel par = fit_covariates(y, w, x, config, SeedSequence(5));
  CHECK(seq.predictions == par.predictions);
}

TEST_CASE("no covariates or kind none disable the adjustment") {
  Rng rng(508);
  const Matrix y = random_matrix(rng, 10, 4);
  const IntMatrix w = IntMatrix::Zero(10, 4);

  CovariateConfig config;
  config.kind = CovariateKind::kNone;
  const Matrix x = random_matrix(rng, 10, 3);
  CovariateModel none = fit_covariates(y, w, x, config, SeedSequence(2));
  CHECK(none.predictions.cwiseAbs().maxCoeff() == 0.0);
  CHECK(none.adjust(y) == y);

  config.kind = CovariateKind::kDnn;
  CovariateModel empty =
      fit_covariates(y, w, Matrix(10, 0), config, SeedSequence(2));
  CHECK(empty.predictions.cwiseAbs().maxCoeff() == 0.0);
  CHECK(empty.kind == CovariateKind::kNone);
}

TEST_CASE("shared trunk variant fits and stays deterministic") {
  Rng rng(509);
  const Index n = 60, t = 10, p = 2;
  const Matrix x = random_matrix(rng, n, p);
  Matrix y(n, t);
  for (Index s = 0; s < t; ++s) {
    y.col(s) = (x.col(0).array() * (0.5 + 0.05 * static_cast<double>(s)))
                   .matrix();
  }
  const IntMatrix w = late_treatment(n, t, 12, 5);

  CovariateConfig config;
  config.kind = CovariateKind::kDnn;
  config.shared_trunk = true;
  config.hidden = {16, 16};
  config.training.epochs = 300;
  config.training.adam.learning_rate = 5e-3;
  CovariateModel a = fit_covariates(y, w, x, config, SeedSequence(77));
  CovariateModel b = fit_covariates(y, w, x, config, SeedSequence(77));
  CHECK(a.predictions == b.predictions);

  double control_mse = 0.0;
  long cells = 0;
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      if (w(i, s) == 1) continue;
      const double d = a.predictions(i, s) - y(i, s);
      control_mse += d * d;
      ++cells;
    }
  }
  control_mse /= static_cast<double>(cells);
  CHECK(control_mse < 5e-2);
}

TEST_CASE("a period without controls is rejected") {
  Rng rng(510);
  const Matrix y = random_matrix(rng, 6, 3);
  const Matrix x = random_matrix(rng, 6, 1);
  IntMatrix w = IntMatrix::Zero(6, 3);
  w.col(2).setOnes();

  CovariateConfig config;
  config.kind = CovariateKind::kLinear;
  CHECK_THROWS_AS(fit_covariates(y, w, x, config, SeedSequence(3)),
                  NoControlUnits);
  config.kind = CovariateKind::kDnn;
  config.shared_trunk = false;
  CHECK_THROWS_AS(fit_covariates(y, w, x, config, SeedSequence(3)),
                  NoControlUnits);
}
