#include "codeal/factor_ae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <utility>

#include <fmt/format.h>

#include "codeal/errors.hpp"

namespace codeal {

namespace {

std::vector<Index> net_dims(Index in, const std::vector<Index>& hidden,
                            Index out) {
  std::vector<Index> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

// Mean and standard deviation over observed cells.
std::pair<double, double> observed_moments(const Matrix& values,
                                           const IntMatrix& missing) {
  double sum = 0.0;
  long count = 0;
  for (Index t = 0; t < values.cols(); ++t) {
    for (Index i = 0; i < values.rows(); ++i) {
      if (missing(i, t) != 0) continue;
      sum += values(i, t);
      ++count;
    }
  }
  if (count == 0) throw EmptyMask("every cell is marked missing");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (Index t = 0; t < values.cols(); ++t) {
    for (Index i = 0; i < values.rows(); ++i) {
      if (missing(i, t) != 0) continue;
      const double d = values(i, t) - mean;
      ss += d * d;
    }
  }
  double sd = std::sqrt(ss / static_cast<double>(count));
  if (sd < 1e-12) sd = 1.0;
  return {mean, sd};
}

}  // namespace

FactorAutoencoder::FactorAutoencoder(Index units, const AeConfig& config)
    : units_(units), config_(config) {
  if (units <= 0) throw ZeroDimension("autoencoder needs at least one unit");
  if (config.code_dim <= 0) {
    throw InvalidConfig("autoencoder code dimension must be positive");
  }
  encoder_ = DenseNet(net_dims(units, config.encoder_hidden, config.code_dim),
                      config.output_bound, config.weight_bound);
  const Index decoder_count = config.shared_decoder ? 1 : units;
  decoders_.reserve(static_cast<std::size_t>(decoder_count));
  for (Index i = 0; i < decoder_count; ++i) {
    decoders_.emplace_back(
        net_dims(config.code_dim, config.decoder_hidden, Index{1}),
        config.output_bound, config.weight_bound);
  }
}

void FactorAutoencoder::init(Rng& rng) {
  encoder_.init_he_uniform(rng);
  for (auto& dec : decoders_) dec.init_he_uniform(rng);
}

Matrix FactorAutoencoder::encoder_input(const Matrix& values,
                                        const IntMatrix* missing) const {
  Matrix in = ((values.array() - mean_) / scale_).matrix();
  if (config_.mask_encoder_input && missing != nullptr) {
    in = (missing->array() == 0).select(in, Matrix::Zero(in.rows(), in.cols()));
  }
  return in;
}

Matrix FactorAutoencoder::predictions_standardized(const Matrix& inputs) const {
  const Matrix codes = encoder_.predict(inputs);
  Matrix preds(units_, inputs.cols());
  if (config_.shared_decoder) {
    const Matrix row = decoders_[0].predict(codes);
    preds = row.replicate(units_, 1);
  } else {
    for (Index i = 0; i < units_; ++i) {
      preds.row(i) = decoders_[static_cast<std::size_t>(i)].predict(codes);
    }
  }
  return preds;
}

double FactorAutoencoder::reconstruction_loss(const Matrix& values,
                                              const IntMatrix& missing) const {
  if (values.rows() != units_ || missing.rows() != units_ ||
      missing.cols() != values.cols()) {
    throw DimensionMismatch("values and missing must be units x periods");
  }
  const auto [mean, sd] = observed_moments(values, missing);
  const Matrix vs = ((values.array() - mean) / sd).matrix();
  Matrix in = vs;
  if (config_.mask_encoder_input) {
    in = (missing.array() == 0).select(in, Matrix::Zero(in.rows(), in.cols()));
  }
  const Matrix preds = predictions_standardized(in);
  const Matrix obs = (missing.array() == 0).cast<double>().matrix();
  const Matrix resid = (preds - vs).cwiseProduct(obs);
  return resid.squaredNorm() / obs.sum();
}

FactorAutoencoder::Gradients FactorAutoencoder::gradients(
    const Matrix& values, const IntMatrix& missing) const {
  if (values.rows() != units_ || missing.rows() != units_ ||
      missing.cols() != values.cols()) {
    throw DimensionMismatch("values and missing must be units x periods");
  }
  const auto [mean, sd] = observed_moments(values, missing);
  const Matrix vs = ((values.array() - mean) / sd).matrix();
  Matrix in = vs;
  if (config_.mask_encoder_input) {
    in = (missing.array() == 0).select(in, Matrix::Zero(in.rows(), in.cols()));
  }

  DenseNet::Trace enc_trace;
  const Matrix codes = encoder_.forward(in, &enc_trace);
  const Matrix obs = (missing.array() == 0).cast<double>().matrix();
  const double count = obs.sum();

  Gradients out;
  out.decoders.reserve(decoders_.size());
  Matrix code_grad = Matrix::Zero(codes.rows(), codes.cols());

  if (config_.shared_decoder) {
    DenseNet::Trace trace;
    const Matrix row = decoders_[0].forward(codes, &trace);
    const Matrix resid =
        (row.replicate(units_, 1) - vs).cwiseProduct(obs);
    const Matrix og = (2.0 / count) * resid.colwise().sum();
    Matrix in_grad;
    out.decoders.push_back(decoders_[0].backward(trace, og, &in_grad));
    code_grad += in_grad;
  } else {
    for (Index i = 0; i < units_; ++i) {
      DenseNet::Trace trace;
      const Matrix row =
          decoders_[static_cast<std::size_t>(i)].forward(codes, &trace);
      const Matrix resid =
          (row - vs.row(i)).cwiseProduct(obs.row(i));
      const Matrix og = (2.0 / count) * resid;
      Matrix in_grad;
      out.decoders.push_back(decoders_[static_cast<std::size_t>(i)].backward(
          trace, og, &in_grad));
      code_grad += in_grad;
    }
  }
  out.encoder = encoder_.backward(enc_trace, code_grad);
  return out;
}

TrainResult FactorAutoencoder::fit(const Matrix& values,
                                   const IntMatrix& missing, Rng& rng) {
  if (values.rows() != units_ || missing.rows() != units_ ||
      missing.cols() != values.cols()) {
    throw DimensionMismatch("values and missing must be units x periods");
  }
  const Index periods = values.cols();
  std::tie(mean_, scale_) = observed_moments(values, missing);
  train_missing_ = missing;

  const Matrix vs = ((values.array() - mean_) / scale_).matrix();
  Matrix enc_in = vs;
  if (config_.mask_encoder_input) {
    enc_in = (missing.array() == 0)
                 .select(enc_in, Matrix::Zero(enc_in.rows(), enc_in.cols()));
  }
  const Matrix obs_all = (missing.array() == 0).cast<double>().matrix();
  if (obs_all.sum() == 0.0) throw EmptyMask("every cell is marked missing");

  Index batch = config_.training.batch_size;
  if (batch <= 0) batch = periods < 1024 ? periods : 256;
  batch = std::min(batch, periods);
  const bool full_batch = batch == periods;

  std::vector<Index> order(static_cast<std::size_t>(periods));
  std::iota(order.begin(), order.end(), Index{0});

  AdamState encoder_adam(encoder_);
  std::vector<AdamState> decoder_adams;
  decoder_adams.reserve(decoders_.size());
  for (const auto& dec : decoders_) decoder_adams.emplace_back(dec);

  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(config_.training.epochs));

  for (int epoch = 0; epoch < config_.training.epochs; ++epoch) {
    if (!full_batch) rng.shuffle(order);
    double epoch_sum = 0.0;
    double epoch_count = 0.0;
    for (Index start = 0; start < periods; start += batch) {
      const Index size = std::min(batch, periods - start);
      Matrix bin(units_, size), btg(units_, size), bobs(units_, size);
      if (full_batch) {
        bin = enc_in;
        btg = vs;
        bobs = obs_all;
      } else {
        for (Index k = 0; k < size; ++k) {
          const Index src = order[static_cast<std::size_t>(start + k)];
          bin.col(k) = enc_in.col(src);
          btg.col(k) = vs.col(src);
          bobs.col(k) = obs_all.col(src);
        }
      }
      const double count = bobs.sum();
      if (count == 0.0) continue;

      DenseNet::Trace enc_trace;
      const Matrix codes = encoder_.forward(bin, &enc_trace);
      Matrix code_grad = Matrix::Zero(codes.rows(), codes.cols());
      double batch_loss = 0.0;

      if (config_.shared_decoder) {
        DenseNet::Trace trace;
        const Matrix row = decoders_[0].forward(codes, &trace);
        const Matrix resid =
            (row.replicate(units_, 1) - btg).cwiseProduct(bobs);
        batch_loss = resid.squaredNorm();
        const Matrix og = (2.0 / count) * resid.colwise().sum();
        Matrix in_grad;
        const auto grads = decoders_[0].backward(trace, og, &in_grad);
        code_grad += in_grad;
        decoder_adams[0].step(decoders_[0], grads, config_.training.adam);
      } else {
        std::vector<DenseNet::Gradients> dgrads;
        dgrads.reserve(decoders_.size());
        for (Index i = 0; i < units_; ++i) {
          DenseNet::Trace trace;
          const Matrix row =
              decoders_[static_cast<std::size_t>(i)].forward(codes, &trace);
          const Matrix resid = (row - btg.row(i)).cwiseProduct(bobs.row(i));
          batch_loss += resid.squaredNorm();
          const Matrix og = (2.0 / count) * resid;
          Matrix in_grad;
          dgrads.push_back(decoders_[static_cast<std::size_t>(i)].backward(
              trace, og, &in_grad));
          code_grad += in_grad;
        }
        for (Index i = 0; i < units_; ++i) {
          decoder_adams[static_cast<std::size_t>(i)].step(
              decoders_[static_cast<std::size_t>(i)], dgrads[static_cast<std::size_t>(i)],
              config_.training.adam);
        }
      }

      if (!std::isfinite(batch_loss)) {
        throw NonFiniteLoss(
            fmt::format("autoencoder loss diverged at epoch {}", epoch));
      }
      epoch_sum += batch_loss;
      epoch_count += count;

      const auto enc_grads = encoder_.backward(enc_trace, code_grad);
      encoder_adam.step(encoder_, enc_grads, config_.training.adam);
    }
    result.loss_trace.push_back(epoch_sum / epoch_count);
  }
  return result;
}

Matrix FactorAutoencoder::reconstruct(const Matrix& values) const {
  if (values.rows() != units_) {
    throw DimensionMismatch(fmt::format(
        "values have {} rows, autoencoder was built for {}", values.rows(),
        units_));
  }
  const IntMatrix* missing =
      train_missing_.size() != 0 && train_missing_.rows() == values.rows() &&
              train_missing_.cols() == values.cols()
          ? &train_missing_
          : nullptr;
  const Matrix in = encoder_input(values, missing);
  const Matrix preds = predictions_standardized(in);
  return (preds.array() * scale_ + mean_).matrix();
}

}  // namespace codeal
