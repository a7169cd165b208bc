#pragma once

#include <vector>

#include "codeal/net.hpp"
#include "codeal/rng.hpp"
#include "codeal/types.hpp"

namespace codeal {

struct AeConfig {
  Index code_dim = 4;                       // K1
  std::vector<Index> encoder_hidden = {64};
  std::vector<Index> decoder_hidden = {16};
  TrainConfig training;
  double output_bound = kUnbounded;
  double weight_bound = kUnbounded;
  // One scalar decoder shared by every unit instead of one per unit. The
  // shared variant predicts the same value for all units of a column.
  bool shared_decoder = false;
  // Zero out missing entries in the encoder input. Off by default: the
  // encoder reads whole columns as observed, including treated cells.
  bool mask_encoder_input = false;
  // Independently initialized fits whose reconstructions the estimator
  // driver averages. Single fits land in poor minima often enough that the
  // average is visibly more stable than any one of them.
  int restarts = 1;
};

// Autoencoder over panel columns. The encoder maps a cross-section
// (one period's N outcomes) to a low-dimensional code; unit-specific scalar
// decoders map the code back to each unit's outcome. Fitting minimizes the
// mean squared reconstruction error over cells not marked missing, and the
// fitted decoders evaluated on missing cells provide imputations.
class FactorAutoencoder {
 public:
  FactorAutoencoder(Index units, const AeConfig& config);

  void init(Rng& rng);
  Index units() const { return units_; }
  const AeConfig& config() const { return config_; }

  DenseNet& encoder() { return encoder_; }
  const DenseNet& encoder() const { return encoder_; }
  std::vector<DenseNet>& decoders() { return decoders_; }
  const std::vector<DenseNet>& decoders() const { return decoders_; }

  // values is N x T; missing is N x T with 1 marking cells excluded from the
  // loss. Standardization constants come from the observed cells and are
  // stored for prediction.
  TrainResult fit(const Matrix& values, const IntMatrix& missing, Rng& rng);

  // N x T reconstruction of every cell from the fitted networks.
  Matrix reconstruct(const Matrix& values) const;

  // Mean squared reconstruction error over observed cells at the current
  // parameters, in the standardized scale used by fit.
  double reconstruction_loss(const Matrix& values,
                             const IntMatrix& missing) const;

  struct Gradients {
    DenseNet::Gradients encoder;
    std::vector<DenseNet::Gradients> decoders;
  };
  Gradients gradients(const Matrix& values, const IntMatrix& missing) const;

 private:
  Matrix encoder_input(const Matrix& values, const IntMatrix* missing) const;
  Matrix predictions_standardized(const Matrix& inputs) const;

  Index units_ = 0;
  AeConfig config_;
  DenseNet encoder_;
  std::vector<DenseNet> decoders_;  // size 1 when shared_decoder
  double mean_ = 0.0;
  double scale_ = 1.0;
  IntMatrix train_missing_;  // mask used by fit, kept for encoder masking
};

}  // namespace codeal
