#pragma once

#include <limits>
#include <vector>

#include "codeal/rng.hpp"
#include "codeal/types.hpp"

namespace codeal {

inline constexpr double kUnbounded =
    std::numeric_limits<double>::infinity();

// Fully connected network: affine layers with ReLU between them and no
// activation after the last one. The final output h is clamped entrywise to
// sgn(h) * min(|h|, output_bound); weight_bound caps every parameter's
// magnitude during training. Both bounds default to infinity.
//
// All sample-batched matrices put one sample per column.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<Index> dims,
                    double output_bound = kUnbounded,
                    double weight_bound = kUnbounded);

  // He-style uniform init: entries of layer l drawn from
  // U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), biases zero.
  void init_he_uniform(Rng& rng);

  Index layer_count() const { return static_cast<Index>(weights_.size()); }
  Index input_dim() const;
  Index output_dim() const;
  const std::vector<Index>& dims() const { return dims_; }
  double output_bound() const { return output_bound_; }
  double weight_bound() const { return weight_bound_; }

  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }
  std::vector<Matrix>& mutable_weights() { return weights_; }
  std::vector<Vector>& mutable_biases() { return biases_; }

  Matrix predict(const Matrix& inputs) const;

  // Forward pass that keeps what backward() needs: the input of every layer
  // and the output before clamping.
  struct Trace {
    std::vector<Matrix> layer_inputs;
    Matrix raw_output;
  };
  Matrix forward(const Matrix& inputs, Trace* trace) const;

  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    Gradients& operator+=(const Gradients& other);
    void scale(double factor);
  };
  Gradients zero_gradients() const;

  // output_grad is dLoss/dOutput of the clamped output, same shape as the
  // forward result for the traced batch. When input_grad is non-null it
  // receives dLoss/dInputs, which lets networks be chained.
  Gradients backward(const Trace& trace, const Matrix& output_grad,
                     Matrix* input_grad = nullptr) const;

  // Entrywise projection of all parameters to [-weight_bound, weight_bound].
  void clamp_weights();

 private:
  std::vector<Index> dims_;
  std::vector<Matrix> weights_;  // weights_[l] maps dims_[l] -> dims_[l+1]
  std::vector<Vector> biases_;
  double output_bound_ = kUnbounded;
  double weight_bound_ = kUnbounded;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators shaped like a network's parameters.
class AdamState {
 public:
  explicit AdamState(const DenseNet& net);
  void step(DenseNet& net, const DenseNet::Gradients& gradients,
            const AdamConfig& config);
  long steps_taken() const { return steps_; }

 private:
  std::vector<Matrix> weight_m_, weight_v_;
  std::vector<Vector> bias_m_, bias_v_;
  long steps_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  int epochs = 500;
  // 0 selects the default policy: full batch below 1024 samples, else 256.
  Index batch_size = 0;
};

struct TrainResult {
  // Mean masked squared error accumulated over each epoch's batches.
  std::vector<double> loss_trace;
};

// Minimizes the mean of (prediction - target)^2 over cells where mask is 1.
// Targets and mask share the output shape (output_dim x samples). The rng
// drives minibatch shuffling only.
TrainResult train_masked(DenseNet& net, const Matrix& inputs,
                         const Matrix& targets, const IntMatrix& mask,
                         const TrainConfig& config, Rng& rng);

// Mean masked squared error of net.predict(inputs) against targets.
double masked_loss(const DenseNet& net, const Matrix& inputs,
                   const Matrix& targets, const IntMatrix& mask);

}  // namespace codeal
