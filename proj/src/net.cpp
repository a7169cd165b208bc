#include "codeal/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "codeal/errors.hpp"

namespace codeal {

DenseNet::DenseNet(std::vector<Index> dims, double output_bound,
                   double weight_bound)
    : dims_(std::move(dims)),
      output_bound_(output_bound),
      weight_bound_(weight_bound) {
  if (dims_.size() < 2) {
    throw InvalidConfig("a network needs an input and an output dimension");
  }
  for (Index d : dims_) {
    if (d <= 0) throw ZeroDimension("network layer dimensions must be positive");
  }
  if (!(output_bound_ > 0) || !(weight_bound_ > 0)) {
    throw InvalidConfig("network bounds must be positive");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.emplace_back(Matrix::Zero(dims_[l + 1], dims_[l]));
    biases_.emplace_back(Vector::Zero(dims_[l + 1]));
  }
}

void DenseNet::init_he_uniform(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double fan_in = static_cast<double>(weights_[l].cols());
    const double limit = std::sqrt(6.0 / fan_in);
    for (Index j = 0; j < weights_[l].cols(); ++j) {
      for (Index i = 0; i < weights_[l].rows(); ++i) {
        weights_[l](i, j) = rng.uniform(-limit, limit);
      }
    }
    biases_[l].setZero();
  }
}

Index DenseNet::input_dim() const { return dims_.front(); }
Index DenseNet::output_dim() const { return dims_.back(); }

Matrix DenseNet::forward(const Matrix& inputs, Trace* trace) const {
  if (inputs.rows() != input_dim()) {
    throw DimensionMismatch(fmt::format("network expects {} inputs, got {}",
                                        input_dim(), inputs.rows()));
  }
  if (trace) {
    trace->layer_inputs.clear();
    trace->layer_inputs.reserve(weights_.size());
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (trace) trace->layer_inputs.push_back(h);
    h = (weights_[l] * h).colwise() + biases_[l];
    if (l + 1 < weights_.size()) h = h.cwiseMax(0.0);
  }
  if (trace) trace->raw_output = h;
  if (std::isfinite(output_bound_)) {
    h = h.cwiseMin(output_bound_).cwiseMax(-output_bound_);
  }
  return h;
}

Matrix DenseNet::predict(const Matrix& inputs) const {
  return forward(inputs, nullptr);
}

DenseNet::Gradients& DenseNet::Gradients::operator+=(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

void DenseNet::Gradients::scale(double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= factor;
    biases[l] *= factor;
  }
}

DenseNet::Gradients DenseNet::zero_gradients() const {
  Gradients g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.push_back(Vector::Zero(biases_[l].size()));
  }
  return g;
}

DenseNet::Gradients DenseNet::backward(const Trace& trace,
                                       const Matrix& output_grad,
                                       Matrix* input_grad) const {
  if (trace.layer_inputs.size() != weights_.size()) {
    throw NoForwardState("backward needs the trace of a forward pass");
  }
  Gradients grads = zero_gradients();
  Matrix g = output_grad;
  if (std::isfinite(output_bound_)) {
    // The clamp is flat outside (-B, B); gradients vanish there.
    g = (trace.raw_output.array().abs() < output_bound_)
            .select(g, Matrix::Zero(g.rows(), g.cols()));
  }
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grads.weights[l] = g * trace.layer_inputs[l].transpose();
    grads.biases[l] = g.rowwise().sum();
    if (l > 0) {
      g = weights_[l].transpose() * g;
      // layer_inputs[l] is the previous layer's post-ReLU output.
      g = (trace.layer_inputs[l].array() > 0.0)
              .select(g, Matrix::Zero(g.rows(), g.cols()));
    }
  }
  if (input_grad) {
    // The raw network input has no activation behind it.
    *input_grad = weights_[0].transpose() * g;
  }
  return grads;
}

void DenseNet::clamp_weights() {
  if (!std::isfinite(weight_bound_)) return;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] =
        weights_[l].cwiseMin(weight_bound_).cwiseMax(-weight_bound_);
    biases_[l] = biases_[l].cwiseMin(weight_bound_).cwiseMax(-weight_bound_);
  }
}

AdamState::AdamState(const DenseNet& net) {
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    const auto& w = net.weights()[l];
    weight_m_.push_back(Matrix::Zero(w.rows(), w.cols()));
    weight_v_.push_back(Matrix::Zero(w.rows(), w.cols()));
    bias_m_.push_back(Vector::Zero(net.biases()[l].size()));
    bias_v_.push_back(Vector::Zero(net.biases()[l].size()));
  }
}

void AdamState::step(DenseNet& net, const DenseNet::Gradients& gradients,
                     const AdamConfig& config) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(config.beta1, steps_);
  const double correction2 = 1.0 - std::pow(config.beta2, steps_);
  for (std::size_t l = 0; l < weight_m_.size(); ++l) {
    weight_m_[l] = config.beta1 * weight_m_[l] +
                   (1.0 - config.beta1) * gradients.weights[l];
    weight_v_[l] =
        config.beta2 * weight_v_[l] +
        (1.0 - config.beta2) * gradients.weights[l].array().square().matrix();
    net.mutable_weights()[l] -=
        (config.learning_rate * (weight_m_[l] / correction1).array() /
         ((weight_v_[l] / correction2).array().sqrt() + config.epsilon))
            .matrix();

    bias_m_[l] =
        config.beta1 * bias_m_[l] + (1.0 - config.beta1) * gradients.biases[l];
    bias_v_[l] =
        config.beta2 * bias_v_[l] +
        (1.0 - config.beta2) * gradients.biases[l].array().square().matrix();
    net.mutable_biases()[l] -=
        (config.learning_rate * (bias_m_[l] / correction1).array() /
         ((bias_v_[l] / correction2).array().sqrt() + config.epsilon))
            .matrix();
  }
  net.clamp_weights();
}

double masked_loss(const DenseNet& net, const Matrix& inputs,
                   const Matrix& targets, const IntMatrix& mask) {
  const Matrix pred = net.predict(inputs);
  double sum = 0.0;
  long count = 0;
  for (Index j = 0; j < pred.cols(); ++j) {
    for (Index i = 0; i < pred.rows(); ++i) {
      if (mask(i, j) == 0) continue;
      const double d = pred(i, j) - targets(i, j);
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw EmptyMask("loss mask selects no cells");
  return sum / static_cast<double>(count);
}

TrainResult train_masked(DenseNet& net, const Matrix& inputs,
                         const Matrix& targets, const IntMatrix& mask,
                         const TrainConfig& config, Rng& rng) {
  const Index samples = inputs.cols();
  if (targets.cols() != samples || mask.cols() != samples ||
      targets.rows() != net.output_dim() || mask.rows() != net.output_dim()) {
    throw DimensionMismatch("targets and mask must be output_dim x samples");
  }
  if (mask.sum() == 0) throw EmptyMask("training mask selects no cells");

  Index batch = config.batch_size;
  if (batch <= 0) batch = samples < 1024 ? samples : 256;
  batch = std::min(batch, samples);
  const bool full_batch = batch == samples;

  std::vector<Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(config.epochs));
  DenseNet::Trace trace;
  AdamState adam(net);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (!full_batch) rng.shuffle(order);
    double epoch_sum = 0.0;
    long epoch_count = 0;
    for (Index start = 0; start < samples; start += batch) {
      const Index size = std::min(batch, samples - start);
      Matrix bin(inputs.rows(), size);
      Matrix btg(targets.rows(), size);
      IntMatrix bmk(mask.rows(), size);
      if (full_batch) {
        bin = inputs;
        btg = targets;
        bmk = mask;
      } else {
        for (Index k = 0; k < size; ++k) {
          const Index src = order[static_cast<std::size_t>(start + k)];
          bin.col(k) = inputs.col(src);
          btg.col(k) = targets.col(src);
          bmk.col(k) = mask.col(src);
        }
      }
      const long batch_cells = bmk.sum();
      if (batch_cells == 0) continue;

      const Matrix pred = net.forward(bin, &trace);
      const Matrix masked = bmk.cast<double>();
      const Matrix resid = (pred - btg).cwiseProduct(masked);
      const double batch_loss = resid.squaredNorm();
      if (!std::isfinite(batch_loss)) {
        throw NonFiniteLoss(
            fmt::format("training loss diverged at epoch {}", epoch));
      }
      epoch_sum += batch_loss;
      epoch_count += batch_cells;

      const Matrix output_grad =
          (2.0 / static_cast<double>(batch_cells)) * resid;
      const DenseNet::Gradients grads = net.backward(trace, output_grad);
      adam.step(net, grads, config.adam);
    }
    result.loss_trace.push_back(epoch_sum /
                                static_cast<double>(epoch_count));
  }
  return result;
}

}  // namespace codeal
