#pragma once

// Fully connected network trained with Adam on the mean squared error.
// Dense layers run on the dispatched SIMD GEMM.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nwb/matrix.hpp"

namespace nwb::surrogates {

enum class Activation { relu, sigmoid, tanh, linear };
std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view s);

struct MlpConfig {
  std::vector<std::size_t> hidden{256, 512, 512, 256, 768};
  Activation activation = Activation::relu;  // all hidden layers; the output is linear
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 256;
  std::size_t patience = 20;  // epochs without validation improvement
  std::size_t max_epochs = 500;

  void validate() const;
};

class Mlp {
 public:
  Mlp() = default;
  /// Fan-in scaled uniform weights, zero biases.
  Mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, Activation activation, std::size_t outputs,
      std::uint64_t seed);

  Matrix predict(const Matrix& x) const;

  /// loss = mean over samples and outputs of (prediction - y)^2; `grad`
  /// receives d loss / d parameters in parameters() order.
  double loss_and_gradient(const Matrix& x, const Matrix& y, std::vector<double>& grad) const;

  /// Layer l's weights (fan_in x fan_out, row-major) then its biases, per layer.
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }  // inputs .. outputs
  Activation activation() const noexcept { return activation_; }
  /// Rebuilds a network from stored widths and parameters.
  static Mlp from_parts(std::vector<std::size_t> widths, Activation activation, std::vector<double> params);

 private:
  std::size_t layers() const noexcept { return widths_.size() - 1; }
  std::size_t weight_offset(std::size_t l) const noexcept { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const noexcept { return offsets_[l] + widths_[l] * widths_[l + 1]; }
  void forward(const Matrix& x, std::vector<Matrix>& acts) const;
  void init_offsets();

  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::relu;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Adam with bias-corrected first and second moment estimates.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

struct MlpTraining {
  Mlp net;  // best validation weights
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;  // 0: initialization
  double initial_val_loss = 0.0;
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;    // per epoch
};

/// Trains on (x, y), early-stops on (x_val, y_val) and restores the best
/// weights. Throws NumericalError when the loss becomes non-finite.
MlpTraining train_mlp(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                      const MlpConfig& config, std::uint64_t seed);

}  // namespace nwb::surrogates
