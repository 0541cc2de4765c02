#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace quadrl {

/// Raised when training produces non-finite numbers.
class NumericalDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Linear;
};

struct LayerGradient {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct GradientSet {
  std::vector<LayerGradient> layers;

  Eigen::VectorXd flatten() const;
  bool all_finite() const;
};

struct ForwardCache {
  // activations[0] is the input batch, activations[i + 1] the output of layer i.
  std::vector<Eigen::MatrixXd> activations;
  const void* owner = nullptr;
  std::uint64_t generation = 0;
};

struct BackwardResult {
  GradientSet grads;
  Eigen::MatrixXd input_grad;
};

/// Fully connected network; every layer but the last uses `hidden`, the last uses `output`.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;

  /// Weights and biases drawn uniform in +-1/sqrt(fan_in).
  static Mlp random(const std::vector<int>& sizes, std::mt19937_64& rng,
                    Activation hidden = Activation::Tanh, Activation output = Activation::Linear);
  static Mlp zeros(const std::vector<int>& sizes, Activation hidden = Activation::Tanh,
                   Activation output = Activation::Linear);
  static Mlp from_layers(std::vector<DenseLayer> layers);

  int input_size() const;
  int output_size() const;
  std::vector<int> sizes() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Mutable access invalidates outstanding forward caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++generation_;
    return layers_;
  }
  std::uint64_t generation() const { return generation_; }

  /// Row-major W then b per layer, in layer order.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);

  Eigen::MatrixXd predict(const Eigen::MatrixXd& input) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache& cache) const;

  /// Gradients of a scalar loss given dLoss/dOutput for the cached batch.
  /// Either half of the result can be skipped when the caller does not need it.
  BackwardResult backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                          bool param_grads = true, bool input_grad = true) const;

  GradientSet zero_gradients() const;
  bool same_shape(const Mlp& other) const;

 private:
  void check_input(const Eigen::MatrixXd& input) const;

  std::vector<DenseLayer> layers_;
  std::uint64_t generation_ = 0;
};

/// In-place tanh over an array, computed as 1 - 2 / (exp(2x) + 1).
void apply_tanh(Eigen::MatrixXd& z);

struct AdamState {
  std::vector<LayerGradient> first_moment;
  std::vector<LayerGradient> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Mlp& net, double learning_rate);
};

void adam_update(Mlp& net, const GradientSet& grads, AdamState& opt);

/// target <- tau * source + (1 - tau) * target.
void soft_update(Mlp& target, const Mlp& source, double tau);

}  // namespace quadrl
