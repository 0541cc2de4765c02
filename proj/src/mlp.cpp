#include "quadrl/mlp.hpp"

#include <cmath>
#include <string>

namespace quadrl {

namespace {

void check_same_shape(const Mlp& net, const GradientSet& grads, const char* where) {
  const auto& layers = net.layers();
  bool ok = layers.size() == grads.layers.size();
  for (std::size_t i = 0; ok && i < layers.size(); ++i) {
    ok = layers[i].weight.rows() == grads.layers[i].weight.rows() &&
         layers[i].weight.cols() == grads.layers[i].weight.cols() &&
         layers[i].bias.size() == grads.layers[i].bias.size();
  }
  if (!ok) throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

std::vector<LayerGradient> zero_like(const std::vector<DenseLayer>& layers) {
  std::vector<LayerGradient> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                   Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

}  // namespace

void apply_tanh(Eigen::MatrixXd& z) {
  z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
}

Eigen::VectorXd GradientSet::flatten() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  Eigen::VectorXd flat(n);
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[k++] = l.weight(r, c);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat[k++] = l.bias[r];
  }
  return flat;
}

bool GradientSet::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Mlp Mlp::random(const std::vector<int>& sizes, std::mt19937_64& rng, Activation hidden,
                Activation output) {
  Mlp net = zeros(sizes, hidden, output);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = u(rng);
  }
  return net;
}

Mlp Mlp::zeros(const std::vector<int>& sizes, Activation hidden, Activation output) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output size");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw std::invalid_argument("Mlp: sizes must be positive");
    DenseLayer l;
    l.weight = Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]);
    l.bias = Eigen::VectorXd::Zero(sizes[i + 1]);
    l.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(l));
  }
  return from_layers(std::move(layers));
}

Mlp Mlp::from_layers(std::vector<DenseLayer> layers) {
  if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() != l.bias.size() || l.weight.rows() == 0 || l.weight.cols() == 0) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(i) + " weight/bias mismatch");
    }
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(i) + " does not chain");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw std::invalid_argument("Mlp: non-finite parameters in layer " + std::to_string(i));
    }
  }
  Mlp net;
  net.layers_ = std::move(layers);
  return net;
}

int Mlp::input_size() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_size() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::vector<int> Mlp::sizes() const {
  std::vector<int> out;
  if (layers_.empty()) return out;
  out.push_back(input_size());
  for (const auto& l : layers_) out.push_back(static_cast<int>(l.weight.rows()));
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd Mlp::flatten() const {
  GradientSet view;
  for (const auto& l : layers_) view.layers.push_back({l.weight, l.bias});
  return view.flatten();
}

void Mlp::assign_flat(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw std::invalid_argument("Mlp::assign_flat: expected " + std::to_string(parameter_count()) +
                                " values, got " + std::to_string(flat.size()));
  }
  ++generation_;
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
}

void Mlp::check_input(const Eigen::MatrixXd& input) const {
  if (layers_.empty()) throw std::logic_error("Mlp: empty network");
  if (input.rows() != input_size()) {
    throw std::invalid_argument("Mlp: input has " + std::to_string(input.rows()) +
                                " rows, network expects " + std::to_string(input_size()));
  }
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& input) const {
  check_input(input);
  Eigen::MatrixXd x = input;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z(l.weight.rows(), x.cols());
    z.noalias() = l.weight * x;
    z.colwise() += l.bias;
    if (l.activation == Activation::Tanh) apply_tanh(z);
    x = std::move(z);
  }
  return x;
}

Eigen::VectorXd Mlp::predict(const Eigen::VectorXd& input) const {
  return predict(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, ForwardCache& cache) const {
  check_input(input);
  cache.activations.resize(layers_.size() + 1);
  cache.activations[0] = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Eigen::MatrixXd& z = cache.activations[i + 1];
    z.resize(l.weight.rows(), input.cols());
    z.noalias() = l.weight * cache.activations[i];
    z.colwise() += l.bias;
    if (l.activation == Activation::Tanh) apply_tanh(z);
  }
  cache.owner = this;
  cache.generation = generation_;
  return cache.activations.back();
}

BackwardResult Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                             bool param_grads, bool input_grad) const {
  if (cache.owner != this || cache.generation != generation_ ||
      cache.activations.size() != layers_.size() + 1) {
    throw std::logic_error("Mlp::backward: cache does not belong to this network state");
  }
  const Eigen::MatrixXd& out = cache.activations.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");
  }

  BackwardResult result;
  if (param_grads) result.grads.layers.resize(layers_.size());
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& l = layers_[idx];
    if (l.activation == Activation::Tanh) {
      const auto& y = cache.activations[idx + 1].array();
      delta.array() *= 1.0 - y * y;
    }
    const Eigen::MatrixXd& x = cache.activations[idx];
    if (param_grads) {
      auto& g = result.grads.layers[idx];
      g.weight.noalias() = delta * x.transpose();
      g.bias = delta.rowwise().sum();
    }
    if (idx == 0 && !input_grad) break;
    Eigen::MatrixXd prev(l.weight.cols(), delta.cols());
    prev.noalias() = l.weight.transpose() * delta;
    delta = std::move(prev);
  }
  if (input_grad) result.input_grad = std::move(delta);
  return result;
}

GradientSet Mlp::zero_gradients() const {
  GradientSet g;
  g.layers = zero_like(layers_);
  return g;
}

bool Mlp::same_shape(const Mlp& other) const {
  return sizes() == other.sizes();
}

AdamState AdamState::for_network(const Mlp& net, double learning_rate) {
  AdamState s;
  s.first_moment = zero_like(net.layers());
  s.second_moment = zero_like(net.layers());
  s.learning_rate = learning_rate;
  return s;
}

void adam_update(Mlp& net, const GradientSet& grads, AdamState& opt) {
  check_same_shape(net, grads, "adam_update");
  if (opt.first_moment.size() != grads.layers.size()) {
    throw std::invalid_argument("adam_update: optimizer state shape mismatch");
  }
  if (!grads.all_finite()) throw NumericalDivergence("adam_update: non-finite gradient");

  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  const double b1 = opt.beta1;
  const double b2 = opt.beta2;
  const double lr = opt.learning_rate;
  const double eps = opt.epsilon;

  auto& layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& m = opt.first_moment[i];
    auto& v = opt.second_moment[i];
    const auto& g = grads.layers[i];
    m.weight = b1 * m.weight + (1.0 - b1) * g.weight;
    v.weight = b2 * v.weight + (1.0 - b2) * g.weight.cwiseAbs2();
    m.bias = b1 * m.bias + (1.0 - b1) * g.bias;
    v.bias = b2 * v.bias + (1.0 - b2) * g.bias.cwiseAbs2();
    layers[i].weight.array() -=
        lr * (m.weight.array() / c1) / ((v.weight.array() / c2).sqrt() + eps);
    layers[i].bias.array() -= lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + eps);
  }
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
  if (!target.same_shape(source)) throw std::invalid_argument("soft_update: shape mismatch");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  auto& t = target.mutable_layers();
  const auto& s = source.layers();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i].weight = tau * s[i].weight + (1.0 - tau) * t[i].weight;
    t[i].bias = tau * s[i].bias + (1.0 - tau) * t[i].bias;
  }
}

}  // namespace quadrl
