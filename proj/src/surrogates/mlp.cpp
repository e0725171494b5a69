#include "nwb/surrogates/mlp.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "nwb/error.hpp"
#include "nwb/rng.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::surrogates {

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "linear") return Activation::linear;
  throw ValidationError("unknown activation '" + std::string(s) + "'", {"activation"});
}

void MlpConfig::validate() const {
  for (auto w : hidden)
    if (w == 0) throw ValidationError("hidden layer widths must be positive", {"hidden"});
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0", {"learning_rate"});
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must lie in [0, 1)", {"beta1"});
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)", {"beta2"});
  if (!(adam_epsilon > 0.0)) throw ValidationError("adam epsilon must be > 0", {"adam_epsilon"});
  if (batch_size == 0) throw ValidationError("batch size must be positive", {"batch_size"});
  if (patience == 0) throw ValidationError("patience must be positive", {"patience"});
  if (max_epochs == 0) throw ValidationError("max_epochs must be positive", {"max_epochs"});
}

namespace {

void activate(Activation a, Matrix& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::linear: break;
  }
}

/// dz = da * f'(z), expressed through the activation output.
void backprop_activation(Activation a, const Matrix& out, Matrix& d) {
  switch (a) {
    case Activation::relu: d = (out.array() > 0.0).select(d, 0.0); break;
    case Activation::sigmoid: d = (d.array() * out.array() * (1.0 - out.array())).matrix(); break;
    case Activation::tanh: d = (d.array() * (1.0 - out.array().square())).matrix(); break;
    case Activation::linear: break;
  }
}

}  // namespace

void Mlp::init_offsets() {
  offsets_.assign(widths_.size() - 1, 0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_[l] = off;
    off += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  params_.resize(off);
}

Mlp::Mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, Activation activation, std::size_t outputs,
         std::uint64_t seed)
    : activation_(activation) {
  if (inputs == 0 || outputs == 0) throw ValidationError("network needs inputs and outputs", {"hidden"});
  widths_.push_back(inputs);
  for (auto w : hidden) {
    if (w == 0) throw ValidationError("hidden layer widths must be positive", {"hidden"});
    widths_.push_back(w);
  }
  widths_.push_back(outputs);
  init_offsets();
  rng::Engine eng(rng::derive(seed, {0x1417}));
  for (std::size_t l = 0; l < layers(); ++l) {
    const bool relu = activation_ == Activation::relu && l + 1 < layers();
    const double limit = std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(widths_[l]));
    double* w = params_.data() + weight_offset(l);
    for (std::size_t i = 0; i < widths_[l] * widths_[l + 1]; ++i) w[i] = eng.uniform(-limit, limit);
  }
}

Mlp Mlp::from_parts(std::vector<std::size_t> widths, Activation activation, std::vector<double> params) {
  if (widths.size() < 2) throw FormatError("network needs at least an input and an output width");
  for (auto w : widths)
    if (w == 0) throw FormatError("network layer width is zero");
  Mlp net;
  net.widths_ = std::move(widths);
  net.activation_ = activation;
  net.init_offsets();
  if (params.size() != net.params_.size())
    throw FormatError("network expects " + std::to_string(net.params_.size()) + " parameters, got " +
                      std::to_string(params.size()));
  net.params_ = std::move(params);
  return net;
}

void Mlp::forward(const Matrix& x, std::vector<Matrix>& acts) const {
  if (widths_.empty()) throw ValidationError("network is not initialized", {"model"});
  if (static_cast<std::size_t>(x.cols()) != widths_.front())
    throw ValidationError("feature count does not match the network", {"x"});
  const auto m = static_cast<std::size_t>(x.rows());
  acts.resize(layers() + 1);
  acts[0] = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    Matrix& z = acts[l + 1];
    z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(out));
    const double* b = params_.data() + bias_offset(l);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(b, out, z.data() + i * out);
    simd::gemm(m, out, in, acts[l].data(), in, params_.data() + weight_offset(l), out, z.data(), out, true);
    if (l + 1 < layers()) activate(activation_, z);
  }
}

Matrix Mlp::predict(const Matrix& x) const {
  std::vector<Matrix> acts;
  forward(x, acts);
  return std::move(acts.back());
}

double Mlp::loss_and_gradient(const Matrix& x, const Matrix& y, std::vector<double>& grad) const {
  std::vector<Matrix> acts;
  forward(x, acts);
  if (acts.back().rows() != y.rows() || acts.back().cols() != y.cols())
    throw ValidationError("targets do not match the network outputs", {"y"});
  const auto m = static_cast<std::size_t>(x.rows());
  Matrix d = acts.back() - y;
  const double loss = d.squaredNorm() / static_cast<double>(d.size());
  d *= 2.0 / static_cast<double>(d.size());

  grad.assign(params_.size(), 0.0);
  Matrix at, wt, prev;
  for (std::size_t l = layers(); l-- > 0;) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    if (l + 1 < layers()) backprop_activation(activation_, acts[l + 1], d);
    at = acts[l].transpose();
    simd::gemm(in, out, m, at.data(), m, d.data(), out, grad.data() + weight_offset(l), out, false);
    Eigen::Map<Eigen::RowVectorXd>(grad.data() + bias_offset(l), static_cast<Eigen::Index>(out)) =
        d.colwise().sum();
    if (l == 0) break;
    wt = Eigen::Map<const Matrix>(params_.data() + weight_offset(l), static_cast<Eigen::Index>(in),
                                  static_cast<Eigen::Index>(out))
             .transpose();
    prev.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(in));
    simd::gemm(m, in, out, d.data(), out, wt.data(), in, prev.data(), in, false);
    std::swap(d, prev);
  }
  return loss;
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ValidationError("optimizer state does not match the parameter count", {"params"});
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

MlpTraining train_mlp(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                      const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  if (x.rows() == 0 || x.rows() != y.rows()) throw ValidationError("training set is empty or mismatched", {"x"});
  if (x_val.rows() == 0 || x_val.rows() != y_val.rows())
    throw ValidationError("early stopping needs a nonempty validation split", {"val"});

  MlpTraining out;
  Mlp net(static_cast<std::size_t>(x.cols()), config.hidden, config.activation, static_cast<std::size_t>(y.cols()),
          seed);
  auto val_loss = [&](const Mlp& n) { return (n.predict(x_val) - y_val).squaredNorm() / static_cast<double>(y_val.size()); };
  out.initial_val_loss = val_loss(net);
  out.net = net;
  double best = out.initial_val_loss;

  Adam adam(net.parameters().size(), config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> grad;
  Matrix xb, yb;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng::Engine eng(rng::derive(seed, {0xE90C, epoch}));
    eng.shuffle(std::span(order));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < n; s += config.batch_size) {
      const std::size_t e = std::min(n, s + config.batch_size);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(s),
                                           order.begin() + static_cast<std::ptrdiff_t>(e));
      xb = x(rows, Eigen::all);
      yb = y(rows, Eigen::all);
      const double loss = net.loss_and_gradient(xb, yb, grad);
      if (!std::isfinite(loss))
        throw NumericalError("MLP training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      adam.step(net.parameters(), grad);
      sum += loss;
      ++batches;
    }
    const double vl = val_loss(net);
    if (!std::isfinite(vl))
      throw NumericalError("MLP training diverged at epoch " + std::to_string(epoch) + " (non-finite validation loss)");
    out.train_loss.push_back(sum / static_cast<double>(batches));
    out.val_loss.push_back(vl);
    out.epochs = epoch;
    if (vl < best) {
      best = vl;
      out.best_epoch = epoch;
      out.net = net;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return out;
}

}  // namespace nwb::surrogates
