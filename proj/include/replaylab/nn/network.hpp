#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "replaylab/core/error.hpp"
#include "replaylab/core/experience.hpp"

namespace replaylab::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamVector = Eigen::VectorXd;

enum class LayerKind { Conv2D, Dense, Output };
enum class Activation { LeakyReLU, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t width = 0;
  Activation activation = Activation::LeakyReLU;

  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride) {
    return LayerSpec{LayerKind::Conv2D, filters, kernel, kernel, stride, 0, Activation::LeakyReLU};
  }
  static LayerSpec dense(std::size_t width, Activation act = Activation::LeakyReLU) {
    return LayerSpec{LayerKind::Dense, 0, 0, 0, 1, width, act};
  }
  static LayerSpec output(std::size_t width) {
    return LayerSpec{LayerKind::Output, 0, 0, 0, 1, width, Activation::Linear};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Spatial input shape. Inputs arrive channel-planar: all of channel 0 in
// row-major order, then channel 1, and so on.
struct Shape3 {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct LayerPlan {
  LayerSpec spec;
  Shape3 in;
  Shape3 out;
  std::size_t fan_in = 0;  // columns of the weight matrix
  std::size_t units = 0;   // rows of the weight matrix
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

inline std::vector<LayerPlan> plan_layers(const Shape3& input, const std::vector<LayerSpec>& layers) {
  if (input.size() == 0) throw Error("network input shape must be non-empty");
  if (layers.empty()) throw Error("network needs at least one layer");
  if (layers.back().kind != LayerKind::Output) throw Error("last layer must be an output layer");
  std::vector<LayerPlan> plan;
  Shape3 shape = input;
  std::size_t offset = 0;
  bool flattened = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    LayerPlan p;
    p.spec = spec;
    p.in = shape;
    switch (spec.kind) {
      case LayerKind::Conv2D: {
        if (flattened) throw Error("convolution cannot follow a dense layer");
        if (spec.filters == 0 || spec.kernel_h == 0 || spec.kernel_w == 0 || spec.stride == 0)
          throw Error("convolution filters, kernel and stride must be positive");
        if (spec.kernel_h > shape.height || spec.kernel_w > shape.width)
          throw Error("convolution kernel larger than its input");
        p.out = Shape3{(shape.height - spec.kernel_h) / spec.stride + 1,
                       (shape.width - spec.kernel_w) / spec.stride + 1, spec.filters};
        p.fan_in = spec.kernel_h * spec.kernel_w * shape.channels;
        p.units = spec.filters;
        break;
      }
      case LayerKind::Dense:
      case LayerKind::Output: {
        if (spec.width == 0) throw Error("dense width must be positive");
        if (spec.kind == LayerKind::Output && i + 1 != layers.size())
          throw Error("output layer must be last");
        if (spec.kind == LayerKind::Output && spec.activation != Activation::Linear)
          throw Error("output layer must be linear");
        p.out = Shape3{1, 1, spec.width};
        p.fan_in = shape.size();
        p.units = spec.width;
        flattened = true;
        break;
      }
    }
    p.weight_offset = offset;
    offset += p.units * p.fan_in;
    p.bias_offset = offset;
    offset += p.units;
    plan.push_back(p);
    shape = p.out;
  }
  return plan;
}

/// Scratch memory for one forward/backward pass. Reused across calls to
/// avoid reallocating per minibatch.
struct Workspace {
  std::vector<Matrix> activations;  // [0] = input (height, width, channel order)
  std::vector<Matrix> columns;      // unfolded patches per conv layer
  Matrix grad;
  Matrix grad_prev;
  Matrix grad_columns;
};

/// Feed-forward Q-value approximator: convolutions, then dense layers, then
/// a linear output with one unit per action. Parameters are a single flat
/// vector; each layer owns a row-major weight block followed by its biases.
class QNetwork {
 public:
  QNetwork() = default;

  QNetwork(Shape3 input, std::vector<LayerSpec> layers, double leaky_alpha = 0.01)
      : input_(input), layers_(std::move(layers)), leaky_alpha_(leaky_alpha) {
    if (!(leaky_alpha_ >= 0.0 && leaky_alpha_ < 1.0)) throw Error("leaky slope must be in [0,1)");
    plan_ = plan_layers(input_, layers_);
    const std::size_t n = plan_.back().bias_offset + plan_.back().units;
    params_ = ParamVector::Zero(static_cast<Eigen::Index>(n));
    optimizer_state_ = ParamVector::Zero(static_cast<Eigen::Index>(n));
  }

  static std::size_t parameter_count(const Shape3& input, const std::vector<LayerSpec>& layers) {
    const auto plan = plan_layers(input, layers);
    return plan.back().bias_offset + plan.back().units;
  }

  /// He-style uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params_.setZero();
    for (const auto& p : plan_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(p.fan_in));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (std::size_t i = 0; i < p.units * p.fan_in; ++i) params_[static_cast<Eigen::Index>(p.weight_offset + i)] = dist(rng);
    }
    optimizer_state_.setZero();
  }

  const Shape3& input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<LayerPlan>& plan() const { return plan_; }
  double leaky_alpha() const { return leaky_alpha_; }
  std::size_t input_size() const { return input_.size(); }
  std::size_t output_size() const { return plan_.back().units; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  ParamVector& parameters() { return params_; }
  const ParamVector& parameters() const { return params_; }
  ParamVector& optimizer_state() { return optimizer_state_; }
  const ParamVector& optimizer_state() const { return optimizer_state_; }

  /// Q-values for one state.
  Vector forward(std::span<const double> state) const {
    if (state.size() != input_size()) throw Error("state length does not match network input");
    Matrix in(1, static_cast<Eigen::Index>(input_size()));
    std::copy(state.begin(), state.end(), in.data());
    const Matrix& out = forward_batch(in, scratch_);
    return Vector(out.data(), out.data() + out.size());
  }

  /// Row i of `inputs` is one state; row i of the result holds its Q-values.
  /// The returned reference points into `ws` and is valid until its next use.
  const Matrix& forward_batch(const Matrix& inputs, Workspace& ws) const {
    if (static_cast<std::size_t>(inputs.cols()) != input_size())
      throw Error("state length does not match network input");
    const Eigen::Index n = inputs.rows();
    ws.activations.resize(plan_.size() + 1);
    ws.columns.resize(plan_.size());
    to_channel_last(inputs, ws.activations[0]);
    for (std::size_t l = 0; l < plan_.size(); ++l) {
      const LayerPlan& p = plan_[l];
      const Matrix& x = ws.activations[l];
      Matrix& y = ws.activations[l + 1];
      const auto w = weights(p);
      const auto b = biases(p);
      if (p.spec.kind == LayerKind::Conv2D) {
        unfold(p, x, n, ws.columns[l]);
        const Eigen::Index rows = n * static_cast<Eigen::Index>(p.out.height * p.out.width);
        y.resize(n, static_cast<Eigen::Index>(p.out.size()));
        Eigen::Map<Matrix> ym(y.data(), rows, static_cast<Eigen::Index>(p.units));
        ym.noalias() = ws.columns[l] * w.transpose();
        ym.rowwise() += b.transpose();
      } else {
        y.resize(n, static_cast<Eigen::Index>(p.units));
        y.noalias() = x * w.transpose();
        y.rowwise() += b.transpose();
      }
      if (p.spec.activation == Activation::LeakyReLU) {
        const double a = leaky_alpha_;
        y = y.unaryExpr([a](double v) { return v > 0.0 ? v : a * v; });
      }
    }
    return ws.activations.back();
  }

  const Matrix& forward_batch(const Matrix& inputs) const { return forward_batch(inputs, scratch_); }

  /// Backpropagates d(loss)/d(output) through the pass recorded in `ws` by
  /// the last forward_batch and writes d(loss)/d(parameters) into `grad`.
  void backward(const Matrix& grad_output, Workspace& ws, ParamVector& grad) const {
    const Eigen::Index n = ws.activations.front().rows();
    if (grad_output.rows() != n || static_cast<std::size_t>(grad_output.cols()) != output_size())
      throw Error("output gradient shape does not match the forward pass");
    grad = ParamVector::Zero(params_.size());
    ws.grad = grad_output;
    for (std::size_t l = plan_.size(); l-- > 0;) {
      const LayerPlan& p = plan_[l];
      const Matrix& y = ws.activations[l + 1];
      if (p.spec.activation == Activation::LeakyReLU) {
        const double a = leaky_alpha_;
        ws.grad.array() *= y.unaryExpr([a](double v) { return v > 0.0 ? 1.0 : a; }).array();
      }
      const auto w = weights(p);
      auto gw = Eigen::Map<Matrix>(grad.data() + p.weight_offset, static_cast<Eigen::Index>(p.units),
                                   static_cast<Eigen::Index>(p.fan_in));
      auto gb = Eigen::Map<Eigen::VectorXd>(grad.data() + p.bias_offset, static_cast<Eigen::Index>(p.units));
      if (p.spec.kind == LayerKind::Conv2D) {
        const Eigen::Index rows = n * static_cast<Eigen::Index>(p.out.height * p.out.width);
        Eigen::Map<const Matrix> dz(ws.grad.data(), rows, static_cast<Eigen::Index>(p.units));
        gw.noalias() = dz.transpose() * ws.columns[l];
        gb = dz.colwise().sum().transpose();
        if (l > 0) {
          ws.grad_columns.noalias() = dz * w;
          fold(p, ws.grad_columns, n, ws.grad_prev);
        }
      } else {
        gw.noalias() = ws.grad.transpose() * ws.activations[l];
        gb = ws.grad.colwise().sum().transpose();
        if (l > 0) ws.grad_prev.noalias() = ws.grad * w;
      }
      if (l > 0) ws.grad.swap(ws.grad_prev);
    }
  }

 private:
  Eigen::Map<const Matrix> weights(const LayerPlan& p) const {
    return Eigen::Map<const Matrix>(params_.data() + p.weight_offset, static_cast<Eigen::Index>(p.units),
                                    static_cast<Eigen::Index>(p.fan_in));
  }
  Eigen::Map<const Eigen::VectorXd> biases(const LayerPlan& p) const {
    return Eigen::Map<const Eigen::VectorXd>(params_.data() + p.bias_offset, static_cast<Eigen::Index>(p.units));
  }

  void to_channel_last(const Matrix& in, Matrix& out) const {
    const std::size_t h = input_.height, w = input_.width, c = input_.channels;
    if (c == 1 || h * w == 1) {
      out = in;
      return;
    }
    out.resize(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      const double* src = in.row(r).data();
      double* dst = out.row(r).data();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) dst[i * c + ch] = src[ch * h * w + i];
    }
  }

  // im2col: one row per output position, columns ordered (kh, kw, channel).
  static void unfold(const LayerPlan& p, const Matrix& x, Eigen::Index n, Matrix& cols) {
    const std::size_t oh = p.out.height, ow = p.out.width, c = p.in.channels, iw = p.in.width;
    const std::size_t kh = p.spec.kernel_h, kw = p.spec.kernel_w, s = p.spec.stride;
    cols.resize(n * static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(p.fan_in));
    for (Eigen::Index b = 0; b < n; ++b) {
      const double* img = x.row(b).data();
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double* dst = cols.row(b * static_cast<Eigen::Index>(oh * ow) + static_cast<Eigen::Index>(y * ow + xo)).data();
          for (std::size_t i = 0; i < kh; ++i) {
            const double* src = img + ((y * s + i) * iw + xo * s) * c;
            std::copy(src, src + kw * c, dst + i * kw * c);
          }
        }
    }
  }

  // col2im: accumulates patch gradients back onto the input positions.
  static void fold(const LayerPlan& p, const Matrix& cols, Eigen::Index n, Matrix& dx) {
    const std::size_t oh = p.out.height, ow = p.out.width, c = p.in.channels, iw = p.in.width;
    const std::size_t kh = p.spec.kernel_h, kw = p.spec.kernel_w, s = p.spec.stride;
    dx = Matrix::Zero(n, static_cast<Eigen::Index>(p.in.size()));
    for (Eigen::Index b = 0; b < n; ++b) {
      double* img = dx.row(b).data();
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const double* src = cols.row(b * static_cast<Eigen::Index>(oh * ow) + static_cast<Eigen::Index>(y * ow + xo)).data();
          for (std::size_t i = 0; i < kh; ++i) {
            double* dst = img + ((y * s + i) * iw + xo * s) * c;
            const double* row = src + i * kw * c;
            for (std::size_t j = 0; j < kw * c; ++j) dst[j] += row[j];
          }
        }
    }
  }

  Shape3 input_;
  std::vector<LayerSpec> layers_;
  std::vector<LayerPlan> plan_;
  double leaky_alpha_ = 0.01;
  ParamVector params_;
  ParamVector optimizer_state_;
  mutable Workspace scratch_;
};

/// Convolutional trunk used for the grid world (kernels 6 then 3) and the
/// digit stream (kernels 5 and 5): two stride-2 convolutions with 32 and 64
/// filters, a 100-unit dense layer, and a linear head.
inline std::vector<LayerSpec> conv_q_architecture(std::size_t first_kernel, std::size_t second_kernel,
                                                  std::size_t outputs) {
  return {LayerSpec::conv(32, first_kernel, 2), LayerSpec::conv(64, second_kernel, 2), LayerSpec::dense(100),
          LayerSpec::output(outputs)};
}

}  // namespace replaylab::nn
