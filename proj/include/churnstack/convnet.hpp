#ifndef CHURNSTACK_CONVNET_HPP
#define CHURNSTACK_CONVNET_HPP

// Minimal double-precision convolutional network: forward pass, full
// backpropagation, SGD with momentum, and the weight-transfer machinery
// (text weight files, frozen layer prefix for fine-tuning).
//
// Tensors are stored channel-major (C x H x W). Output index 0 is the
// churner probability, index 1 the non-churner probability.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "churnstack/common.hpp"
#include "churnstack/imaging.hpp"

namespace churnstack::cnn {

struct Shape3 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::size_t size() const noexcept { return h * w * c; }
  bool operator==(const Shape3&) const = default;
};

inline std::string to_string(const Shape3& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

struct Tensor {
  Shape3 shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape3 s, double fill = 0.0) : shape(s), v(s.size(), fill) {}

  double& at(std::size_t ch, std::size_t y, std::size_t x) {
    return v[(ch * shape.h + y) * shape.w + x];
  }
  double at(std::size_t ch, std::size_t y, std::size_t x) const {
    return v[(ch * shape.h + y) * shape.w + x];
  }
};

inline Tensor to_tensor(const Grid& g) {
  Tensor t(Shape3{g.rows, g.cols, 1});
  std::copy(g.pixels.begin(), g.pixels.end(), t.v.begin());
  return t;
}

// ---------------------------------------------------------------------------
// Layers. Parameter vectors hold weights first, then biases.

/// Kernel stored kh x kw x cin x cout, row-major.
struct ConvLayer {
  std::size_t kh = 0, kw = 0, cin = 0, cout = 0, stride = 1, pad = 0;
  std::vector<double> params;

  std::size_t weight_count() const noexcept { return kh * kw * cin * cout; }
  double weight(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) const {
    return params[((ky * kw + kx) * cin + ci) * cout + co];
  }
  std::size_t weight_index(std::size_t ky, std::size_t kx, std::size_t ci,
                           std::size_t co) const noexcept {
    return ((ky * kw + kx) * cin + ci) * cout + co;
  }
};

struct ReluLayer {};

struct MaxPoolLayer {
  std::size_t window_h = 2, window_w = 2, stride = 2;
};

/// Weight matrix stored in x out, row-major.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> params;
};

struct SoftmaxLayer {
  std::size_t n = 2;
};

using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, DenseLayer, SoftmaxLayer>;

inline std::string_view kind_name(const Layer& l) {
  constexpr std::array<std::string_view, 5> names{"conv", "relu", "maxpool", "dense",
                                                  "softmax"};
  return names[l.index()];
}

inline std::vector<double>* params_of(Layer& l) {
  if (auto* c = std::get_if<ConvLayer>(&l)) return &c->params;
  if (auto* d = std::get_if<DenseLayer>(&l)) return &d->params;
  return nullptr;
}
inline const std::vector<double>* params_of(const Layer& l) {
  return params_of(const_cast<Layer&>(l));
}

/// Output shape of `l` applied to `in`; throws when the layer does not fit.
inline Shape3 output_shape(const Layer& l, const Shape3& in) {
  struct V {
    const Shape3& in;
    Shape3 operator()(const ConvLayer& c) const {
      if (c.cin != in.c)
        throw Error("conv expects " + std::to_string(c.cin) + " input channels, got " +
                    std::to_string(in.c));
      if (c.stride == 0) throw Error("conv stride must be positive");
      if (c.kh > in.h + 2 * c.pad || c.kw > in.w + 2 * c.pad)
        throw Error("conv kernel " + std::to_string(c.kh) + "x" + std::to_string(c.kw) +
                    " larger than padded input " + to_string(in));
      return {(in.h + 2 * c.pad - c.kh) / c.stride + 1,
              (in.w + 2 * c.pad - c.kw) / c.stride + 1, c.cout};
    }
    Shape3 operator()(const ReluLayer&) const { return in; }
    Shape3 operator()(const MaxPoolLayer& p) const {
      if (p.stride == 0 || p.window_h == 0 || p.window_w == 0)
        throw Error("max-pool window and stride must be positive");
      if (p.window_h > in.h || p.window_w > in.w)
        throw Error("max-pool window larger than input " + to_string(in));
      return {(in.h - p.window_h) / p.stride + 1, (in.w - p.window_w) / p.stride + 1, in.c};
    }
    Shape3 operator()(const DenseLayer& d) const {
      if (d.in != in.size())
        throw Error("dense expects " + std::to_string(d.in) + " inputs, got " +
                    std::to_string(in.size()));
      return {1, 1, d.out};
    }
    Shape3 operator()(const SoftmaxLayer& s) const {
      if (s.n != in.size()) throw Error("softmax width does not match its input");
      return in;
    }
  };
  return std::visit(V{in}, l);
}

// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
    if (batch_size == 0) throw Error("batch_size must be positive");
  }
};

class ConvNet {
 public:
  ConvNet() = default;
  ConvNet(Shape3 input, std::vector<Layer> layers)
      : input_(input), layers_(std::move(layers)) {
    validate();
    velocity_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (const auto* p = params_of(layers_[i])) velocity_[i].assign(p->size(), 0.0);
  }

  const Shape3& input_shape() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::size_t frozen_prefix() const noexcept { return frozen_prefix_; }

  void set_frozen_prefix(std::size_t f) {
    if (f > layers_.size())
      throw Error("frozen prefix " + std::to_string(f) + " exceeds layer count " +
                  std::to_string(layers_.size()));
    frozen_prefix_ = f;
  }

  /// Input shape followed by the output shape of every layer.
  std::vector<Shape3> shape_chain() const {
    std::vector<Shape3> chain{input_};
    for (const auto& l : layers_) chain.push_back(output_shape(l, chain.back()));
    return chain;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
      if (const auto* p = params_of(l)) n += p->size();
    return n;
  }

  void validate() const {
    if (layers_.empty()) throw Error("network has no layers");
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (std::holds_alternative<SoftmaxLayer>(layers_[i]))
        throw Error("softmax must be the last layer");
    if (!std::holds_alternative<SoftmaxLayer>(layers_.back()))
      throw Error("network must end in softmax");
    const auto chain = shape_chain();
    if (chain.back().size() != kNumClasses)
      throw Error("network output has " + std::to_string(chain.back().size()) +
                  " units, expected 2");
    for (const auto& l : layers_) {
      if (const auto* c = std::get_if<ConvLayer>(&l);
          c && c->params.size() != c->weight_count() + c->cout)
        throw Error("conv parameter vector has the wrong size");
      if (const auto* d = std::get_if<DenseLayer>(&l);
          d && d->params.size() != d->in * d->out + d->out)
        throw Error("dense parameter vector has the wrong size");
    }
  }

  /// Momentum buffers (not part of the saved weights).
  std::vector<std::vector<double>>& velocity() noexcept { return velocity_; }
  void reset_velocity() {
    for (auto& v : velocity_) std::fill(v.begin(), v.end(), 0.0);
  }

 private:
  Shape3 input_;
  std::vector<Layer> layers_;
  std::size_t frozen_prefix_ = 0;
  std::vector<std::vector<double>> velocity_;
};

/// He-scaled Gaussian weights (std = sqrt(2 / fan_in)), zero biases.
inline void initialize_he(ConvNet& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : net.layers()) {
    if (auto* c = std::get_if<ConvLayer>(&l)) {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(c->kh * c->kw * c->cin)));
      for (std::size_t i = 0; i < c->weight_count(); ++i) c->params[i] = g(rng);
      std::fill(c->params.begin() + static_cast<std::ptrdiff_t>(c->weight_count()),
                c->params.end(), 0.0);
    } else if (auto* d = std::get_if<DenseLayer>(&l)) {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(d->in)));
      for (std::size_t i = 0; i < d->in * d->out; ++i) d->params[i] = g(rng);
      std::fill(d->params.begin() + static_cast<std::ptrdiff_t>(d->in * d->out),
                d->params.end(), 0.0);
    }
  }
  net.reset_velocity();
}

inline ConvLayer make_conv(std::size_t kh, std::size_t kw, std::size_t cin,
                           std::size_t cout, std::size_t stride = 1, std::size_t pad = 0) {
  ConvLayer c{kh, kw, cin, cout, stride, pad, {}};
  c.params.assign(c.weight_count() + cout, 0.0);
  return c;
}

inline DenseLayer make_dense(std::size_t in, std::size_t out) {
  return {in, out, std::vector<double>(in * out + out, 0.0)};
}

/// conv3x3(1->6) relu pool2 conv5x5(6->10) relu pool2 dense(->2) softmax.
/// Parameters are zero until initialize_he() or load_weights().
inline ConvNet build_custom_cnn(std::size_t image_size = 32) {
  const Shape3 in{image_size, image_size, 1};
  std::vector<Layer> layers;
  layers.emplace_back(make_conv(3, 3, 1, 6));
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(MaxPoolLayer{2, 2, 2});
  layers.emplace_back(make_conv(5, 5, 6, 10));
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(MaxPoolLayer{2, 2, 2});
  Shape3 s = in;
  for (const auto& l : layers) s = output_shape(l, s);
  layers.emplace_back(make_dense(s.size(), kNumClasses));
  layers.emplace_back(SoftmaxLayer{kNumClasses});
  return ConvNet(in, std::move(layers));
}

/// Number of leading layers making up both convolution blocks.
inline constexpr std::size_t kConvBlocksPrefix = 6;

// ---------------------------------------------------------------------------
// Forward

inline Tensor pad_input(const Tensor& x, std::size_t pad) {
  if (pad == 0) return x;
  Tensor p(Shape3{x.shape.h + 2 * pad, x.shape.w + 2 * pad, x.shape.c});
  for (std::size_t ch = 0; ch < x.shape.c; ++ch)
    for (std::size_t y = 0; y < x.shape.h; ++y)
      for (std::size_t xx = 0; xx < x.shape.w; ++xx)
        p.at(ch, y + pad, xx + pad) = x.at(ch, y, xx);
  return p;
}

/// Cross-correlation with stride and zero padding.
inline Tensor conv_forward(const Tensor& x, const ConvLayer& c) {
  const Shape3 os = output_shape(Layer{c}, x.shape);
  const Tensor xp = pad_input(x, c.pad);
  Tensor out(os);
  const std::size_t ph = xp.shape.h, pw = xp.shape.w;
  for (std::size_t co = 0; co < c.cout; ++co) {
    double* o = out.v.data() + co * os.h * os.w;
    std::fill(o, o + os.h * os.w, c.params[c.weight_count() + co]);
    for (std::size_t ci = 0; ci < c.cin; ++ci) {
      const double* in = xp.v.data() + ci * ph * pw;
      for (std::size_t ky = 0; ky < c.kh; ++ky)
        for (std::size_t kx = 0; kx < c.kw; ++kx) {
          const double w = c.weight(ky, kx, ci, co);
          for (std::size_t oy = 0; oy < os.h; ++oy) {
            const double* row = in + (oy * c.stride + ky) * pw + kx;
            double* orow = o + oy * os.w;
            for (std::size_t ox = 0; ox < os.w; ++ox) orow[ox] += w * row[ox * c.stride];
          }
        }
    }
  }
  return out;
}

/// Max over each window; `argmax` receives the flat input index of each
/// output's winner (first in row-major scan on ties).
inline Tensor maxpool_forward(const Tensor& x, const MaxPoolLayer& p,
                              std::vector<std::uint32_t>* argmax = nullptr) {
  const Shape3 os = output_shape(Layer{p}, x.shape);
  Tensor out(os);
  if (argmax) argmax->assign(os.size(), 0);
  for (std::size_t ch = 0; ch < os.c; ++ch)
    for (std::size_t oy = 0; oy < os.h; ++oy)
      for (std::size_t ox = 0; ox < os.w; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t wy = 0; wy < p.window_h; ++wy)
          for (std::size_t wx = 0; wx < p.window_w; ++wx) {
            const std::size_t idx =
                (ch * x.shape.h + oy * p.stride + wy) * x.shape.w + ox * p.stride + wx;
            if (x.v[idx] > best) {
              best = x.v[idx];
              best_at = idx;
            }
          }
        out.at(ch, oy, ox) = best;
        if (argmax) (*argmax)[(ch * os.h + oy) * os.w + ox] = static_cast<std::uint32_t>(best_at);
      }
  return out;
}

inline Tensor dense_forward(const Tensor& x, const DenseLayer& d) {
  Tensor out(Shape3{1, 1, d.out});
  for (std::size_t o = 0; o < d.out; ++o) out.v[o] = d.params[d.in * d.out + o];
  for (std::size_t i = 0; i < d.in; ++i) {
    const double xi = x.v[i];
    const double* w = d.params.data() + i * d.out;
    for (std::size_t o = 0; o < d.out; ++o) out.v[o] += xi * w[o];
  }
  return out;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
  return out;
}

inline std::array<double, 2> softmax2(std::span<const double> z) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

struct SoftmaxLoss {
  std::array<double, 2> probs{};
  double loss = 0.0;
  std::array<double, 2> dlogits{};
};

/// Softmax + cross-entropy on two logits; the loss uses log-sum-exp.
inline SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, Label label) {
  SoftmaxLoss r;
  r.probs = softmax2(logits);
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  const std::size_t y = class_index(label);
  r.loss = lse - logits[y];
  for (std::size_t k = 0; k < 2; ++k) r.dlogits[k] = r.probs[k] - (k == y ? 1.0 : 0.0);
  return r;
}

/// Activations entering every layer, plus max-pool routing.
struct Trace {
  std::vector<Tensor> inputs;                    // inputs[i] enters layer i
  std::vector<std::vector<std::uint32_t>> argmax;  // per layer (pool only)
  Tensor logits;                                  // softmax input
};

inline Trace forward_trace(const ConvNet& net, const Tensor& x) {
  if (x.shape != net.input_shape())
    throw Error("input shape " + to_string(x.shape) + " does not match network input " +
                to_string(net.input_shape()));
  const auto& layers = net.layers();
  Trace t;
  t.inputs.reserve(layers.size());
  t.argmax.resize(layers.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    t.inputs.push_back(cur);
    const auto& l = layers[i];
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      cur = conv_forward(cur, *c);
    } else if (std::holds_alternative<ReluLayer>(l)) {
      cur = relu_forward(cur);
    } else if (const auto* p = std::get_if<MaxPoolLayer>(&l)) {
      cur = maxpool_forward(cur, *p, &t.argmax[i]);
    } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
      cur = dense_forward(cur, *d);
    } else {
      t.logits = cur;
      const auto p2 = softmax2(cur.v);
      cur.v.assign(p2.begin(), p2.end());
    }
  }
  return t;
}

/// (p_churn, p_nonchurn).
inline std::array<double, 2> predict_proba(const ConvNet& net, const Tensor& x) {
  const auto t = forward_trace(net, x);
  return softmax2(t.logits.v);
}

inline std::array<double, 2> predict_proba(const ConvNet& net, const FeatureImage& img) {
  return predict_proba(net, to_tensor(img.grid));
}

inline double sample_loss(const ConvNet& net, const Tensor& x, Label y) {
  const auto t = forward_trace(net, x);
  return softmax_cross_entropy(t.logits.v, y).loss;
}

// ---------------------------------------------------------------------------
// Backward

/// One gradient vector per layer (empty for parameter-free layers).
using Gradients = std::vector<std::vector<double>>;

inline Gradients zero_gradients(const ConvNet& net) {
  Gradients g(net.layers().size());
  for (std::size_t i = 0; i < g.size(); ++i)
    if (const auto* p = params_of(net.layers()[i])) g[i].assign(p->size(), 0.0);
  return g;
}

/// Adds dLoss/dparams of one sample into `grads` for layers >= `stop_at`;
/// returns the loss. Backpropagation stops at layer `stop_at`.
inline double accumulate_gradients(const ConvNet& net, const Tensor& x, Label y,
                                   Gradients& grads, std::size_t stop_at = 0) {
  const auto t = forward_trace(net, x);
  const auto sl = softmax_cross_entropy(t.logits.v, y);
  const auto& layers = net.layers();
  Tensor dout(t.logits.shape);
  dout.v.assign(sl.dlogits.begin(), sl.dlogits.end());

  for (std::size_t ii = layers.size() - 1; ii-- > stop_at;) {  // skip softmax
    const auto& l = layers[ii];
    const Tensor& in = t.inputs[ii];
    const bool need_dx = ii > stop_at;
    Tensor dx;
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      const Tensor xp = pad_input(in, c->pad);
      const std::size_t ph = xp.shape.h, pw = xp.shape.w;
      const Shape3 os = dout.shape;
      Tensor dxp(xp.shape);
      auto& g = grads[ii];
      for (std::size_t co = 0; co < c->cout; ++co) {
        const double* d = dout.v.data() + co * os.h * os.w;
        double bsum = 0.0;
        for (std::size_t k = 0; k < os.h * os.w; ++k) bsum += d[k];
        g[c->weight_count() + co] += bsum;
        for (std::size_t ci = 0; ci < c->cin; ++ci) {
          const double* xin = xp.v.data() + ci * ph * pw;
          double* dxin = dxp.v.data() + ci * ph * pw;
          for (std::size_t ky = 0; ky < c->kh; ++ky)
            for (std::size_t kx = 0; kx < c->kw; ++kx) {
              const double w = c->weight(ky, kx, ci, co);
              double acc = 0.0;
              for (std::size_t oy = 0; oy < os.h; ++oy) {
                const double* row = xin + (oy * c->stride + ky) * pw + kx;
                double* drow = dxin + (oy * c->stride + ky) * pw + kx;
                const double* dr = d + oy * os.w;
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                  acc += dr[ox] * row[ox * c->stride];
                  if (need_dx) drow[ox * c->stride] += w * dr[ox];
                }
              }
              g[c->weight_index(ky, kx, ci, co)] += acc;
            }
        }
      }
      if (need_dx) {
        if (c->pad == 0) {
          dx = std::move(dxp);
        } else {
          dx = Tensor(in.shape);
          for (std::size_t ch = 0; ch < in.shape.c; ++ch)
            for (std::size_t yy = 0; yy < in.shape.h; ++yy)
              for (std::size_t xx = 0; xx < in.shape.w; ++xx)
                dx.at(ch, yy, xx) = dxp.at(ch, yy + c->pad, xx + c->pad);
        }
      }
    } else if (std::holds_alternative<ReluLayer>(l)) {
      dx = Tensor(in.shape);
      for (std::size_t k = 0; k < in.v.size(); ++k) dx.v[k] = in.v[k] > 0.0 ? dout.v[k] : 0.0;
    } else if (std::holds_alternative<MaxPoolLayer>(l)) {
      dx = Tensor(in.shape);
      const auto& am = t.argmax[ii];
      for (std::size_t k = 0; k < am.size(); ++k) dx.v[am[k]] += dout.v[k];
    } else if (const auto* dl = std::get_if<DenseLayer>(&l)) {
      auto& g = grads[ii];
      for (std::size_t o = 0; o < dl->out; ++o) g[dl->in * dl->out + o] += dout.v[o];
      dx = Tensor(in.shape);
      for (std::size_t i = 0; i < dl->in; ++i) {
        const double* w = dl->params.data() + i * dl->out;
        double* gw = g.data() + i * dl->out;
        double acc = 0.0;
        for (std::size_t o = 0; o < dl->out; ++o) {
          gw[o] += in.v[i] * dout.v[o];
          acc += w[o] * dout.v[o];
        }
        dx.v[i] = acc;
      }
    }
    if (!need_dx) break;
    dout = std::move(dx);
  }
  return sl.loss;
}

/// Averages gradients over the batch and applies SGD with momentum to
/// every layer at index >= frozen_prefix. Returns the mean batch loss.
inline double backward_and_step(ConvNet& net, std::span<const Tensor> images,
                                std::span<const Label> labels, const TrainConfig& cfg) {
  if (images.empty()) throw Error("training batch is empty");
  if (images.size() != labels.size()) throw Error("batch images/labels length mismatch");
  const std::size_t f = net.frozen_prefix();
  if (f >= net.layers().size()) {
    double loss = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) loss += sample_loss(net, images[i], labels[i]);
    return loss / static_cast<double>(images.size());
  }
  auto grads = zero_gradients(net);
  double loss = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i)
    loss += accumulate_gradients(net, images[i], labels[i], grads, f);
  const double inv = 1.0 / static_cast<double>(images.size());
  loss *= inv;
  if (!std::isfinite(loss)) throw Error("training diverged: non-finite loss");
  auto& vel = net.velocity();
  for (std::size_t li = f; li < net.layers().size(); ++li) {
    auto* p = params_of(net.layers()[li]);
    if (!p) continue;
    auto& v = vel[li];
    auto& g = grads[li];
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double gk = g[k] * inv;
      if (!std::isfinite(gk)) throw Error("training diverged: non-finite gradient");
      v[k] = cfg.momentum * v[k] - cfg.learning_rate * gk;
      (*p)[k] += v[k];
    }
  }
  return loss;
}

/// Central-difference check of every parameter's analytic gradient.
/// Returns max |a - n| / max(|a|, |n|, 1e-8).
inline double numeric_gradient_check(const ConvNet& net, const Tensor& x, Label y,
                                     double h = 1e-5) {
  auto analytic = zero_gradients(net);
  accumulate_gradients(net, x, y, analytic, 0);
  ConvNet probe = net;
  double worst = 0.0;
  for (std::size_t li = 0; li < probe.layers().size(); ++li) {
    auto* p = params_of(probe.layers()[li]);
    if (!p) continue;
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double orig = (*p)[k];
      (*p)[k] = orig + h;
      const double lp = sample_loss(probe, x, y);
      (*p)[k] = orig - h;
      const double lm = sample_loss(probe, x, y);
      (*p)[k] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double a = analytic[li][k];
      const double denom = std::max({std::abs(a), std::abs(num), 1e-8});
      worst = std::max(worst, std::abs(a - num) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Training

inline std::vector<Tensor> to_tensors(std::span<const FeatureImage> images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(to_tensor(im.grid));
  return out;
}

/// Seeded shuffled mini-batch SGD. Returns the mean loss of every epoch.
inline std::vector<double> train(ConvNet& net, std::span<const Tensor> images,
                                 std::span<const Label> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (images.size() != labels.size()) throw Error("images/labels length mismatch");
  const bool has_churn = std::find(labels.begin(), labels.end(), Label::churner) != labels.end();
  const bool has_non = std::find(labels.begin(), labels.end(), Label::non_churner) != labels.end();
  if (!has_churn || !has_non) throw Error("training data must contain both classes");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> curve;
  curve.reserve(cfg.epochs);
  std::vector<Tensor> bx;
  std::vector<Label> by;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(images[order[k]]);
        by.push_back(labels[order[k]]);
      }
      total += backward_and_step(net, bx, by, cfg) * static_cast<double>(end - start);
    }
    curve.push_back(total / static_cast<double>(order.size()));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Weight files
//
//   TLDEEPE-CNN v1
//   layer <index> <kind> <shape dims...>
//   <parameters, one per line, weights then biases>

inline constexpr std::string_view kWeightMagic = "TLDEEPE-CNN v1";

inline std::vector<std::size_t> layer_dims(const Layer& l) {
  if (const auto* c = std::get_if<ConvLayer>(&l)) return {c->kh, c->kw, c->cin, c->cout};
  if (const auto* p = std::get_if<MaxPoolLayer>(&l)) return {p->window_h, p->window_w, p->stride};
  if (const auto* d = std::get_if<DenseLayer>(&l)) return {d->in, d->out};
  if (const auto* s = std::get_if<SoftmaxLayer>(&l)) return {s->n};
  return {};
}

inline std::string dims_text(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(dims[i]);
  }
  return s;
}

inline std::string serialize_weights(const ConvNet& net) {
  std::string out(kWeightMagic);
  out += '\n';
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    out += "layer " + std::to_string(i) + " " + std::string(kind_name(l));
    const auto dims = layer_dims(l);
    if (!dims.empty()) out += " " + dims_text(dims);
    out += '\n';
    if (const auto* p = params_of(l))
      for (double v : *p) out += format_double17(v) + '\n';
  }
  return out;
}

/// Parses `text` against `net`'s architecture and copies the parameters
/// in. On any error `net` is left untouched.
inline void deserialize_weights(ConvNet& net, std::string_view text) {
  auto lines = split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  std::size_t at = 0;
  if (lines.empty() || lines[0] != kWeightMagic)
    throw Error("weight file does not start with '" + std::string(kWeightMagic) + "'");
  ++at;
  std::vector<std::vector<double>> staged(net.layers().size());
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    if (at >= lines.size() || lines[at].empty())
      throw Error("weight file truncated before layer " + std::to_string(i));
    const auto f = split(lines[at], ' ');
    ++at;
    if (f.size() < 3 || f[0] != "layer" || f[1] != std::to_string(i))
      throw Error("malformed header for layer " + std::to_string(i));
    if (f[2] != kind_name(l))
      throw Error("layer " + std::to_string(i) + " kind mismatch: expected " +
                  std::string(kind_name(l)) + ", file has " + f[2]);
    std::vector<std::size_t> dims;
    for (std::size_t k = 3; k < f.size(); ++k)
      dims.push_back(static_cast<std::size_t>(parse_double_or_throw(f[k], "layer header")));
    const auto expected = layer_dims(l);
    if (dims != expected)
      throw Error("layer " + std::to_string(i) + " (" + std::string(kind_name(l)) +
                  ") shape mismatch: expected [" + dims_text(expected) + "], file has [" +
                  dims_text(dims) + "]");
    if (const auto* p = params_of(l)) {
      staged[i].reserve(p->size());
      for (std::size_t k = 0; k < p->size(); ++k) {
        if (at >= lines.size() || lines[at].empty() || lines[at].rfind("layer", 0) == 0)
          throw Error("weight file truncated in layer " + std::to_string(i) + ": expected " +
                      std::to_string(p->size()) + " values, found " + std::to_string(k));
        staged[i].push_back(parse_double_or_throw(lines[at], "weight file"));
        ++at;
      }
    }
  }
  for (; at < lines.size(); ++at)
    if (!lines[at].empty()) throw Error("trailing content after the last layer");
  for (std::size_t i = 0; i < net.layers().size(); ++i)
    if (auto* p = params_of(net.layers()[i])) *p = std::move(staged[i]);
  net.reset_velocity();
}

inline void save_weights(const ConvNet& net, const std::string& path) {
  write_file(path, serialize_weights(net));
}

inline void load_weights(ConvNet& net, const std::string& path) {
  deserialize_weights(net, read_file(path));
}

/// Loads pretrained weights into a fresh custom CNN, freezes the first
/// `frozen_prefix` layers and trains the rest on the target data.
inline ConvNet transfer_finetune(const std::string& pretrained_path,
                                 std::span<const Tensor> images, std::span<const Label> labels,
                                 std::size_t frozen_prefix, const TrainConfig& cfg,
                                 std::size_t image_size = 32) {
  ConvNet net = build_custom_cnn(image_size);
  load_weights(net, pretrained_path);
  net.set_frozen_prefix(frozen_prefix);
  train(net, images, labels, cfg);
  return net;
}

}  // namespace churnstack::cnn

#endif  // CHURNSTACK_CONVNET_HPP
