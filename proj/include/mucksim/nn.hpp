#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucksim/rng.hpp"

namespace mucksim::nn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), T(0)) {}
  Tensor(Shape s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<int64_t>(v.size()) != shape_numel(shape)) {
      throw std::invalid_argument("Tensor: data size does not match shape");
    }
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  // product of all trailing dims; layers treat inputs as [batch, features]
  int cols() const {
    int64_t c = shape.size() > 1 ? shape_numel(Shape(shape.begin() + 1, shape.end())) : 0;
    return static_cast<int>(c);
  }
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}
  void zero_grad() { grad.zero(); }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

// Fully connected layer; accepts [B, n] (trailing dims flattened).
template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(int in, int out, const std::string& name)
      : in_(in), out_(out), w_(name + "/w", {out, in}), b_(name + "/b", {out}) {}

  void init(Rng& rng, double gain) {
    // row-normalized random directions scaled by the gain
    for (int o = 0; o < out_; ++o) {
      double norm2 = 0.0;
      std::vector<double> row(static_cast<size_t>(in_));
      for (int i = 0; i < in_; ++i) {
        row[static_cast<size_t>(i)] = rng.normal();
        norm2 += row[static_cast<size_t>(i)] * row[static_cast<size_t>(i)];
      }
      const double inv = gain / std::sqrt(std::max(norm2, 1e-12));
      for (int i = 0; i < in_; ++i) {
        w_.value.v[static_cast<size_t>(o) * in_ + i] = static_cast<T>(row[static_cast<size_t>(i)] * inv);
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.cols() != in_) throw std::invalid_argument("Dense: input width mismatch");
    x_ = x;
    const int B = x.rows();
    Tensor<T> y({B, out_});
    ConstMatMap<T> X(x.data(), B, in_);
    ConstMatMap<T> W(w_.value.data(), out_, in_);
    MatMap<T> Y(y.data(), B, out_);
    Y.noalias() = X * W.transpose();
    ConstMatMap<T> Bv(b_.value.data(), 1, out_);
    Y.rowwise() += Bv.row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int B = dy.rows();
    ConstMatMap<T> dY(dy.data(), B, out_);
    ConstMatMap<T> X(x_.data(), B, in_);
    ConstMatMap<T> W(w_.value.data(), out_, in_);
    MatMap<T> dW(w_.grad.data(), out_, in_);
    MatMap<T> dB(b_.grad.data(), 1, out_);
    dW.noalias() += dY.transpose() * X;
    dB.row(0) += dY.colwise().sum();
    Tensor<T> dx({B, in_});
    MatMap<T> dX(dx.data(), B, in_);
    dX.noalias() = dY * W;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }
  Param<T>& weights() { return w_; }
  Param<T>& bias() { return b_; }
  int out_dim() const { return out_; }

 private:
  int in_, out_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

template <typename T>
class Relu : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = x;
    for (auto& v : y_.v) v = v > T(0) ? v : T(0);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) {
      if (y_.v[i] <= T(0)) dx.v[i] = T(0);
    }
    return dx;
  }

 private:
  Tensor<T> y_;
};

// Valid-padding 2-D convolution over [B, C, H, W] input, im2col + GEMM.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, const std::string& name)
      : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), s_(stride),
        out_h_((in_h - kernel) / stride + 1), out_w_((in_w - kernel) / stride + 1),
        w_(name + "/w", {out_c, in_c * kernel * kernel}), b_(name + "/b", {out_c}) {
    if (out_h_ <= 0 || out_w_ <= 0) throw std::invalid_argument("Conv2d: kernel larger than input");
  }

  void init(Rng& rng, double gain) {
    const double fan_in = static_cast<double>(in_c_) * k_ * k_;
    const double scale = gain / std::sqrt(fan_in);
    for (auto& v : w_.value.v) v = static_cast<T>(rng.normal() * scale);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.cols() != in_c_ * in_h_ * in_w_) throw std::invalid_argument("Conv2d: input size mismatch");
    x_ = x;
    const int B = x.rows();
    const int patch = in_c_ * k_ * k_;
    const int cols_n = out_h_ * out_w_;
    Tensor<T> y({B, out_c_, out_h_, out_w_});
    std::vector<T> cols(static_cast<size_t>(patch) * cols_n);
    ConstMatMap<T> W(w_.value.data(), out_c_, patch);
    for (int b = 0; b < B; ++b) {
      im2col(x.data() + static_cast<size_t>(b) * x.cols(), cols.data());
      ConstMatMap<T> C(cols.data(), patch, cols_n);
      MatMap<T> Y(y.data() + static_cast<size_t>(b) * out_c_ * cols_n, out_c_, cols_n);
      Y.noalias() = W * C;
      for (int oc = 0; oc < out_c_; ++oc) Y.row(oc).array() += b_.value.v[static_cast<size_t>(oc)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int B = dy.rows();
    const int patch = in_c_ * k_ * k_;
    const int cols_n = out_h_ * out_w_;
    Tensor<T> dx({B, in_c_, in_h_, in_w_});
    std::vector<T> cols(static_cast<size_t>(patch) * cols_n);
    std::vector<T> dcols(static_cast<size_t>(patch) * cols_n);
    ConstMatMap<T> W(w_.value.data(), out_c_, patch);
    MatMap<T> dW(w_.grad.data(), out_c_, patch);
    for (int b = 0; b < B; ++b) {
      im2col(x_.data() + static_cast<size_t>(b) * x_.cols(), cols.data());
      ConstMatMap<T> C(cols.data(), patch, cols_n);
      ConstMatMap<T> dY(dy.data() + static_cast<size_t>(b) * out_c_ * cols_n, out_c_, cols_n);
      dW.noalias() += dY * C.transpose();
      for (int oc = 0; oc < out_c_; ++oc) b_.grad.v[static_cast<size_t>(oc)] += dY.row(oc).sum();
      MatMap<T> dC(dcols.data(), patch, cols_n);
      dC.noalias() = W.transpose() * dY;
      col2im(dcols.data(), dx.data() + static_cast<size_t>(b) * dx.cols());
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }
  int out_c() const { return out_c_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

 private:
  void im2col(const T* x, T* cols) const {
    const int cols_n = out_h_ * out_w_;
    for (int c = 0; c < in_c_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int row = (c * k_ + ky) * k_ + kx;
          T* dst = cols + static_cast<size_t>(row) * cols_n;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * s_ + ky;
            const T* src = x + (static_cast<size_t>(c) * in_h_ + iy) * in_w_ + kx;
            for (int ox = 0; ox < out_w_; ++ox) dst[oy * out_w_ + ox] = src[ox * s_];
          }
        }
      }
    }
  }

  void col2im(const T* dcols, T* dx) const {
    const int cols_n = out_h_ * out_w_;
    for (int c = 0; c < in_c_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int row = (c * k_ + ky) * k_ + kx;
          const T* src = dcols + static_cast<size_t>(row) * cols_n;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * s_ + ky;
            T* dst = dx + (static_cast<size_t>(c) * in_h_ + iy) * in_w_ + kx;
            for (int ox = 0; ox < out_w_; ++ox) dst[ox * s_] += src[oy * out_w_ + ox];
          }
        }
      }
    }
  }

  int in_c_, in_h_, in_w_, out_c_, k_, s_, out_h_, out_w_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  bool empty() const { return layers_.empty(); }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur);
    return cur;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }
  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      auto p = l->params();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// Squashed-Gaussian policy head over a trunk output laid out as [mu | log_std].
// log_std is clamped to [-20, 2]; the log-density includes the tanh Jacobian.
template <typename T>
class GaussianTanhHead {
 public:
  explicit GaussianTanhHead(int action_dim) : k_(action_dim) {}

  struct Sample {
    Tensor<T> action;         // [B, k]
    std::vector<T> log_prob;  // [B]
    // caches for backward
    Tensor<T> a, sigma_xi, tanh_term;
    std::vector<uint8_t> clamped;
  };

  int action_dim() const { return k_; }

  Sample sample(const Tensor<T>& trunk_out, Rng* rng) const {
    const int B = trunk_out.rows();
    std::vector<double> xi(static_cast<size_t>(B) * k_, 0.0);
    if (rng) {
      for (auto& v : xi) v = rng->normal();
    }
    return sample_with_noise(trunk_out, xi);
  }

  Sample sample_with_noise(const Tensor<T>& trunk_out, const std::vector<double>& noise) const {
    const int B = trunk_out.rows();
    if (trunk_out.cols() != 2 * k_) throw std::invalid_argument("head: trunk width != 2k");
    if (noise.size() != static_cast<size_t>(B) * k_) {
      throw std::invalid_argument("head: noise size mismatch");
    }
    Sample s;
    s.action = Tensor<T>({B, k_});
    s.a = Tensor<T>({B, k_});
    s.sigma_xi = Tensor<T>({B, k_});
    s.tanh_term = Tensor<T>({B, k_});
    s.clamped.assign(static_cast<size_t>(B) * k_, 0);
    s.log_prob.assign(static_cast<size_t>(B), T(0));
    constexpr double kLogStdMin = -20.0, kLogStdMax = 2.0;
    constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)
    for (int b = 0; b < B; ++b) {
      double lp = 0.0;
      for (int i = 0; i < k_; ++i) {
        const size_t idx = static_cast<size_t>(b) * k_ + i;
        const double mu = trunk_out.v[static_cast<size_t>(b) * 2 * k_ + i];
        double ls = trunk_out.v[static_cast<size_t>(b) * 2 * k_ + k_ + i];
        const bool cl = ls < kLogStdMin || ls > kLogStdMax;
        ls = std::clamp(ls, kLogStdMin, kLogStdMax);
        const double sigma = std::exp(ls);
        const double xi = noise[idx];
        const double u = mu + sigma * xi;
        const double a = std::tanh(u);
        const double t = 1.0 - a * a;
        lp += -0.5 * xi * xi - kHalfLog2Pi - ls - std::log(t + kEps);
        s.a.v[idx] = static_cast<T>(a);
        s.action.v[idx] = static_cast<T>(a);
        s.sigma_xi.v[idx] = static_cast<T>(sigma * xi);
        s.tanh_term.v[idx] = static_cast<T>(2.0 * a * t / (t + kEps));
        s.clamped[idx] = cl ? 1 : 0;
      }
      s.log_prob[static_cast<size_t>(b)] = static_cast<T>(lp);
    }
    return s;
  }

  // Reparameterized gradients: d_action [B,k] and d_logp [B] flow back to the
  // trunk output [B, 2k].
  Tensor<T> backward(const Sample& s, const Tensor<T>& d_action,
                     const std::vector<T>& d_logp) const {
    const int B = s.a.rows();
    Tensor<T> dtrunk({B, 2 * k_});
    for (int b = 0; b < B; ++b) {
      const double dlp = d_logp.empty() ? 0.0 : static_cast<double>(d_logp[static_cast<size_t>(b)]);
      for (int i = 0; i < k_; ++i) {
        const size_t idx = static_cast<size_t>(b) * k_ + i;
        const double a = s.a.v[idx];
        const double t = 1.0 - a * a;
        const double da = d_action.v.empty() ? 0.0 : static_cast<double>(d_action.v[idx]);
        const double sx = s.sigma_xi.v[idx];
        const double tt = s.tanh_term.v[idx];  // dlogp/du
        const double d_mu = da * t + dlp * tt;
        double d_ls = da * t * sx + dlp * (tt * sx - 1.0);
        if (s.clamped[idx]) d_ls = 0.0;
        dtrunk.v[static_cast<size_t>(b) * 2 * k_ + i] = static_cast<T>(d_mu);
        dtrunk.v[static_cast<size_t>(b) * 2 * k_ + k_ + i] = static_cast<T>(d_ls);
      }
    }
    return dtrunk;
  }

  static constexpr double kEps = 1e-6;

 private:
  int k_;
};

template <typename T>
class Adam {
 public:
  struct Config {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(std::vector<Param<T>*> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      slots_.push_back({std::vector<double>(p->value.v.size(), 0.0),
                        std::vector<double>(p->value.v.size(), 0.0)});
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto* p = params_[pi];
      auto& slot = slots_[pi];
      for (size_t i = 0; i < p->value.v.size(); ++i) {
        const double g = p->grad.v[i];
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        p->value.v[i] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<double>& moment1(size_t i) { return slots_[i].m; }
  std::vector<double>& moment2(size_t i) { return slots_[i].v; }
  size_t slot_count() const { return slots_.size(); }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Param<T>*> params_;
  Config cfg_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

}  // namespace mucksim::nn
