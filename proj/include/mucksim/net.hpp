#pragma once

#include "mucksim/nn.hpp"

namespace mucksim::nn {

struct ConvSpec {
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
};

// Two-branch trunk: optional conv+dense visual branch and dense scalar
// branch, concatenated into a linear output head. An empty scalar_dense list
// passes the scalar input straight into the concatenation.
struct TrunkSpec {
  int image_w = 0, image_h = 0, image_ch = 0;  // image_w == 0 disables the branch
  std::vector<ConvSpec> conv;
  std::vector<int> visual_dense;
  int scalar_dim = 0;  // 0 disables the branch
  std::vector<int> scalar_dense;
  int out_dim = 0;
  double head_gain = 0.1;

  bool has_visual() const { return image_w > 0 && image_h > 0 && image_ch > 0; }
  bool has_scalar() const { return scalar_dim > 0; }
};

template <typename T>
class TrunkNet {
 public:
  TrunkNet(const TrunkSpec& spec, Rng& rng, const std::string& name) : spec_(spec) {
    if (spec.has_visual()) {
      int c = spec.image_ch, h = spec.image_h, w = spec.image_w;
      int ci = 0;
      for (const auto& cs : spec.conv) {
        auto* conv = visual_.template add<Conv2d<T>>(c, h, w, cs.out_ch, cs.kernel, cs.stride,
                                                     name + "/conv" + std::to_string(ci++));
        conv->init(rng, std::sqrt(2.0));
        visual_.template add<Relu<T>>();
        c = conv->out_c();
        h = conv->out_h();
        w = conv->out_w();
      }
      int width = c * h * w;
      int di = 0;
      for (int n : spec.visual_dense) {
        auto* d = visual_.template add<Dense<T>>(width, n, name + "/vdense" + std::to_string(di++));
        d->init(rng, std::sqrt(2.0));
        visual_.template add<Relu<T>>();
        width = n;
      }
      visual_out_ = width;
    }
    if (spec.has_scalar()) {
      int width = spec.scalar_dim;
      int di = 0;
      for (int n : spec.scalar_dense) {
        auto* d = scalar_.template add<Dense<T>>(width, n, name + "/sdense" + std::to_string(di++));
        d->init(rng, std::sqrt(2.0));
        scalar_.template add<Relu<T>>();
        width = n;
      }
      scalar_out_ = width;
    }
    head_ = std::make_unique<Dense<T>>(visual_out_ + scalar_out_, spec.out_dim, name + "/head");
    head_->init(rng, spec.head_gain);
  }

  // vis: [B, C, H, W] (ignored when the branch is disabled); scl: [B, scalar_dim]
  Tensor<T> forward(const Tensor<T>& vis, const Tensor<T>& scl) {
    const int B = spec_.has_visual() ? vis.rows() : scl.rows();
    Tensor<T> fv, fs;
    if (spec_.has_visual()) fv = visual_.forward(vis);
    if (spec_.has_scalar()) fs = scalar_.forward(scl);
    Tensor<T> feat({B, visual_out_ + scalar_out_});
    for (int b = 0; b < B; ++b) {
      T* dst = feat.data() + static_cast<size_t>(b) * (visual_out_ + scalar_out_);
      if (visual_out_ > 0) {
        std::copy_n(fv.data() + static_cast<size_t>(b) * visual_out_, visual_out_, dst);
      }
      if (scalar_out_ > 0) {
        std::copy_n(fs.data() + static_cast<size_t>(b) * scalar_out_, scalar_out_,
                    dst + visual_out_);
      }
    }
    return head_->forward(feat);
  }

  struct InputGrads {
    Tensor<T> visual;
    Tensor<T> scalar;
  };

  InputGrads backward(const Tensor<T>& dy) {
    Tensor<T> dfeat = head_->backward(dy);
    const int B = dfeat.rows();
    InputGrads g;
    if (spec_.has_visual()) {
      Tensor<T> dv({B, visual_out_});
      for (int b = 0; b < B; ++b) {
        std::copy_n(dfeat.data() + static_cast<size_t>(b) * (visual_out_ + scalar_out_),
                    visual_out_, dv.data() + static_cast<size_t>(b) * visual_out_);
      }
      g.visual = visual_.backward(dv);
    }
    if (spec_.has_scalar()) {
      if (scalar_.empty()) {
        g.scalar = Tensor<T>({B, scalar_out_});
        for (int b = 0; b < B; ++b) {
          std::copy_n(dfeat.data() + static_cast<size_t>(b) * (visual_out_ + scalar_out_) +
                          visual_out_,
                      scalar_out_, g.scalar.data() + static_cast<size_t>(b) * scalar_out_);
        }
      } else {
        Tensor<T> ds({B, scalar_out_});
        for (int b = 0; b < B; ++b) {
          std::copy_n(dfeat.data() + static_cast<size_t>(b) * (visual_out_ + scalar_out_) +
                          visual_out_,
                      scalar_out_, ds.data() + static_cast<size_t>(b) * scalar_out_);
        }
        g.scalar = scalar_.backward(ds);
      }
    }
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = visual_.params();
    auto s = scalar_.params();
    out.insert(out.end(), s.begin(), s.end());
    auto h = head_->params();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  int64_t param_count() {
    int64_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  Dense<T>* head() { return head_.get(); }
  const TrunkSpec& spec() const { return spec_; }
  int feature_dim() const { return visual_out_ + scalar_out_; }

  void copy_params_from(TrunkNet& other) {
    auto a = params();
    auto b = other.params();
    for (size_t i = 0; i < a.size(); ++i) a[i]->value = b[i]->value;
  }

 private:
  TrunkSpec spec_;
  Sequential<T> visual_;
  Sequential<T> scalar_;
  std::unique_ptr<Dense<T>> head_;
  int visual_out_ = 0;
  int scalar_out_ = 0;
};

}  // namespace mucksim::nn
