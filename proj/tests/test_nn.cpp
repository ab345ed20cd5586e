#include <cmath>
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "mucksim/checkpoint.hpp"
#include "mucksim/net.hpp"
#include "mucksim/nn.hpp"

using namespace mucksim;
using namespace mucksim::nn;

namespace {

// central differences at h = 1e-4 in 64-bit against the analytic gradients
double grad_check(std::vector<Param<double>*> params, const std::function<double()>& loss,
                  const std::function<void()>& backward) {
  for (auto* p : params) p->zero_grad();
  backward();
  const double h = 1e-4;
  double worst = 0.0;
  for (auto* p : params) {
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      const double keep = p->value.v[i];
      p->value.v[i] = keep + h;
      const double lp = loss();
      p->value.v[i] = keep - h;
      const double lm = loss();
      p->value.v[i] = keep;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = p->grad.v[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dense forward") {
  SUBCASE("identity weights pass the input through") {
    Dense<double> d(3, 3, "d");
    for (int i = 0; i < 3; ++i) d.weights().value.v[static_cast<size_t>(i) * 3 + i] = 1.0;
    Tensor<double> x({2, 3}, {1, 2, 3, -4, 0.5, 6});
    const auto y = d.forward(x);
    CHECK(y.v == x.v);
  }

  SUBCASE("zero weights and bias give zero output") {
    Dense<double> d(4, 2, "d");
    Tensor<double> x({1, 4}, {1, 2, 3, 4});
    const auto y = d.forward(x);
    CHECK(y.v == std::vector<double>{0.0, 0.0});
  }

  SUBCASE("matches a hand-computed 2x2 product") {
    Dense<double> d(2, 2, "d");
    // W = [[1, 2], [3, -1]], b = [0.5, -0.5], x = [2, 1]
    d.weights().value.v = {1, 2, 3, -1};
    d.bias().value.v = {0.5, -0.5};
    Tensor<double> x({1, 2}, {2, 1});
    const auto y = d.forward(x);
    CHECK(y.v[0] == doctest::Approx(1 * 2 + 2 * 1 + 0.5));   // 4.5
    CHECK(y.v[1] == doctest::Approx(3 * 2 - 1 * 1 - 0.5));   // 4.5
  }

  SUBCASE("forward is pure") {
    Rng rng(5);
    Dense<float> d(6, 4, "d");
    d.init(rng, 1.0);
    Tensor<float> x({3, 6});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));
    const auto a = d.forward(x);
    const auto b = d.forward(x);
    CHECK(a.v == b.v);
  }
}

TEST_CASE("linear layer analytic gradient: loss = sum(y)") {
  Dense<double> d(3, 2, "d");
  Rng rng(2);
  d.init(rng, 1.0);
  Tensor<double> x({2, 3}, {1, -2, 3, 0.5, 4, -1});
  auto y = d.forward(x);
  Tensor<double> dy({2, 2}, {1, 1, 1, 1});
  d.weights().zero_grad();
  d.bias().zero_grad();
  d.backward(dy);
  // dW[o][i] = sum over batch of x[b][i]
  for (int o = 0; o < 2; ++o) {
    CHECK(d.weights().grad.v[static_cast<size_t>(o) * 3 + 0] == doctest::Approx(1.5));
    CHECK(d.weights().grad.v[static_cast<size_t>(o) * 3 + 1] == doctest::Approx(2.0));
    CHECK(d.weights().grad.v[static_cast<size_t>(o) * 3 + 2] == doctest::Approx(2.0));
    CHECK(d.bias().grad.v[static_cast<size_t>(o)] == doctest::Approx(2.0));
  }
}

TEST_CASE("zero output gradient produces zero parameter gradients") {
  Rng rng(3);
  Sequential<double> net;
  auto* l1 = net.add<Dense<double>>(4, 6, "l1");
  l1->init(rng, 1.0);
  net.add<Relu<double>>();
  auto* l2 = net.add<Dense<double>>(6, 3, "l2");
  l2->init(rng, 1.0);

  Tensor<double> x({2, 4});
  for (auto& v : x.v) v = rng.uniform(-1, 1);
  net.forward(x);
  for (auto* p : net.params()) p->zero_grad();
  net.backward(Tensor<double>({2, 3}));
  for (auto* p : net.params()) {
    for (double g : p->grad.v) CHECK(g == 0.0);
  }
}

TEST_CASE("gradient check per layer type") {
  Rng rng(7);

  SUBCASE("dense + relu stack") {
    Sequential<double> net;
    auto* l1 = net.add<Dense<double>>(5, 8, "l1");
    l1->init(rng, 1.0);
    net.add<Relu<double>>();
    auto* l2 = net.add<Dense<double>>(8, 3, "l2");
    l2->init(rng, 1.0);
    Tensor<double> x({4, 5});
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    auto loss = [&]() {
      auto y = net.forward(x);
      double s = 0;
      for (double v : y.v) s += 0.5 * v * v;
      return s;
    };
    auto backward = [&]() {
      auto y = net.forward(x);
      net.backward(y);
    };
    CHECK(grad_check(net.params(), loss, backward) < 1e-4);
  }

  SUBCASE("conv2d") {
    Sequential<double> net;
    auto* c1 = net.add<Conv2d<double>>(2, 7, 9, 3, 3, 2, "c1");
    c1->init(rng, 1.0);
    net.add<Relu<double>>();
    auto* c2 = net.add<Conv2d<double>>(3, c1->out_h(), c1->out_w(), 2, 2, 1, "c2");
    c2->init(rng, 1.0);
    Tensor<double> x({2, 2, 7, 9});
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    auto loss = [&]() {
      auto y = net.forward(x);
      double s = 0;
      for (double v : y.v) s += 0.5 * v * v;
      return s;
    };
    auto backward = [&]() {
      auto y = net.forward(x);
      net.backward(y);
    };
    CHECK(grad_check(net.params(), loss, backward) < 1e-4);
  }

  SUBCASE("two-branch trunk") {
    TrunkSpec spec;
    spec.image_ch = 1;
    spec.image_h = 8;
    spec.image_w = 10;
    spec.conv = {{3, 3, 2}};
    spec.visual_dense = {12};
    spec.scalar_dim = 6;
    spec.scalar_dense = {10};
    spec.out_dim = 4;
    spec.head_gain = 0.5;
    Rng init(11);
    TrunkNet<double> net(spec, init, "t");
    Tensor<double> vis({3, 1, 8, 10});
    Tensor<double> scl({3, 6});
    Rng data(13);
    for (auto& v : vis.v) v = data.uniform(0, 1);
    for (auto& v : scl.v) v = data.uniform(-1, 1);
    auto loss = [&]() {
      auto y = net.forward(vis, scl);
      double s = 0;
      for (double v : y.v) s += 0.5 * v * v;
      return s;
    };
    auto backward = [&]() {
      auto y = net.forward(vis, scl);
      net.backward(y);
    };
    CHECK(grad_check(net.params(), loss, backward) < 1e-4);
  }

  SUBCASE("policy head through a trunk (reparameterized)") {
    TrunkSpec spec;
    spec.scalar_dim = 5;
    spec.scalar_dense = {12};
    spec.out_dim = 6;  // 3 actions: mu | log_std
    spec.head_gain = 0.5;
    Rng init(19);
    TrunkNet<double> net(spec, init, "pi");
    GaussianTanhHead<double> head(3);
    Tensor<double> vis;
    Tensor<double> scl({4, 5});
    Rng data(23);
    for (auto& v : scl.v) v = data.uniform(-1, 1);
    std::vector<double> xi(4 * 3);
    for (auto& v : xi) v = data.normal();

    // loss mixes the action components and the log-probability
    auto loss = [&]() {
      auto out = net.forward(vis, scl);
      auto s = head.sample_with_noise(out, xi);
      double acc = 0;
      for (size_t i = 0; i < s.action.v.size(); ++i) acc += (0.3 + 0.1 * i) * s.action.v[i];
      for (double lp : s.log_prob) acc += 0.7 * lp;
      return acc;
    };
    auto backward = [&]() {
      auto out = net.forward(vis, scl);
      auto s = head.sample_with_noise(out, xi);
      Tensor<double> da({4, 3});
      for (size_t i = 0; i < da.v.size(); ++i) da.v[i] = 0.3 + 0.1 * i;
      std::vector<double> dlp(4, 0.7);
      auto dtrunk = head.backward(s, da, dlp);
      net.backward(dtrunk);
    };
    CHECK(grad_check(net.params(), loss, backward) < 1e-4);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Param<float> p("p", {3});
    p.value.v = {1.0f, -2.0f, 0.5f};
    Adam<float> opt({&p}, {1e-3, 0.9, 0.999, 1e-8});
    const auto before = p.value.v;
    p.zero_grad();
    opt.step();
    CHECK(p.value.v == before);
  }

  SUBCASE("first step with unit gradient moves by about -lr") {
    Param<double> p("p", {1});
    p.value.v = {0.0};
    Adam<double> opt({&p}, {1e-5, 0.9, 0.999, 1e-8});
    p.grad.v = {1.0};
    opt.step();
    // mhat = 1, vhat = 1 -> delta = -lr / (1 + eps)
    CHECK(p.value.v[0] == doctest::Approx(-1e-5).epsilon(1e-6));
  }

  SUBCASE("two identical runs are bit-identical") {
    auto run = [&]() {
      Rng rng(31);
      Sequential<float> net;
      auto* d = net.add<Dense<float>>(4, 4, "d");
      d->init(rng, 1.0);
      Adam<float> opt(net.params(), {1e-3, 0.9, 0.999, 1e-8});
      Tensor<float> x({2, 4});
      for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));
      for (int i = 0; i < 50; ++i) {
        auto y = net.forward(x);
        for (auto* p : net.params()) p->zero_grad();
        net.backward(y);
        opt.step();
      }
      return d->weights().value.v;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("gaussian tanh head") {
  GaussianTanhHead<double> head(1);

  SUBCASE("vanishing sigma gives tanh(mu) deterministically") {
    Tensor<double> out({1, 2}, {0.8, -30.0});  // log_std below the clamp
    Rng rng(3);
    auto s = head.sample(out, &rng);
    CHECK(s.action.v[0] == doctest::Approx(std::tanh(0.8)).epsilon(1e-6));
    auto det = head.sample(out, nullptr);
    CHECK(det.action.v[0] == doctest::Approx(std::tanh(0.8)));
  }

  SUBCASE("sampled actions stay inside (-1, 1)") {
    Rng rng(5);
    Tensor<double> out({1, 2}, {2.5, 1.5});  // wide gaussian
    for (int i = 0; i < 5000; ++i) {
      auto s = head.sample(out, &rng);
      CHECK(s.action.v[0] > -1.0);
      CHECK(s.action.v[0] < 1.0);
    }
  }

  SUBCASE("squashed density integrates to one (quadrature oracle)") {
    // map a xi-grid through the head and integrate exp(log_prob) over action
    const double mu = 0.4, log_std = -0.3;
    Tensor<double> out({1, 2}, {mu, log_std});
    const int n = 4001;
    std::vector<double> a(n), p(n);
    for (int i = 0; i < n; ++i) {
      const double xi = -8.0 + 16.0 * i / (n - 1);
      auto s = head.sample_with_noise(out, {xi});
      a[static_cast<size_t>(i)] = s.action.v[0];
      p[static_cast<size_t>(i)] = std::exp(s.log_prob[0]);
    }
    double integral = 0.0;
    for (int i = 1; i < n; ++i) {
      integral += 0.5 * (p[static_cast<size_t>(i)] + p[static_cast<size_t>(i - 1)]) *
                  (a[static_cast<size_t>(i)] - a[static_cast<size_t>(i - 1)]);
    }
    CHECK(std::abs(integral - 1.0) < 1e-3);
  }
}

TEST_CASE("checkpoint container round-trips exactly") {
  Rng rng(41);
  TrunkSpec spec;
  spec.scalar_dim = 7;
  spec.scalar_dense = {16, 16};
  spec.out_dim = 2;
  TrunkNet<float> net(spec, rng, "net");

  Checkpoint ck;
  ck.add_params<float>("", net.params());
  ck.add_text("note", "hello");
  std::vector<double> moments = {1.0 / 3.0, -2.5e-7, 3.14159265358979};
  ck.add_f64("m", {3}, moments.data(), 3);

  const auto path = std::filesystem::temp_directory_path() / "mucksim_ck.ckpt";
  ck.save(path.string());
  auto loaded = Checkpoint::load(path.string());

  TrunkNet<float> other(spec, rng, "net");  // different random init
  loaded.load_params<float>("", other.params());
  auto a = net.params();
  auto b = other.params();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.v == b[i]->value.v);
  CHECK(loaded.get_text("note") == "hello");
  CHECK(loaded.get_f64("m") == moments);
  CHECK_FALSE(loaded.has("missing"));
  std::filesystem::remove(path);
}

TEST_CASE("trunk parameter count matches the architecture arithmetic") {
  TrunkSpec spec;
  spec.image_ch = 1;
  spec.image_h = 44;
  spec.image_w = 84;
  spec.conv = {{16, 8, 4}, {32, 4, 2}};
  spec.visual_dense = {256, 256, 256, 256};
  spec.scalar_dim = 64;
  spec.scalar_dense = {256, 256, 256, 256};
  spec.out_dim = 8;
  Rng rng(1);
  TrunkNet<float> net(spec, rng, "ma");

  // conv chains: 84x44 -> 20x10 -> 9x4
  const int64_t conv1 = 16 * (1 * 8 * 8) + 16;
  const int64_t conv2 = 32 * (16 * 4 * 4) + 32;
  const int64_t flat = 32 * 9 * 4;
  const int64_t vdense = (flat * 256 + 256) + 3 * (256 * 256 + 256);
  const int64_t sdense = (64 * 256 + 256) + 3 * (256 * 256 + 256);
  const int64_t headp = 512 * 8 + 8;
  CHECK(net.param_count() == conv1 + conv2 + vdense + sdense + headp);
}
