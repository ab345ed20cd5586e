#include "mucksim/sac.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mucksim::sac {

ReplayBuffer::ReplayBuffer(size_t capacity, int vis_dim, int scl_dim, int act_dim)
    : capacity_(capacity), vis_dim_(vis_dim), scl_dim_(scl_dim), act_dim_(act_dim),
      slot_width_(2 * (static_cast<size_t>(vis_dim) + scl_dim) + act_dim + 2) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  data_.assign(capacity_ * slot_width_, 0.0f);
}

void ReplayBuffer::push(const Transition& t) {
  if (static_cast<int>(t.obs.visual.size()) != vis_dim_ ||
      static_cast<int>(t.obs.scalar.size()) != scl_dim_ ||
      static_cast<int>(t.action.size()) != act_dim_ ||
      static_cast<int>(t.next.visual.size()) != vis_dim_ ||
      static_cast<int>(t.next.scalar.size()) != scl_dim_) {
    throw std::invalid_argument("ReplayBuffer: dimension mismatch");
  }
  float* slot = data_.data() + next_ * slot_width_;
  float* p = slot;
  p = std::copy(t.obs.visual.begin(), t.obs.visual.end(), p);
  p = std::copy(t.obs.scalar.begin(), t.obs.scalar.end(), p);
  p = std::copy(t.action.begin(), t.action.end(), p);
  p = std::copy(t.next.visual.begin(), t.next.visual.end(), p);
  p = std::copy(t.next.scalar.begin(), t.next.scalar.end(), p);
  *p++ = t.reward;
  *p++ = t.done ? 1.0f : 0.0f;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(Rng& rng, int batch_size) const {
  if (static_cast<size_t>(batch_size) > size_) {
    throw std::runtime_error("ReplayBuffer: sample of " + std::to_string(batch_size) +
                             " from size " + std::to_string(size_));
  }
  Batch b;
  b.size = batch_size;
  b.vis = nn::Tensor<float>({batch_size, vis_dim_});
  b.scl = nn::Tensor<float>({batch_size, scl_dim_});
  b.act = nn::Tensor<float>({batch_size, act_dim_});
  b.vis2 = nn::Tensor<float>({batch_size, vis_dim_});
  b.scl2 = nn::Tensor<float>({batch_size, scl_dim_});
  b.reward.resize(static_cast<size_t>(batch_size));
  b.done.resize(static_cast<size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(size_) - 1));
    const float* slot = data_.data() + idx * slot_width_;
    const float* p = slot;
    std::copy_n(p, vis_dim_, b.vis.data() + static_cast<size_t>(i) * vis_dim_);
    p += vis_dim_;
    std::copy_n(p, scl_dim_, b.scl.data() + static_cast<size_t>(i) * scl_dim_);
    p += scl_dim_;
    std::copy_n(p, act_dim_, b.act.data() + static_cast<size_t>(i) * act_dim_);
    p += act_dim_;
    std::copy_n(p, vis_dim_, b.vis2.data() + static_cast<size_t>(i) * vis_dim_);
    p += vis_dim_;
    std::copy_n(p, scl_dim_, b.scl2.data() + static_cast<size_t>(i) * scl_dim_);
    p += scl_dim_;
    b.reward[static_cast<size_t>(i)] = p[0];
    b.done[static_cast<size_t>(i)] = p[1];
  }
  return b;
}

void ReplayBuffer::restore(const std::vector<float>& data, size_t size, size_t next) {
  if (data.size() != data_.size()) throw std::invalid_argument("ReplayBuffer: restore size mismatch");
  data_ = data;
  size_ = size;
  next_ = next;
}

SacAgent::SacAgent(const nn::TrunkSpec& actor_spec, const nn::TrunkSpec& critic_spec,
                   int action_dim, const SacConfig& cfg, uint64_t seed)
    : cfg_(cfg), action_dim_(action_dim), head_(action_dim),
      log_alpha_("log_alpha", {1}), alpha_(cfg.alpha_init),
      target_entropy_(cfg.target_entropy != 0.0 ? cfg.target_entropy : -action_dim),
      rng_(Rng::mix(seed, 0x5ac)) {
  if (actor_spec.out_dim != 2 * action_dim) {
    throw std::invalid_argument("SacAgent: actor out_dim must be 2*action_dim");
  }
  if (critic_spec.out_dim != 1) throw std::invalid_argument("SacAgent: critic out_dim must be 1");
  Rng init_rng(Rng::mix(seed, 0x171));
  actor_ = std::make_unique<nn::TrunkNet<float>>(actor_spec, init_rng, "actor");
  q1_ = std::make_unique<nn::TrunkNet<float>>(critic_spec, init_rng, "q1");
  q2_ = std::make_unique<nn::TrunkNet<float>>(critic_spec, init_rng, "q2");
  Rng dummy(0);
  qt1_ = std::make_unique<nn::TrunkNet<float>>(critic_spec, dummy, "qt1");
  qt2_ = std::make_unique<nn::TrunkNet<float>>(critic_spec, dummy, "qt2");
  qt1_->copy_params_from(*q1_);
  qt2_->copy_params_from(*q2_);

  // start exploration around sigma ~ 0.5: bias the log_std half of the head
  auto& hb = actor_->head()->bias().value;
  for (int i = action_dim_; i < 2 * action_dim_; ++i) hb.v[static_cast<size_t>(i)] = -0.7f;

  nn::Adam<float>::Config ac{cfg.lr, 0.9, 0.999, 1e-8};
  opt_actor_ = nn::Adam<float>(actor_->params(), ac);
  opt_q1_ = nn::Adam<float>(q1_->params(), ac);
  opt_q2_ = nn::Adam<float>(q2_->params(), ac);
  log_alpha_.value.v[0] = static_cast<float>(std::log(std::max(cfg.alpha_init, 1e-8)));
  opt_alpha_ = nn::Adam<float>({&log_alpha_}, ac);
}

nn::Tensor<float> SacAgent::critic_input(const nn::Tensor<float>& scl,
                                         const nn::Tensor<float>& act) const {
  const int B = act.rows();
  const int ns = scl.cols();
  nn::Tensor<float> out({B, ns + action_dim_});
  for (int b = 0; b < B; ++b) {
    float* dst = out.data() + static_cast<size_t>(b) * (ns + action_dim_);
    std::copy_n(scl.data() + static_cast<size_t>(b) * ns, ns, dst);
    std::copy_n(act.data() + static_cast<size_t>(b) * action_dim_, action_dim_, dst + ns);
  }
  return out;
}

std::vector<float> SacAgent::act(const Obs& obs, Rng& rng, bool deterministic) {
  nn::Tensor<float> vis({1, static_cast<int>(obs.visual.size())},
                        std::vector<float>(obs.visual.begin(), obs.visual.end()));
  nn::Tensor<float> scl({1, static_cast<int>(obs.scalar.size())},
                        std::vector<float>(obs.scalar.begin(), obs.scalar.end()));
  auto out = actor_->forward(vis, scl);
  auto s = head_.sample(out, (deterministic || cfg_.deterministic_policy) ? nullptr : &rng);
  return s.action.v;
}

LossReport SacAgent::update(const Batch& batch) {
  const int B = batch.size;
  const double alpha = alpha_;
  LossReport report;

  // Bootstrapped target from the target critics and a fresh policy sample.
  auto trunk2 = actor_->forward(batch.vis2, batch.scl2);
  auto s2 = head_.sample(trunk2, cfg_.deterministic_policy ? nullptr : &rng_);
  auto in2 = critic_input(batch.scl2, s2.action);
  auto y1 = qt1_->forward(batch.vis2, in2);
  auto y2 = qt2_->forward(batch.vis2, in2);
  std::vector<double> target(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const double qmin = std::min(y1.v[static_cast<size_t>(b)], y2.v[static_cast<size_t>(b)]);
    const double logp = s2.log_prob[static_cast<size_t>(b)];
    target[static_cast<size_t>(b)] =
        batch.reward[static_cast<size_t>(b)] +
        cfg_.gamma * (1.0 - batch.done[static_cast<size_t>(b)]) * (qmin - alpha * logp);
  }

  // Critic regression to the shared target.
  auto in_sa = critic_input(batch.scl, batch.act);
  for (int c = 0; c < 2; ++c) {
    auto& q = c == 0 ? *q1_ : *q2_;
    auto& opt = c == 0 ? opt_q1_ : opt_q2_;
    auto pred = q.forward(batch.vis, in_sa);
    double loss = 0.0;
    nn::Tensor<float> dq({B, 1});
    for (int b = 0; b < B; ++b) {
      const double err = pred.v[static_cast<size_t>(b)] - target[static_cast<size_t>(b)];
      loss += err * err;
      dq.v[static_cast<size_t>(b)] = static_cast<float>(2.0 * err / B);
    }
    loss /= B;
    (c == 0 ? report.q1 : report.q2) = loss;
    opt.zero_grad();
    q.backward(dq);
    opt.step();
  }

  // Actor: maximize min-critic value with entropy regularization,
  // reparameterized through the sampled action.
  auto trunk = actor_->forward(batch.vis, batch.scl);
  auto sa = head_.sample(trunk, cfg_.deterministic_policy ? nullptr : &rng_);
  auto in_pi = critic_input(batch.scl, sa.action);
  auto qa1 = q1_->forward(batch.vis, in_pi);
  auto qa2 = q2_->forward(batch.vis, in_pi);
  double actor_loss = 0.0;
  double entropy = 0.0;
  nn::Tensor<float> dq1({B, 1}), dq2({B, 1});
  for (int b = 0; b < B; ++b) {
    const float v1 = qa1.v[static_cast<size_t>(b)];
    const float v2 = qa2.v[static_cast<size_t>(b)];
    const double logp = sa.log_prob[static_cast<size_t>(b)];
    actor_loss += alpha * logp - std::min(v1, v2);
    entropy += -logp;
    if (v1 <= v2) {
      dq1.v[static_cast<size_t>(b)] = static_cast<float>(-1.0 / B);
    } else {
      dq2.v[static_cast<size_t>(b)] = static_cast<float>(-1.0 / B);
    }
  }
  actor_loss /= B;
  entropy /= B;
  report.actor = actor_loss;
  report.entropy = entropy;

  q1_->zero_grad();
  q2_->zero_grad();
  auto ig1 = q1_->backward(dq1);
  auto ig2 = q2_->backward(dq2);
  const int ns = batch.scl.cols();
  nn::Tensor<float> d_action({B, action_dim_});
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < action_dim_; ++k) {
      d_action.v[static_cast<size_t>(b) * action_dim_ + k] =
          ig1.scalar.v[static_cast<size_t>(b) * (ns + action_dim_) + ns + k] +
          ig2.scalar.v[static_cast<size_t>(b) * (ns + action_dim_) + ns + k];
    }
  }
  std::vector<float> d_logp(static_cast<size_t>(B), static_cast<float>(alpha / B));
  auto dtrunk = head_.backward(sa, d_action, d_logp);
  // stale critic gradients from the actor pass are cleared before their next update
  opt_actor_.zero_grad();
  actor_->backward(dtrunk);
  opt_actor_.step();

  // Entropy coefficient toward the target entropy (log-prob treated constant).
  if (cfg_.auto_alpha) {
    double g = 0.0, loss_a = 0.0;
    for (int b = 0; b < B; ++b) {
      const double logp = sa.log_prob[static_cast<size_t>(b)];
      g += -(logp + target_entropy_);
      loss_a += -log_alpha_.value.v[0] * (logp + target_entropy_);
    }
    g /= B;
    report.alpha_loss = loss_a / B;
    log_alpha_.zero_grad();
    log_alpha_.grad.v[0] = static_cast<float>(g);
    opt_alpha_.step();
    log_alpha_.value.v[0] = std::clamp(log_alpha_.value.v[0], -20.0f, 4.0f);
    alpha_ = std::exp(static_cast<double>(log_alpha_.value.v[0]));
  }
  report.alpha = alpha_;

  soft_update();
  ++updates_;

  if (!std::isfinite(report.q1) || !std::isfinite(report.q2) || !std::isfinite(report.actor)) {
    std::ostringstream os;
    os << "SacAgent::update produced non-finite losses: q1=" << report.q1 << " q2=" << report.q2
       << " actor=" << report.actor << " alpha=" << alpha_ << " updates=" << updates_;
    throw std::runtime_error(os.str());
  }
  return report;
}

void SacAgent::soft_update() {
  const float tau = static_cast<float>(cfg_.tau);
  for (int c = 0; c < 2; ++c) {
    auto main = (c == 0 ? q1_ : q2_)->params();
    auto tgt = (c == 0 ? qt1_ : qt2_)->params();
    for (size_t i = 0; i < main.size(); ++i) {
      auto& mv = main[i]->value.v;
      auto& tv = tgt[i]->value.v;
      for (size_t j = 0; j < mv.size(); ++j) tv[j] += tau * (mv[j] - tv[j]);
    }
  }
}

void SacAgent::save_policy(const std::string& path) const {
  nn::Checkpoint ck;
  ck.add_params<float>("", const_cast<SacAgent*>(this)->actor_->params());
  nlohmann::json meta;
  meta["action_dim"] = action_dim_;
  ck.add_text("meta", meta.dump());
  ck.save(path);
}

void SacAgent::load_policy(const std::string& path) {
  auto ck = nn::Checkpoint::load(path);
  ck.load_params<float>("", actor_->params());
}

void SacAgent::save_state(nn::Checkpoint& ck, const std::string& prefix) const {
  auto* self = const_cast<SacAgent*>(this);
  ck.add_params<float>(prefix + "p/", self->actor_->params());
  ck.add_params<float>(prefix + "p/", self->q1_->params());
  ck.add_params<float>(prefix + "p/", self->q2_->params());
  auto add_target = [&](const std::string& tag, nn::TrunkNet<float>& net) {
    for (auto* p : net.params()) {
      ck.add_f32(prefix + tag + p->name, p->value.shape, p->value.data(), p->value.size());
    }
  };
  add_target("t1/", *self->qt1_);
  add_target("t2/", *self->qt2_);
  auto add_opt = [&](const std::string& tag, nn::Adam<float>& opt) {
    for (size_t i = 0; i < opt.slot_count(); ++i) {
      const auto& m = opt.moment1(i);
      const auto& v = opt.moment2(i);
      ck.add_f64(prefix + tag + "/m" + std::to_string(i), {static_cast<int>(m.size())}, m.data(),
                 static_cast<int64_t>(m.size()));
      ck.add_f64(prefix + tag + "/v" + std::to_string(i), {static_cast<int>(v.size())}, v.data(),
                 static_cast<int64_t>(v.size()));
    }
    ck.add_text(prefix + tag + "/t", std::to_string(opt.step_count()));
  };
  add_opt("opt_actor", self->opt_actor_);
  add_opt("opt_q1", self->opt_q1_);
  add_opt("opt_q2", self->opt_q2_);
  add_opt("opt_alpha", self->opt_alpha_);
  ck.add_f32(prefix + "log_alpha", {1}, log_alpha_.value.data(), 1);
  ck.add_f64(prefix + "alpha", {1}, &alpha_, 1);
  ck.add_text(prefix + "rng", rng_.state());
  ck.add_text(prefix + "updates", std::to_string(updates_));
}

void SacAgent::load_state(const nn::Checkpoint& ck, const std::string& prefix) {
  ck.load_params<float>(prefix + "p/", actor_->params());
  ck.load_params<float>(prefix + "p/", q1_->params());
  ck.load_params<float>(prefix + "p/", q2_->params());
  auto load_target = [&](const std::string& tag, nn::TrunkNet<float>& net) {
    for (auto* p : net.params()) {
      auto v = ck.get_f32(prefix + tag + p->name);
      p->value.v = std::move(v);
    }
  };
  load_target("t1/", *qt1_);
  load_target("t2/", *qt2_);
  auto load_opt = [&](const std::string& tag, nn::Adam<float>& opt) {
    for (size_t i = 0; i < opt.slot_count(); ++i) {
      opt.moment1(i) = ck.get_f64(prefix + tag + "/m" + std::to_string(i));
      opt.moment2(i) = ck.get_f64(prefix + tag + "/v" + std::to_string(i));
    }
    opt.set_step_count(std::stoll(ck.get_text(prefix + tag + "/t")));
  };
  load_opt("opt_actor", opt_actor_);
  load_opt("opt_q1", opt_q1_);
  load_opt("opt_q2", opt_q2_);
  load_opt("opt_alpha", opt_alpha_);
  log_alpha_.value.v = ck.get_f32(prefix + "log_alpha");
  alpha_ = ck.get_f64(prefix + "alpha")[0];
  rng_.set_state(ck.get_text(prefix + "rng"));
  updates_ = std::stoll(ck.get_text(prefix + "updates"));
}

}  // namespace mucksim::sac
