#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mucksim/checkpoint.hpp"
#include "mucksim/net.hpp"
#include "mucksim/rng.hpp"

namespace mucksim::sac {

struct SacConfig {
  double gamma = 0.995;
  double lr = 1e-5;
  double tau = 0.005;
  double alpha_init = 0.2;
  int batch_size = 256;
  bool auto_alpha = true;
  double target_entropy = 0.0;  // 0 -> use -action_dim
  int updates_per_env_step = 1;
  bool deterministic_policy = false;  // ablation: sample at the mean
};

struct Obs {
  std::vector<float> visual;
  std::vector<float> scalar;
};

struct Transition {
  Obs obs;
  std::vector<float> action;
  float reward = 0.0f;
  Obs next;
  bool done = false;
};

struct Batch {
  int size = 0;
  nn::Tensor<float> vis, scl, act, vis2, scl2;
  std::vector<float> reward, done;
};

// Fixed-capacity ring; overwrites oldest first. Sampling is uniform with
// replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, int vis_dim, int scl_dim, int act_dim);

  void push(const Transition& t);
  Batch sample(Rng& rng, int batch_size) const;

  size_t size() const { return size_; }
  size_t capacity() const { return capacity_; }
  int vis_dim() const { return vis_dim_; }
  int scl_dim() const { return scl_dim_; }
  int act_dim() const { return act_dim_; }

  // serialization access for training-state snapshots
  const std::vector<float>& storage() const { return data_; }
  size_t next_slot() const { return next_; }
  void restore(const std::vector<float>& data, size_t size, size_t next);
  size_t slot_width() const { return slot_width_; }

 private:
  size_t capacity_;
  int vis_dim_, scl_dim_, act_dim_;
  size_t slot_width_;
  std::vector<float> data_;
  size_t size_ = 0, next_ = 0;
};

struct LossReport {
  double q1 = 0, q2 = 0, actor = 0, alpha_loss = 0;
  double alpha = 0, entropy = 0;
};

// Soft actor-critic with twin critics, target networks, and optional
// entropy-coefficient auto-tuning toward a target entropy.
class SacAgent {
 public:
  SacAgent(const nn::TrunkSpec& actor_spec, const nn::TrunkSpec& critic_spec, int action_dim,
           const SacConfig& cfg, uint64_t seed);

  std::vector<float> act(const Obs& obs, Rng& rng, bool deterministic);
  LossReport update(const Batch& batch);

  int action_dim() const { return action_dim_; }
  double alpha() const { return alpha_; }
  int64_t update_count() const { return updates_; }
  const SacConfig& config() const { return cfg_; }

  nn::TrunkNet<float>& actor() { return *actor_; }
  nn::TrunkNet<float>& critic1() { return *q1_; }
  nn::TrunkNet<float>& critic2() { return *q2_; }
  nn::TrunkNet<float>& target1() { return *qt1_; }
  nn::TrunkNet<float>& target2() { return *qt2_; }

  void save_policy(const std::string& path) const;
  void load_policy(const std::string& path);

  void save_state(nn::Checkpoint& ck, const std::string& prefix) const;
  void load_state(const nn::Checkpoint& ck, const std::string& prefix);

 private:
  nn::Tensor<float> critic_input(const nn::Tensor<float>& scl, const nn::Tensor<float>& act) const;
  void soft_update();

  SacConfig cfg_;
  int action_dim_;
  nn::GaussianTanhHead<float> head_;
  std::unique_ptr<nn::TrunkNet<float>> actor_, q1_, q2_, qt1_, qt2_;
  nn::Adam<float> opt_actor_, opt_q1_, opt_q2_;
  nn::Param<float> log_alpha_;
  nn::Adam<float> opt_alpha_;
  double alpha_;
  double target_entropy_;
  Rng rng_;
  int64_t updates_ = 0;
};

}  // namespace mucksim::sac
