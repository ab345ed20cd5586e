#include "mucksim/agents.hpp"

#include <algorithm>
#include <cmath>

namespace mucksim::agents {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "A" || name == "a") return Variant::A;
  if (name == "B" || name == "b") return Variant::B;
  if (name == "C" || name == "c") return Variant::C;
  throw std::invalid_argument("unknown controller variant: " + name);
}

std::vector<float> encode_depth(const sensors::DepthImage& depth, int pool, double max_range) {
  const int w = depth.width / pool;
  const int h = depth.height / pool;
  std::vector<float> out(static_cast<size_t>(w) * h);
  const float inv = static_cast<float>(1.0 / max_range);
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      float acc = 0.0f;
      for (int ky = 0; ky < pool; ++ky) {
        for (int kx = 0; kx < pool; ++kx) {
          acc += depth.at(ox * pool + kx, oy * pool + ky);
        }
      }
      out[static_cast<size_t>(oy) * w + ox] = acc / (pool * pool) * inv;
    }
  }
  return out;
}

MaObsAdapter::MaObsAdapter(const MaNetConfig& cfg, double max_range)
    : cfg_(cfg), max_range_(max_range) {
  if (cfg.image_pool < 1 || cfg.image_w % cfg.image_pool != 0 ||
      cfg.image_h % cfg.image_pool != 0) {
    throw std::invalid_argument("MaObsAdapter: pool must divide image dimensions");
  }
  vis_w_ = cfg.image_w / cfg.image_pool;
  vis_h_ = cfg.image_h / cfg.image_pool;
}

sac::Obs MaObsAdapter::encode(const sensors::StackedObservation& obs) const {
  sac::Obs o;
  o.visual = encode_depth(obs.depth, cfg_.image_pool, max_range_);
  o.scalar.assign(obs.scalars.begin(), obs.scalars.end());
  return o;
}

nn::TrunkSpec MaObsAdapter::actor_spec() const {
  nn::TrunkSpec s;
  s.image_ch = 1;
  s.image_h = vis_h_;
  s.image_w = vis_w_;
  s.conv = cfg_.conv;
  s.visual_dense = cfg_.visual_dense;
  s.scalar_dim = scalar_dim();
  s.scalar_dense = cfg_.scalar_dense;
  s.out_dim = 2 * kMaActionDim;
  return s;
}

nn::TrunkSpec MaObsAdapter::critic_spec() const {
  nn::TrunkSpec s = actor_spec();
  s.scalar_dim = scalar_dim() + kMaActionDim;
  s.out_dim = 1;
  return s;
}

MpaObsAdapter::MpaObsAdapter(const MpaNetConfig& cfg, double max_range)
    : cfg_(cfg), max_range_(max_range) {
  if (cfg.image_pool < 1 || cfg.image_w % cfg.image_pool != 0 ||
      cfg.image_h % cfg.image_pool != 0) {
    throw std::invalid_argument("MpaObsAdapter: pool must divide image dimensions");
  }
  vis_w_ = cfg.image_w / cfg.image_pool;
  vis_h_ = cfg.image_h / cfg.image_pool;
}

sac::Obs MpaObsAdapter::encode(const sensors::DepthImage& depth) const {
  sac::Obs o;
  o.visual = encode_depth(depth, cfg_.image_pool, max_range_);
  return o;
}

nn::TrunkSpec MpaObsAdapter::actor_spec() const {
  nn::TrunkSpec s;
  s.image_ch = 1;
  s.image_h = vis_h_;
  s.image_w = vis_w_;
  s.conv = cfg_.conv;
  s.visual_dense = cfg_.dense;
  s.scalar_dim = 0;
  s.out_dim = 2 * kMpaActionDim;
  return s;
}

nn::TrunkSpec MpaObsAdapter::critic_spec() const {
  nn::TrunkSpec s = actor_spec();
  s.scalar_dim = kMpaActionDim;  // action enters the head directly
  s.out_dim = 1;
  return s;
}

vehicle::ActuatorCommand command_from_action(const std::vector<float>& a) {
  if (a.size() != kMaActionDim) {
    throw std::invalid_argument("command_from_action: expected 4 components");
  }
  vehicle::ActuatorCommand cmd;
  cmd.throttle = a[0];
  cmd.steer_rate = a[1];
  cmd.lift_rate = a[2];
  cmd.tilt_rate = a[3];
  return cmd.clamped();
}

double target_from_action(double action, double usable_half_range) {
  return std::clamp(action, -1.0, 1.0) * usable_half_range;
}

double action_from_target(double target, double usable_half_range) {
  return std::clamp(target / usable_half_range, -1.0, 1.0);
}

void open_loading(CooperationState& coop, sac::Obs selection_obs, std::vector<float> action,
                  double target_x) {
  if (coop.loading_open) {
    throw std::logic_error("open_loading: previous loading transition still open");
  }
  coop.loading_open = true;
  coop.selection_obs = std::move(selection_obs);
  coop.selection_action = std::move(action);
  coop.target_x = target_x;
}

sac::Transition build_mpa_transition(CooperationState& coop, const env::LoadingOutcome& outcome,
                                     sac::Obs next_obs, bool sequence_end) {
  if (!coop.loading_open) {
    throw std::logic_error("build_mpa_transition: no loading in progress");
  }
  sac::Transition t;
  t.obs = std::move(coop.selection_obs);
  t.action = std::move(coop.selection_action);
  t.reward = static_cast<float>(outcome.final_fill * outcome.planarity);
  t.next = std::move(next_obs);
  t.done = sequence_end;
  coop.loading_open = false;
  return t;
}

}  // namespace mucksim::agents
