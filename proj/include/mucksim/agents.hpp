#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mucksim/env.hpp"
#include "mucksim/sac.hpp"

namespace mucksim::agents {

enum class Variant { A, B, C };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Mucking agent nets: conv+dense visual branch and dense scalar branch,
// concatenated at the last hidden layer. The obs adapter can average-pool the
// depth image before the encoder (training-size knob; 1 = native).
struct MaNetConfig {
  int image_w = 84, image_h = 44;
  int image_pool = 1;
  std::vector<nn::ConvSpec> conv = {{16, 8, 4}, {32, 4, 2}};
  std::vector<int> visual_dense = {256, 256, 256, 256};
  std::vector<int> scalar_dense = {256, 256, 256, 256};
};

// Position agent: visual branch only, smaller dense stack, 1-D action.
struct MpaNetConfig {
  int image_w = 84, image_h = 44;
  int image_pool = 1;
  std::vector<nn::ConvSpec> conv = {{16, 8, 4}, {32, 4, 2}};
  std::vector<int> dense = {128, 128, 128};
};

constexpr int kMaActionDim = 4;   // throttle, steer rate, lift rate, tilt rate
constexpr int kMpaActionDim = 1;  // lateral target

class MaObsAdapter {
 public:
  explicit MaObsAdapter(const MaNetConfig& cfg, double max_range = sensors::kMaxRange);

  sac::Obs encode(const sensors::StackedObservation& obs) const;
  int vis_w() const { return vis_w_; }
  int vis_h() const { return vis_h_; }
  int vis_dim() const { return vis_w_ * vis_h_; }
  int scalar_dim() const { return sensors::kStackDepth * sensors::kScalarObsDim; }

  nn::TrunkSpec actor_spec() const;
  nn::TrunkSpec critic_spec() const;

 private:
  MaNetConfig cfg_;
  double max_range_;
  int vis_w_, vis_h_;
};

class MpaObsAdapter {
 public:
  explicit MpaObsAdapter(const MpaNetConfig& cfg, double max_range = sensors::kMaxRange);

  sac::Obs encode(const sensors::DepthImage& depth) const;
  int vis_w() const { return vis_w_; }
  int vis_h() const { return vis_h_; }
  int vis_dim() const { return vis_w_ * vis_h_; }

  nn::TrunkSpec actor_spec() const;
  nn::TrunkSpec critic_spec() const;

 private:
  MpaNetConfig cfg_;
  double max_range_;
  int vis_w_, vis_h_;
};

// Depth image -> normalized, pooled net input.
std::vector<float> encode_depth(const sensors::DepthImage& depth, int pool, double max_range);

vehicle::ActuatorCommand command_from_action(const std::vector<float>& action);

// Affine bijection between the policy output in [-1, 1] and the usable
// lateral range (half drift width minus half bucket width).
double target_from_action(double action, double usable_half_range);
double action_from_target(double target, double usable_half_range);

// One position decision per loading cycle; the transition closes when the
// loading outcome arrives.
struct CooperationState {
  bool loading_open = false;
  double target_x = 0.0;
  sac::Obs selection_obs;
  std::vector<float> selection_action;
};

void open_loading(CooperationState& coop, sac::Obs selection_obs, std::vector<float> action,
                  double target_x);

// reward = final fill * planarity (both already carried by the outcome).
sac::Transition build_mpa_transition(CooperationState& coop, const env::LoadingOutcome& outcome,
                                     sac::Obs next_obs, bool sequence_end);

}  // namespace mucksim::agents
