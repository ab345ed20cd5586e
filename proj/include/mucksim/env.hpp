#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mucksim/sensors.hpp"
#include "mucksim/soil.hpp"
#include "mucksim/vehicle.hpp"

namespace mucksim::env {

struct EnvConfig {
  double physics_dt = 0.02;      // s
  int control_interval = 3;      // physics steps per action (~16 Hz nominal)
  double timeout_s = 48.0;
  int loadings_per_pile_save = 10;
  int sequence_length = 10;
  double w1 = 100.0;
  double w2 = 1e-6;              // 1/J
  double d0 = 1.4142135623730951;  // m, planarity decay scale
  double breakout_hold_s = 1.0;
  double start_y = 1.5;          // vehicle spawn (front axle)
  double fixed_camera_y = 1.0;   // tunnel camera longitudinal position
  double fixed_camera_z = 3.5;
  double fixed_camera_pitch_deg = -10.0;
  double ma_camera_z = 2.8;      // cab roof camera
  double ma_camera_pitch_deg = -15.0;
  int camera_width = 84;
  int camera_height = 44;
  uint64_t seed = 1;
};

struct LoadingOutcome {
  double mass_t = 0.0;
  double duration_s = 0.0;
  double energy_J = 0.0;
  double position_error_m = 0.0;  // signed, bucket tip - target at terminal
  bool failed = false;
  double final_fill = 0.0;
  double planarity = 0.0;  // exp(-d^2/d0^2) at loading end
  double target_x = 0.0;
  double final_x = 0.0;
  int loading_index = 0;
  soil::PileShape pile_shape = soil::PileShape::convex;
  int pile_generation = 0;
};

enum class Phase { approach, fill, breakout_pending, done };
enum class Terminal { ongoing, success, timeout };

// r_p = 1 - min(dx/4m, 1)^0.4
double position_reward(double dx_m);
// Eq.-style per-step reward: w1*C*W*r_p*r_l - w2*p_w
double step_reward(int contact_ok, int no_slip, double r_p, double r_l, double p_w, double w1,
                   double w2);
// end-state bonus: 10 * r_p(T) * l_T
double terminal_bonus(double r_p_final, double final_fill);
// per-loading reward for the position agent: l * exp(-d^2/d0^2)
double mpa_loading_reward(double final_fill, double edge_extent_m,
                          double d0 = 1.4142135623730951);

struct StepResult {
  sensors::StackedObservation obs;
  double reward = 0.0;
  bool done = false;
  std::optional<LoadingOutcome> outcome;
};

// Single-loading episode orchestration over one persistent pile.
class LoaderEnv {
 public:
  LoaderEnv(const EnvConfig& cfg, const vehicle::VehicleParams& params,
            const DriftGeometry& drift);

  void set_pile(const soil::Heightfield& hf, soil::PileShape shape);
  void set_soil(const soil::SoilParams& soil);

  sensors::StackedObservation reset_loading(double target_x);
  StepResult step(const vehicle::ActuatorCommand& cmd);
  Terminal detect_terminal() const;

  sensors::DepthImage fixed_camera_depth() const;
  sensors::DepthImage vehicle_camera_depth() const;

  const soil::Heightfield& heightfield() const { return hf_; }
  const soil::SoilParams& soil_params() const { return soil_; }
  const vehicle::VehicleState& vehicle_state() const { return state_; }
  const vehicle::VehicleParams& vehicle_params() const { return params_; }
  const DriftGeometry& drift() const { return drift_; }
  const EnvConfig& config() const { return cfg_; }
  double clock() const { return clock_; }
  double target_x() const { return target_x_; }
  double energy() const { return energy_; }
  bool done() const { return done_; }
  Phase phase() const { return phase_; }
  int pile_generation() const { return hf_.generation; }
  soil::PileShape pile_shape() const { return pile_shape_; }
  double usable_half_range() const { return drift_.half_width() - 0.5 * params_.bucket_width; }
  int clamp_warnings() const { return clamp_warnings_; }
  double control_dt() const { return cfg_.physics_dt * cfg_.control_interval; }

  // Optional per-control-step trace sink (CSV rows).
  void set_trace(std::ostream* os) { trace_ = os; }
  static const char* trace_header();

 private:
  sensors::StackedObservation make_observation();
  bool tip_clear_of_pile() const;
  void update_phase();

  EnvConfig cfg_;
  vehicle::VehicleParams params_;
  DriftGeometry drift_;
  soil::Heightfield hf_;
  soil::SoilParams soil_;
  soil::PileShape pile_shape_ = soil::PileShape::convex;
  vehicle::VehicleState state_;
  vehicle::ActuatorLoads last_loads_;
  sensors::ObsStack stack_;
  Phase phase_ = Phase::done;
  double clock_ = 0.0;
  double target_x_ = 0.0;
  double energy_ = 0.0;
  double hold_time_ = 0.0;
  bool done_ = true;
  int step_index_ = 0;
  int clamp_warnings_ = 0;
  std::ostream* trace_ = nullptr;
};

using MpaPolicy = std::function<double(const sensors::DepthImage&)>;
using MaPolicy = std::function<vehicle::ActuatorCommand(const sensors::StackedObservation&)>;

// n consecutive loadings on the persistent pile; the shape is pushed to the
// pool once, after the configured save count. The position policy is queried
// once per loading from the fixed tunnel camera.
std::vector<LoadingOutcome> run_sequence(LoaderEnv& env, const MpaPolicy& mpa_policy,
                                         const MaPolicy& ma_policy, int n_loadings,
                                         soil::PilePool* pool);

}  // namespace mucksim::env
