#include "mucksim/env.hpp"

#include <algorithm>
#include <stdexcept>

namespace mucksim::env {

double position_reward(double dx_m) {
  const double r = std::min(std::abs(dx_m) / 4.0, 1.0);
  return 1.0 - std::pow(r, 0.4);
}

double step_reward(int contact_ok, int no_slip, double r_p, double r_l, double p_w, double w1,
                   double w2) {
  return w1 * contact_ok * no_slip * r_p * r_l - w2 * p_w;
}

double terminal_bonus(double r_p_final, double final_fill) {
  return 10.0 * r_p_final * final_fill;
}

double mpa_loading_reward(double final_fill, double edge_extent_m, double d0) {
  const double d = edge_extent_m;
  return final_fill * std::exp(-(d * d) / (d0 * d0));
}

LoaderEnv::LoaderEnv(const EnvConfig& cfg, const vehicle::VehicleParams& params,
                     const DriftGeometry& drift)
    : cfg_(cfg), params_(params), drift_(drift),
      hf_(soil::kDefaultNx, soil::kDefaultNy, soil::kDefaultCell) {}

void LoaderEnv::set_pile(const soil::Heightfield& hf, soil::PileShape shape) {
  hf_ = hf;
  pile_shape_ = shape;
  done_ = true;
}

void LoaderEnv::set_soil(const soil::SoilParams& soil) { soil_ = soil; }

sensors::StackedObservation LoaderEnv::make_observation() {
  sensors::ScalarObsInputs in;
  in.steer_pos = 0.5 * (state_.articulation / params_.max_articulation + 1.0);
  in.steer_vel = state_.steer_vel;
  in.steer_force = last_loads_.steer_force;
  in.lift_pos = state_.lift;
  in.lift_vel = state_.lift_vel;
  in.lift_force = last_loads_.lift_force;
  in.tilt_pos = state_.tilt;
  in.tilt_vel = state_.tilt_vel;
  in.tilt_force = last_loads_.tilt_force;
  in.shaft_speed = state_.forward_speed;
  in.lateral_offset = state_.bucket_tip(params_).x - target_x_;
  in.lidar = sensors::lidar_scan(state_, params_, drift_, hf_).distances;

  const auto scalars = sensors::normalize_scalars(in, params_);
  if (stack_.size() == 0 || step_index_ == 0) {
    stack_.reset(scalars);
  } else {
    stack_.push(scalars);
  }

  sensors::StackedObservation obs;
  obs.depth = vehicle_camera_depth();
  obs.scalars = stack_.stacked();
  return obs;
}

sensors::DepthImage LoaderEnv::fixed_camera_depth() const {
  sensors::CameraIntrinsics intr;
  intr.width = cfg_.camera_width;
  intr.height = cfg_.camera_height;
  sensors::CameraPose pose;
  pose.position = {0.0, cfg_.fixed_camera_y, cfg_.fixed_camera_z};
  pose.yaw = 0.0;
  pose.pitch = deg2rad(cfg_.fixed_camera_pitch_deg);
  return sensors::render_depth(pose, intr, drift_, hf_);
}

sensors::DepthImage LoaderEnv::vehicle_camera_depth() const {
  sensors::CameraIntrinsics intr;
  intr.width = cfg_.camera_width;
  intr.height = cfg_.camera_height;
  sensors::CameraPose pose;
  const Vec2 f = state_.forward_dir();
  pose.position = {state_.x - 1.0 * f.x, state_.y - 1.0 * f.y, cfg_.ma_camera_z};
  pose.yaw = state_.heading;
  pose.pitch = deg2rad(cfg_.ma_camera_pitch_deg);
  return sensors::render_depth(pose, intr, drift_, hf_);
}

sensors::StackedObservation LoaderEnv::reset_loading(double target_x) {
  const double limit = usable_half_range();
  if (target_x < -limit || target_x > limit) {
    ++clamp_warnings_;
    target_x = std::clamp(target_x, -limit, limit);
  }
  target_x_ = target_x;

  state_ = vehicle::VehicleState{};
  state_.x = 0.0;
  state_.y = cfg_.start_y;
  state_.heading = 0.0;

  last_loads_ = vehicle::ActuatorLoads{};
  clock_ = 0.0;
  energy_ = 0.0;
  hold_time_ = 0.0;
  done_ = false;
  phase_ = Phase::approach;
  step_index_ = 0;
  return make_observation();
}

bool LoaderEnv::tip_clear_of_pile() const {
  double y_min = 0.0;
  bool found = false;
  for (int iy = 0; iy < hf_.ny() && !found; ++iy) {
    for (int ix = 0; ix < hf_.nx(); ++ix) {
      if (hf_.at(ix, iy) > soil::kEdgeEpsilon) {
        // rows scan outward; the first solid row bounds the pile edge
        y_min = hf_.cell_center_y(iy);
        found = true;
        break;
      }
    }
  }
  if (!found) return true;
  return state_.bucket_tip(params_).y < y_min;
}

Terminal LoaderEnv::detect_terminal() const {
  if (hold_time_ >= cfg_.breakout_hold_s) return Terminal::success;
  if (clock_ >= cfg_.timeout_s) return Terminal::timeout;
  return Terminal::ongoing;
}

void LoaderEnv::update_phase() {
  if (phase_ == Phase::approach && state_.fill_volume > 0.0) phase_ = Phase::fill;
  if (phase_ == Phase::fill && state_.tilt >= params_.tilt_cutoff) phase_ = Phase::breakout_pending;
}

const char* LoaderEnv::trace_header() {
  return "clock_s,fill,reward,r_p,r_l,p_tilt,p_lift,p_steer,p_engine,wall_contact,wheel_slip";
}

StepResult LoaderEnv::step(const vehicle::ActuatorCommand& cmd) {
  if (done_) throw std::logic_error("LoaderEnv::step called on a finished loading");
  for (double v : {cmd.throttle, cmd.steer_rate, cmd.lift_rate, cmd.tilt_rate}) {
    if (!std::isfinite(v)) throw std::invalid_argument("LoaderEnv::step: non-finite action");
  }

  const double l_prev = state_.fill_fraction(params_);
  vehicle::WorkBreakdown work;
  bool contact = false, slip = false;

  for (int k = 0; k < cfg_.control_interval; ++k) {
    const auto cut = vehicle::bucket_engagement(state_, params_, hf_);
    const double resistance = cut.engaged ? soil::dig_resistance(soil_, cut) : 0.0;
    const double tip_y_before = state_.bucket_tip(params_).y;
    auto res = vehicle::step_vehicle(state_, cmd, resistance, cfg_.physics_dt, params_, drift_);
    state_ = res.state;
    last_loads_ = res.loads;
    work += res.work;
    contact = contact || res.flags.wall_contact;
    slip = slip || res.flags.wheel_slip;

    const double tip_y_after = state_.bucket_tip(params_).y;
    if (cut.cutting && tip_y_after > tip_y_before) {
      SweptRegion region{cut.x0, cut.x1, tip_y_before, tip_y_after, cut.plane};
      const double removed = soil::excavate(hf_, region);
      if (removed > 0.0) {
        state_ = vehicle::fill_bucket(state_, removed, soil_.density, params_);
      }
    }
  }

  clock_ += control_dt();
  ++step_index_;
  energy_ += work.total();
  update_phase();

  const double l_now = state_.fill_fraction(params_);
  const double dx = std::abs(state_.bucket_tip(params_).x - target_x_);
  const double r_p = position_reward(dx);
  const double r_l = l_now - l_prev;
  const double p_w = work.reward_weighted();
  const int c_ok = contact ? 0 : 1;
  const int w_ok = slip ? 0 : 1;
  double reward = step_reward(c_ok, w_ok, r_p, r_l, p_w, cfg_.w1, cfg_.w2);

  // Breakout hold: bucket fully curled, rate command near zero, tip clear.
  const bool holding = state_.tilt >= 0.999 && std::abs(cmd.tilt_rate) < 0.05 &&
                       tip_clear_of_pile();
  hold_time_ = holding ? hold_time_ + control_dt() : 0.0;

  StepResult out;
  const Terminal term = detect_terminal();
  if (term != Terminal::ongoing) {
    done_ = true;
    phase_ = Phase::done;
    LoadingOutcome o;
    o.failed = term == Terminal::timeout;
    o.final_fill = l_now;
    o.mass_t = state_.fill_volume * soil_.density / 1000.0;
    o.duration_s = clock_;
    o.energy_J = energy_;
    o.position_error_m = state_.bucket_tip(params_).x - target_x_;
    o.target_x = target_x_;
    o.final_x = state_.bucket_tip(params_).x;
    const double d = soil::pile_edge_extent(hf_);
    o.planarity = std::exp(-(d * d) / (cfg_.d0 * cfg_.d0));
    o.pile_shape = pile_shape_;
    o.pile_generation = hf_.generation;
    if (term == Terminal::success) {
      reward += terminal_bonus(r_p, l_now);
    }
    out.outcome = o;
  }

  if (trace_) {
    *trace_ << clock_ << "," << l_now << "," << reward << "," << r_p << "," << r_l << ","
            << work.tilt << "," << work.lift << "," << work.steer << "," << work.engine << ","
            << (contact ? 1 : 0) << "," << (slip ? 1 : 0) << "\n";
  }

  out.reward = reward;
  out.done = done_;
  out.obs = make_observation();
  return out;
}

std::vector<LoadingOutcome> run_sequence(LoaderEnv& env, const MpaPolicy& mpa_policy,
                                         const MaPolicy& ma_policy, int n_loadings,
                                         soil::PilePool* pool) {
  if (n_loadings < 1) throw std::invalid_argument("run_sequence: n_loadings must be >= 1");
  std::vector<LoadingOutcome> outcomes;
  outcomes.reserve(static_cast<size_t>(n_loadings));
  const int parent_generation = env.pile_generation();
  for (int i = 1; i <= n_loadings; ++i) {
    const double target = mpa_policy(env.fixed_camera_depth());
    auto obs = env.reset_loading(target);
    while (true) {
      auto res = env.step(ma_policy(obs));
      obs = std::move(res.obs);
      if (res.done) {
        LoadingOutcome o = *res.outcome;
        o.loading_index = i;
        outcomes.push_back(o);
        break;
      }
    }
    if (pool && i == env.config().loadings_per_pile_save) {
      pool->push(env.heightfield(), parent_generation);
    }
  }
  return outcomes;
}

}  // namespace mucksim::env
