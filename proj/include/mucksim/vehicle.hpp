#pragma once

#include <algorithm>

#include "mucksim/geometry.hpp"
#include "mucksim/soil.hpp"

namespace mucksim::vehicle {

struct VehicleParams {
  double total_mass = 50000.0;  // kg, unloaded
  double bucket_width = 3.5;    // m
  double bucket_capacity_volume = 17500.0 / 2900.0;  // m3, 17.5 t at 2900 kg/m3
  double bucket_capacity_mass_t = 17.5;

  double max_speed = 1.7;          // m/s, gear-limited forward
  double max_reverse_speed = 0.9;  // m/s
  double engine_power_max = 250e3; // W, shared by drive and hydraulics
  double stall_force = 350e3;      // N, low-speed drive force cap
  double traction_coefficient = 0.6;
  double rolling_coeff = 0.03;
  double fill_normal_gain = 1.5;   // bucket load leverage onto the driven axle
  double slip_advance_factor = 0.25;

  // planar articulated geometry
  double front_axle_to_tip = 2.0;
  double axle_to_pivot_front = 1.8;
  double axle_to_pivot_rear = 1.8;
  double body_half_width = 1.4;
  double max_articulation = 0.7;  // rad

  // hydraulic cylinders: normalized extensions over physical strokes
  double lift_stroke = 1.2, tilt_stroke = 0.9, steer_stroke = 1.0;  // m
  double lift_rate_max = 0.30, tilt_rate_max = 0.36, steer_rate_max = 0.40;  // m/s
  double lift_max_height = 3.0;  // m, cutting edge height at lift = 1
  double boom_mass = 3000.0;     // kg equivalent carried by the lift cylinders
  double tilt_cutoff = 0.85;     // cutting stops once the bucket is curled past this
  double v_eps = 0.05;           // m/s, power-cap regularization
};

struct VehicleState {
  double x = 0.0, y = 0.0;    // front axle position
  double heading = 0.0;       // rad, 0 points into the drift (+y)
  double articulation = 0.0;  // waist angle (rad)
  double lift = 0.0, tilt = 0.0;  // normalized cylinder extensions in [0,1]
  double lift_vel = 0.0, tilt_vel = 0.0, steer_vel = 0.0;  // cylinder speeds (m/s)
  double forward_speed = 0.0;  // center shaft speed (m/s)
  double fill_volume = 0.0;    // m3
  double fill_mass = 0.0;      // kg
  bool wall_contact = false;
  bool wheel_slip = false;

  double fill_fraction(const VehicleParams& p) const {
    return std::clamp(fill_volume / p.bucket_capacity_volume, 0.0, 1.0);
  }
  Vec2 forward_dir() const { return {std::sin(heading), std::cos(heading)}; }
  Vec2 bucket_tip(const VehicleParams& p) const {
    const Vec2 f = forward_dir();
    return {x + p.front_axle_to_tip * f.x, y + p.front_axle_to_tip * f.y};
  }
  double bucket_edge_height(const VehicleParams& p) const { return lift * p.lift_max_height; }
};

struct ActuatorCommand {
  double throttle = 0.0;
  double steer_rate = 0.0;
  double lift_rate = 0.0;
  double tilt_rate = 0.0;
  ActuatorCommand clamped() const {
    auto c = [](double v) { return std::clamp(v, -1.0, 1.0); };
    return {c(throttle), c(steer_rate), c(lift_rate), c(tilt_rate)};
  }
};

// Work magnitudes since the previous action (J).
struct WorkBreakdown {
  double tilt = 0.0, lift = 0.0, steer = 0.0, engine = 0.0;
  double total() const { return tilt + lift + steer + engine; }
  // Reward-side weighting: engine work enters at one fifth.
  double reward_weighted() const { return tilt + lift + steer + engine / 5.0; }
  WorkBreakdown& operator+=(const WorkBreakdown& o) {
    tilt += o.tilt; lift += o.lift; steer += o.steer; engine += o.engine;
    return *this;
  }
};

struct StepFlags {
  bool wall_contact = false;
  bool wheel_slip = false;
};

// Per-actuator load force and achieved cylinder speed over one step.
struct ActuatorLoads {
  double lift_force = 0.0, lift_speed = 0.0;
  double tilt_force = 0.0, tilt_speed = 0.0;
  double steer_force = 0.0, steer_speed = 0.0;
  double drive_force = 0.0, drive_speed = 0.0;
};

// |force x velocity| * dt per actuator.
WorkBreakdown actuator_work(const ActuatorLoads& loads, double dt);

struct VehicleStepResult {
  VehicleState state;
  WorkBreakdown work;
  StepFlags flags;
  ActuatorLoads loads;
};

// One physics substep. Engine power is split between drive and hydraulics in
// proportion to command magnitudes; commanded cylinder velocities are scaled
// down when the power share cannot sustain them against the load. Wheel slip
// triggers when the demanded drawbar force exceeds traction, or when driving
// forward against a resistance above traction; slipping caps the tractive
// force at the friction limit and cuts ground advance by a fixed factor.
VehicleStepResult step_vehicle(const VehicleState& state, const ActuatorCommand& cmd,
                               double resistance, double dt, const VehicleParams& params,
                               const DriftGeometry& drift);

// Cutting-edge engagement with the pile ahead of the blade. Depth is the mean
// positive column depth below the cut plane across the blade span; width is
// the engaged lateral overlap. Curling the bucket past the tilt cutoff stops
// cutting.
CutState bucket_engagement(const VehicleState& state, const VehicleParams& params,
                           const soil::Heightfield& hf);

// Add removed volume to the bucket, clamped at capacity; overflow spills.
VehicleState fill_bucket(VehicleState state, double removed_volume, double soil_density,
                         const VehicleParams& params);

}  // namespace mucksim::vehicle
