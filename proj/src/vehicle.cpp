#include "mucksim/vehicle.hpp"

#include <cmath>
#include <stdexcept>

namespace mucksim::vehicle {

WorkBreakdown actuator_work(const ActuatorLoads& loads, double dt) {
  WorkBreakdown w;
  w.lift = std::abs(loads.lift_force * loads.lift_speed) * dt;
  w.tilt = std::abs(loads.tilt_force * loads.tilt_speed) * dt;
  w.steer = std::abs(loads.steer_force * loads.steer_speed) * dt;
  w.engine = std::abs(loads.drive_force * loads.drive_speed) * dt;
  return w;
}

namespace {

struct CylinderResult {
  double ext;    // new normalized extension
  double speed;  // achieved cylinder speed (m/s), signed
};

// Integrate one cylinder against its load under a power budget. The achieved
// speed honours end-stop clamping so reported work matches actual motion.
CylinderResult step_cylinder(double ext, double rate_cmd, double rate_max, double stroke,
                             double load_force, double power_budget, double dt) {
  double v = rate_cmd * rate_max;
  if (load_force > 1e-9 && std::abs(v) * load_force > power_budget) {
    v = (v > 0 ? 1.0 : -1.0) * power_budget / load_force;
  }
  double next = std::clamp(ext + v * dt / stroke, 0.0, 1.0);
  const double achieved = (next - ext) * stroke / dt;
  return {next, achieved};
}

}  // namespace

VehicleStepResult step_vehicle(const VehicleState& state, const ActuatorCommand& raw_cmd,
                               double resistance, double dt, const VehicleParams& p,
                               const DriftGeometry& drift) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_vehicle: dt must be positive");
  if (!std::isfinite(resistance) || resistance < 0.0) {
    throw std::invalid_argument("step_vehicle: resistance must be finite and >= 0");
  }
  for (double v : {raw_cmd.throttle, raw_cmd.steer_rate, raw_cmd.lift_rate, raw_cmd.tilt_rate}) {
    if (!std::isfinite(v)) throw std::invalid_argument("step_vehicle: non-finite command");
  }

  const ActuatorCommand cmd = raw_cmd.clamped();
  VehicleState s = state;
  ActuatorLoads loads;

  // Power split across active commands.
  const double wd = std::abs(cmd.throttle);
  const double wl = std::abs(cmd.lift_rate);
  const double wt = std::abs(cmd.tilt_rate);
  const double ws = std::abs(cmd.steer_rate);
  const double wsum = wd + wl + wt + ws;
  const double p_drive = wsum > 1e-12 ? p.engine_power_max * wd / wsum : 0.0;
  const double p_lift = wsum > 1e-12 ? p.engine_power_max * wl / wsum : 0.0;
  const double p_tilt = wsum > 1e-12 ? p.engine_power_max * wt / wsum : 0.0;
  const double p_steer = wsum > 1e-12 ? p.engine_power_max * ws / wsum : 0.0;

  // Hydraulic loads: carried mass plus a share of the dig reaction.
  const double carried = (p.boom_mass + s.fill_mass) * kGravity;
  loads.lift_force = 1.2 * carried + 0.3 * resistance;
  loads.tilt_force = 0.6 * carried + 0.3 * resistance;
  loads.steer_force = 0.15 * p.total_mass * kGravity;

  const auto lift_r = step_cylinder(s.lift, cmd.lift_rate, p.lift_rate_max, p.lift_stroke,
                                    loads.lift_force, p_lift, dt);
  const auto tilt_r = step_cylinder(s.tilt, cmd.tilt_rate, p.tilt_rate_max, p.tilt_stroke,
                                    loads.tilt_force, p_tilt, dt);
  const auto steer_r = step_cylinder(0.5 * (s.articulation / p.max_articulation + 1.0),
                                     cmd.steer_rate, p.steer_rate_max, p.steer_stroke,
                                     loads.steer_force, p_steer, dt);
  s.lift = lift_r.ext;
  s.tilt = tilt_r.ext;
  s.lift_vel = lift_r.speed;
  s.tilt_vel = tilt_r.speed;
  s.steer_vel = steer_r.speed;
  loads.lift_speed = lift_r.speed;
  loads.tilt_speed = tilt_r.speed;
  loads.steer_speed = steer_r.speed;

  const double art_prev = s.articulation;
  s.articulation = (2.0 * steer_r.ext - 1.0) * p.max_articulation;
  const double art_rate = (s.articulation - art_prev) / dt;

  // Drive force demand: stall cap, gear fade near top speed, power cap.
  const double v0 = s.forward_speed;
  double f_demand = cmd.throttle * p.stall_force;
  if (f_demand > 0.0 && v0 > 0.0) {
    f_demand *= std::clamp((p.max_speed - v0) / (0.15 * p.max_speed), 0.0, 1.0);
  } else if (f_demand < 0.0 && v0 < 0.0) {
    f_demand *= std::clamp((p.max_reverse_speed + v0) / (0.15 * p.max_reverse_speed), 0.0, 1.0);
  }
  if (std::abs(v0) > p.v_eps) {
    const double cap = p_drive / std::abs(v0);
    f_demand = std::clamp(f_demand, -cap, cap);
  }

  // Traction on the driven axle; bucket load transfers extra normal force.
  const double m_tot = p.total_mass + s.fill_mass;
  const double normal_driven = 0.5 * p.total_mass * kGravity +
                               s.fill_mass * kGravity * p.fill_normal_gain;
  const double traction_limit = p.traction_coefficient * normal_driven;
  const bool slip = std::abs(f_demand) > traction_limit ||
                    (f_demand > 0.0 && v0 > 1e-3 && resistance > traction_limit);
  double f_drive = slip ? std::copysign(traction_limit, f_demand) : f_demand;

  // Longitudinal dynamics: dig resistance opposes forward motion, rolling
  // resistance opposes any motion.
  const double f_roll_mag = p.rolling_coeff * m_tot * kGravity;
  double f_net = f_drive;
  if (std::abs(v0) > 1e-4) {
    f_net -= std::copysign(f_roll_mag, v0);
    if (v0 > 0.0) f_net -= resistance;
  } else {
    // Static regime: stay put unless drive overcomes resistance + rolling.
    const double hold = (f_drive > 0.0 ? resistance : 0.0) + f_roll_mag;
    if (std::abs(f_drive) <= hold) f_net = 0.0;
  }
  double v1 = v0 + f_net / m_tot * dt;
  if (v0 > 0.0 && v1 < 0.0 && f_drive >= 0.0) v1 = 0.0;
  if (v0 < 0.0 && v1 > 0.0 && f_drive <= 0.0) v1 = 0.0;
  if (std::abs(v0) <= 1e-4 && f_net == 0.0) v1 = 0.0;
  s.forward_speed = v1;

  const double advance = v1 * dt * (slip ? p.slip_advance_factor : 1.0);

  // Planar articulated steering kinematics.
  const double lf = p.axle_to_pivot_front;
  const double lr = p.axle_to_pivot_rear;
  const double beta = s.articulation;
  const double denom = lf * std::cos(beta) + lr;
  const double yaw_rate = (advance / dt) * std::sin(beta) / denom + lr * art_rate / denom;
  s.heading += yaw_rate * dt;
  const Vec2 f = s.forward_dir();
  s.x += advance * f.x;
  s.y += advance * f.y;

  // Wall containment: check bucket corners and rear body corners.
  const Vec2 right{std::cos(s.heading), -std::sin(s.heading)};
  const Vec2 tip = s.bucket_tip(p);
  const double rear_off = lf + lr;
  const Vec2 rear{s.x - rear_off * f.x, s.y - rear_off * f.y};
  double worst = 0.0;
  for (const Vec2& c : {Vec2{tip.x + 0.5 * p.bucket_width * right.x, 0},
                        Vec2{tip.x - 0.5 * p.bucket_width * right.x, 0},
                        Vec2{rear.x + p.body_half_width * right.x, 0},
                        Vec2{rear.x - p.body_half_width * right.x, 0}}) {
    const double over = std::abs(c.x) - drift.half_width();
    worst = std::max(worst, over);
  }
  bool contact = worst > 0.0;
  if (contact) s.x -= std::copysign(worst, s.x);
  if (s.y < 0.0) s.y = 0.0;
  const double tip_over = s.bucket_tip(p).y - drift.length;
  if (tip_over > 0.0) {  // back wall
    s.y -= tip_over;
    s.forward_speed = std::min(s.forward_speed, 0.0);
    contact = true;
  }

  loads.drive_force = f_drive;
  loads.drive_speed = v1;

  StepFlags flags;
  flags.wall_contact = contact;
  flags.wheel_slip = slip;
  s.wall_contact = contact;
  s.wheel_slip = slip;

  return {s, actuator_work(loads, dt), flags, loads};
}

CutState bucket_engagement(const VehicleState& state, const VehicleParams& p,
                           const soil::Heightfield& hf) {
  CutState cut;
  const Vec2 tip = state.bucket_tip(p);
  cut.plane = state.bucket_edge_height(p);
  cut.x0 = tip.x - 0.5 * p.bucket_width;
  cut.x1 = tip.x + 0.5 * p.bucket_width;
  cut.tip_y = tip.y;
  cut.advance_speed = std::max(state.forward_speed, 0.0);

  const double probe_y = tip.y + 0.5 * hf.cell_size();
  const int iy = hf.cell_iy(probe_y);
  if (iy < 0 || iy >= hf.ny()) return cut;

  double engaged_w = 0.0;
  double depth_sum = 0.0;
  const int ix0 = std::max(hf.cell_ix(cut.x0), 0);
  const int ix1 = std::min(hf.cell_ix(cut.x1), hf.nx() - 1);
  for (int ix = ix0; ix <= ix1; ++ix) {
    const double cell_lo = hf.x_min() + ix * hf.cell_size();
    const double cell_hi = cell_lo + hf.cell_size();
    const double overlap = std::min(cell_hi, cut.x1) - std::max(cell_lo, cut.x0);
    if (overlap <= 0.0) continue;
    const double d = hf.at(ix, iy) - cut.plane;
    if (d > 0.0) {
      engaged_w += overlap;
      depth_sum += d * overlap;
    }
  }
  if (engaged_w > 0.0) {
    cut.engaged = true;
    // curled past the cutoff the bucket only pushes; soil is not removed
    cut.cutting = state.tilt < p.tilt_cutoff;
    cut.width = std::min(engaged_w, p.bucket_width);
    cut.depth = depth_sum / engaged_w;
  }
  return cut;
}

VehicleState fill_bucket(VehicleState state, double removed_volume, double soil_density,
                         const VehicleParams& p) {
  if (removed_volume < 0.0) throw std::invalid_argument("fill_bucket: negative volume");
  state.fill_volume = std::min(state.fill_volume + removed_volume, p.bucket_capacity_volume);
  state.fill_mass = state.fill_volume * soil_density;
  return state;
}

}  // namespace mucksim::vehicle
