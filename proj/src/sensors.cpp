#include "mucksim/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mucksim::sensors {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Axis-aligned plane hit constrained to the drift box faces.
double wall_hits(const Vec3& o, const Vec3& d, const DriftGeometry& g) {
  double best = kInf;
  auto consider = [&](double t) {
    if (t > 1e-9 && t < best) best = t;
  };
  const double hw = g.half_width();
  if (std::abs(d.x) > 1e-12) {
    for (double wx : {-hw, hw}) {
      const double t = (wx - o.x) / d.x;
      const double y = o.y + t * d.y, z = o.z + t * d.z;
      if (y >= 0.0 && y <= g.length && z >= 0.0 && z <= g.height) consider(t);
    }
  }
  if (std::abs(d.y) > 1e-12) {
    for (double wy : {0.0, g.length}) {
      const double t = (wy - o.y) / d.y;
      const double x = o.x + t * d.x, z = o.z + t * d.z;
      if (std::abs(x) <= hw && z >= 0.0 && z <= g.height) consider(t);
    }
  }
  if (std::abs(d.z) > 1e-12) {
    for (double wz : {0.0, g.height}) {
      const double t = (wz - o.z) / d.z;
      const double x = o.x + t * d.x, y = o.y + t * d.y;
      if (std::abs(x) <= hw && y >= 0.0 && y <= g.length) consider(t);
    }
  }
  return best;
}

// 2-D DDA over the height columns; returns hit distance or +inf.
double heightfield_hit(const Vec3& o, const Vec3& d, const soil::Heightfield& hf,
                       double tmax) {
  const double cell = hf.cell_size();
  int ix = hf.cell_ix(o.x);
  int iy = hf.cell_iy(o.y);

  const double inv_dx = std::abs(d.x) > 1e-12 ? 1.0 / d.x : 0.0;
  const double inv_dy = std::abs(d.y) > 1e-12 ? 1.0 / d.y : 0.0;
  const int step_x = d.x > 0 ? 1 : -1;
  const int step_y = d.y > 0 ? 1 : -1;

  auto boundary_x = [&](int i) { return hf.x_min() + i * cell; };
  auto boundary_y = [&](int i) { return i * cell; };

  double t_next_x = inv_dx != 0.0
                        ? (boundary_x(d.x > 0 ? ix + 1 : ix) - o.x) * inv_dx
                        : kInf;
  double t_next_y = inv_dy != 0.0
                        ? (boundary_y(d.y > 0 ? iy + 1 : iy) - o.y) * inv_dy
                        : kInf;
  const double t_delta_x = inv_dx != 0.0 ? cell * std::abs(inv_dx) : kInf;
  const double t_delta_y = inv_dy != 0.0 ? cell * std::abs(inv_dy) : kInf;

  double t_cur = 0.0;
  while (t_cur <= tmax) {
    const double t_exit = std::min({t_next_x, t_next_y, tmax});
    if (hf.in_bounds(ix, iy)) {
      const double h = hf.at(ix, iy);
      const double z0 = o.z + d.z * t_cur;
      if (z0 <= h) return t_cur;  // entered the column side below its top
      const double z1 = o.z + d.z * t_exit;
      if (d.z < 0.0 && z1 < h) return (h - o.z) / d.z;  // crossed the top face
    }
    if (t_exit >= tmax) break;
    if (t_next_x < t_next_y) {
      ix += step_x;
      t_cur = t_next_x;
      t_next_x += t_delta_x;
    } else {
      iy += step_y;
      t_cur = t_next_y;
      t_next_y += t_delta_y;
    }
  }
  return kInf;
}

}  // namespace

double raycast_scene(const Vec3& o, const Vec3& d, const DriftGeometry& drift,
                     const soil::Heightfield& hf, double max_range) {
  const double tw = wall_hits(o, d, drift);
  const double cap = std::min(tw, max_range);
  const double th = heightfield_hit(o, d, hf, cap);
  return std::clamp(std::min(tw, th), 1e-6, max_range);
}

DepthImage render_depth(const CameraPose& pose, const CameraIntrinsics& intr,
                        const DriftGeometry& drift, const soil::Heightfield& hf) {
  DepthImage img;
  img.width = intr.width;
  img.height = intr.height;
  img.depths.resize(static_cast<size_t>(intr.width) * intr.height);

  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const Vec3 fwd{sy * cp, cy * cp, sp};
  const Vec3 right{cy, -sy, 0.0};
  const Vec3 up{-sy * sp, -cy * sp, cp};
  const double tan_h = std::tan(0.5 * deg2rad(intr.fov_h_deg));
  const double tan_v = std::tan(0.5 * deg2rad(intr.fov_v_deg));

  for (int py = 0; py < intr.height; ++py) {
    // pixel row 0 at the top of the image
    const double v = (1.0 - 2.0 * (py + 0.5) / intr.height) * tan_v;
    for (int px = 0; px < intr.width; ++px) {
      const double u = (2.0 * (px + 0.5) / intr.width - 1.0) * tan_h;
      Vec3 d{fwd.x + u * right.x + v * up.x,
             fwd.y + u * right.y + v * up.y,
             fwd.z + u * right.z + v * up.z};
      const double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
      d = {d.x / n, d.y / n, d.z / n};
      img.depths[static_cast<size_t>(py) * intr.width + px] =
          static_cast<float>(raycast_scene(pose.position, d, drift, hf, intr.max_range));
    }
  }
  return img;
}

void write_pgm16(const DepthImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm16: cannot open " + path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  for (float depth : img.depths) {
    const double mm = std::clamp(static_cast<double>(depth) * 1000.0, 0.0, 65535.0);
    const uint16_t q = static_cast<uint16_t>(mm);
    const unsigned char hi = static_cast<unsigned char>(q >> 8);
    const unsigned char lo = static_cast<unsigned char>(q & 0xff);
    f.put(static_cast<char>(hi));
    f.put(static_cast<char>(lo));
  }
}

LidarScan lidar_scan(const vehicle::VehicleState& state, const vehicle::VehicleParams& params,
                     const DriftGeometry& drift, const soil::Heightfield& hf,
                     double max_range) {
  LidarScan scan;
  const Vec2 tip = state.bucket_tip(params);
  const Vec3 origin{tip.x, tip.y, kLidarHeight};
  for (size_t i = 0; i < kLidarAzimuthsDeg.size(); ++i) {
    const double az = state.heading + deg2rad(kLidarAzimuthsDeg[i]);
    const Vec3 dir{std::sin(az), std::cos(az), 0.0};
    scan.distances[i] = raycast_scene(origin, dir, drift, hf, max_range);
  }
  return scan;
}

ScalarObs normalize_scalars(const ScalarObsInputs& in, const vehicle::VehicleParams& p,
                            double max_range) {
  auto clamp1 = [](double v) { return std::clamp(v, -1.0, 1.0); };
  auto force_n = [&](double f) { return 2.0 * std::clamp(f / p.stall_force, 0.0, 1.0) - 1.0; };
  ScalarObs o;
  o[0] = clamp1(2.0 * in.steer_pos - 1.0);
  o[1] = clamp1(in.steer_vel / p.steer_rate_max);
  o[2] = force_n(in.steer_force);
  o[3] = clamp1(2.0 * in.lift_pos - 1.0);
  o[4] = clamp1(in.lift_vel / p.lift_rate_max);
  o[5] = force_n(in.lift_force);
  o[6] = clamp1(2.0 * in.tilt_pos - 1.0);
  o[7] = clamp1(in.tilt_vel / p.tilt_rate_max);
  o[8] = force_n(in.tilt_force);
  o[9] = clamp1(in.shaft_speed / p.max_speed);
  o[10] = clamp1(in.lateral_offset / 4.5);
  for (int i = 0; i < 5; ++i) {
    o[11 + i] = clamp1(2.0 * in.lidar[static_cast<size_t>(i)] / max_range - 1.0);
  }
  return o;
}

void ObsStack::reset(const ScalarObs& first) {
  history_.clear();
  for (int i = 0; i < kStackDepth; ++i) history_.push_back(first);
}

void ObsStack::push(const ScalarObs& obs) {
  if (history_.empty()) {
    reset(obs);
    return;
  }
  history_.push_back(obs);
  while (history_.size() > kStackDepth) history_.pop_front();
}

std::vector<double> ObsStack::stacked() const {
  std::vector<double> out;
  out.reserve(kStackDepth * kScalarObsDim);
  for (const auto& s : history_) {
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

}  // namespace mucksim::sensors
