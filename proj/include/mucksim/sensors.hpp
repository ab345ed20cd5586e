#pragma once

#include <array>
#include <deque>
#include <string>
#include <vector>

#include "mucksim/geometry.hpp"
#include "mucksim/soil.hpp"
#include "mucksim/vehicle.hpp"

namespace mucksim::sensors {

constexpr double kMaxRange = 20.0;  // m, both camera and lidar clamp misses here

struct CameraIntrinsics {
  int width = 84;
  int height = 44;
  double fov_h_deg = 90.0;
  double fov_v_deg = 50.0;
  double max_range = kMaxRange;
};

struct CameraPose {
  Vec3 position;
  double yaw = 0.0;    // rad, 0 looks into the drift (+y)
  double pitch = 0.0;  // rad, negative looks down
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depths;  // row-major, ray distance in m
  float at(int px, int py) const { return depths[static_cast<size_t>(py) * width + px]; }
};

// First hit of a ray against drift walls/roof/floor and the heightfield
// columns; misses clamp to max_range.
double raycast_scene(const Vec3& origin, const Vec3& dir, const DriftGeometry& drift,
                     const soil::Heightfield& hf, double max_range);

DepthImage render_depth(const CameraPose& pose, const CameraIntrinsics& intr,
                        const DriftGeometry& drift, const soil::Heightfield& hf);

// 16-bit millimeter PGM dump for debugging.
void write_pgm16(const DepthImage& img, const std::string& path);

constexpr std::array<double, 5> kLidarAzimuthsDeg = {-60.0, -30.0, 0.0, 30.0, 60.0};
constexpr double kLidarHeight = 1.0;

struct LidarScan {
  std::array<double, 5> distances{};
};

LidarScan lidar_scan(const vehicle::VehicleState& state, const vehicle::VehicleParams& params,
                     const DriftGeometry& drift, const soil::Heightfield& hf,
                     double max_range = kMaxRange);

// Raw per-step scalar channels before normalization.
struct ScalarObsInputs {
  double steer_pos = 0.0, steer_vel = 0.0, steer_force = 0.0;
  double lift_pos = 0.0, lift_vel = 0.0, lift_force = 0.0;
  double tilt_pos = 0.0, tilt_vel = 0.0, tilt_force = 0.0;
  double shaft_speed = 0.0;
  double lateral_offset = 0.0;  // bucket tip x - target x
  std::array<double, 5> lidar{};
};

constexpr int kScalarObsDim = 16;
constexpr int kStackDepth = 4;

using ScalarObs = std::array<double, kScalarObsDim>;

// Channel normalization to [-1, 1]:
//   extensions         2x - 1
//   cylinder speeds    v / rate limit
//   forces             2*clamp(F/stall, 0, 1) - 1
//   shaft speed        v / max_speed, clamped
//   lateral offset     x / half drift width, clamped
//   lidar              2*d/max_range - 1
ScalarObs normalize_scalars(const ScalarObsInputs& in, const vehicle::VehicleParams& params,
                            double max_range = kMaxRange);

// Keeps the last four scalar observations; at episode start the stack is the
// initial observation repeated.
class ObsStack {
 public:
  void reset(const ScalarObs& first);
  void push(const ScalarObs& obs);
  std::vector<double> stacked() const;  // oldest first, 4 * 16 values
  size_t size() const { return history_.size(); }

 private:
  std::deque<ScalarObs> history_;
};

struct StackedObservation {
  DepthImage depth;
  std::vector<double> scalars;  // kStackDepth * kScalarObsDim
};

}  // namespace mucksim::sensors
