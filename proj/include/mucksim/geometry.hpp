#pragma once

#include <cmath>

namespace mucksim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Underground drift: x lateral (centered on 0), y longitudinal from the
// entrance, z up from the floor.
struct DriftGeometry {
  double width = 9.0;
  double height = 4.5;
  double length = 19.2;
  double half_width() const { return 0.5 * width; }
};

// Bucket footprint to cut this step: lateral interval, longitudinal interval,
// and the cut plane height. Cells above the plane inside the region are
// lowered to the plane.
struct SweptRegion {
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
  double plane = 0.0;
};

// Bucket/pile engagement summary used by the dig-resistance law.
struct CutState {
  double depth = 0.0;          // mean blade depth below local surface (m)
  double width = 0.0;          // engaged blade width (m)
  double advance_speed = 0.0;  // forward ground speed (m/s), >= 0
  double plane = 0.0;          // cut plane height (m)
  double x0 = 0.0, x1 = 0.0;   // lateral span of the blade
  double tip_y = 0.0;          // blade longitudinal position
  bool engaged = false;        // blade meets material: resistance applies
  bool cutting = false;        // blade open (tilt below cutoff): soil is removed
};

constexpr double kGravity = 9.81;
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

}  // namespace mucksim
