#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mucksim/sensors.hpp"

using namespace mucksim;
using namespace mucksim::sensors;

namespace {

// Independent oracle: fine-stepped march against the same column world.
double march_oracle(const Vec3& o, const Vec3& d, const DriftGeometry& drift,
                    const soil::Heightfield& hf, double max_range, double step = 0.004) {
  for (double t = step; t < max_range; t += step) {
    const Vec3 p{o.x + t * d.x, o.y + t * d.y, o.z + t * d.z};
    if (std::abs(p.x) >= drift.half_width() || p.y >= drift.length || p.y <= 0.0 ||
        p.z >= drift.height || p.z <= hf.height_at(p.x, p.y)) {
      return t;
    }
  }
  return max_range;
}

// A renderer hit earlier than the coarse march can be a genuine grazing
// contact the fixed step walked over; verify it with a locally dense scan and
// report the distance to the nearest confirmed solid sample.
double oracle_error(double t_impl, double t_coarse, const Vec3& o, const Vec3& d,
                    const DriftGeometry& drift, const soil::Heightfield& hf) {
  const double coarse_err = std::abs(t_impl - t_coarse);
  if (coarse_err <= 0.16 || t_impl > t_coarse) return coarse_err;
  auto solid = [&](double t) {
    const Vec3 p{o.x + t * d.x, o.y + t * d.y, o.z + t * d.z};
    return std::abs(p.x) >= drift.half_width() || p.y >= drift.length || p.y <= 0.0 ||
           p.z >= drift.height || p.z <= hf.height_at(p.x, p.y);
  };
  double fine_err = coarse_err;
  for (double t = std::max(t_impl - 0.16, 0.0); t <= t_impl + 0.16; t += 1e-4) {
    if (solid(t)) fine_err = std::min(fine_err, std::abs(t - t_impl));
  }
  return fine_err;
}

soil::Heightfield random_scene(Rng& rng) {
  DriftGeometry drift;
  const soil::PileShape shapes[] = {soil::PileShape::convex, soil::PileShape::concave,
                                    soil::PileShape::left_skewed, soil::PileShape::right_skewed};
  soil::PileSpec spec;
  spec.shape = shapes[rng.uniform_int(0, 3)];
  spec.apex_height = rng.uniform(1.0, 4.4);
  spec.toe_position = rng.uniform(5.0, 14.0);
  auto hf = soil::generate_pile(spec, drift, rng);
  // random extra craters/mounds for ragged geometry
  for (int i = 0; i < 4; ++i) {
    soil::excavate(hf, {rng.uniform(-4.5, 2.0), rng.uniform(-2.0, 4.5), rng.uniform(4.0, 16.0),
                        rng.uniform(4.0, 19.0), rng.uniform(0.0, 1.5)});
  }
  return hf;
}

}  // namespace

TEST_CASE("depth image dimensions and range bounds") {
  DriftGeometry drift;
  soil::Heightfield hf(soil::kDefaultNx, soil::kDefaultNy, soil::kDefaultCell);
  CameraIntrinsics intr;  // defaults: 84 x 44
  CameraPose pose;
  pose.position = {0.0, 1.0, 2.5};
  const auto img = render_depth(pose, intr, drift, hf);
  CHECK(img.width == 84);
  CHECK(img.height == 44);
  CHECK(img.depths.size() == 84u * 44u);
  for (float v : img.depths) {
    CHECK(v > 0.0f);
    CHECK(v <= doctest::Approx(kMaxRange));
  }
}

TEST_CASE("empty drift: bottom rows see the floor at increasing depth") {
  DriftGeometry drift;
  soil::Heightfield hf(soil::kDefaultNx, soil::kDefaultNy, soil::kDefaultCell);
  CameraIntrinsics intr;
  CameraPose pose;
  pose.position = {0.0, 1.0, 2.5};
  pose.pitch = 0.0;
  const auto img = render_depth(pose, intr, drift, hf);
  const int cx = intr.width / 2;
  // moving up from the bottom row, the floor recedes until rows start
  // reaching the back wall
  double prev = 0.0;
  for (int py = intr.height - 1; py >= 0; --py) {
    const double d = img.at(cx, py);
    if (d > 17.0) break;
    CHECK(d > prev);
    prev = d;
  }
  CHECK(prev > 5.0);  // several genuine floor rows were checked
}

TEST_CASE("raising terrain never increases any pixel depth") {
  DriftGeometry drift;
  Rng rng(5);
  auto hf = random_scene(rng);
  CameraIntrinsics intr;
  CameraPose pose;
  pose.position = {0.0, 1.2, 3.0};
  pose.pitch = deg2rad(-12.0);
  const auto before = render_depth(pose, intr, drift, hf);

  auto taller = hf;
  for (auto& h : taller.data()) h = std::min(h + 1.0, 4.5);
  const auto after = render_depth(pose, intr, drift, taller);

  for (size_t i = 0; i < before.depths.size(); ++i) {
    CHECK(after.depths[i] <= before.depths[i] + 1e-5f);
  }
}

TEST_CASE("rendered depth matches the dense ray-march oracle on random scenes") {
  DriftGeometry drift;
  Rng rng(101);
  CameraIntrinsics intr;
  intr.width = 12;  // subsampled pixel grid keeps the oracle affordable
  intr.height = 8;
  double max_err = 0.0;
  for (int scene = 0; scene < 100; ++scene) {
    auto hf = random_scene(rng);
    CameraPose pose;
    pose.position = {rng.uniform(-3.5, 3.5), rng.uniform(0.5, 6.0), rng.uniform(1.0, 4.0)};
    pose.yaw = rng.uniform(-0.5, 0.5);
    pose.pitch = rng.uniform(-0.5, 0.1);
    const auto img = render_depth(pose, intr, drift, hf);

    const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
    const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
    const Vec3 fwd{sy * cp, cy * cp, sp};
    const Vec3 right{cy, -sy, 0.0};
    const Vec3 up{-sy * sp, -cy * sp, cp};
    const double tan_h = std::tan(0.5 * deg2rad(intr.fov_h_deg));
    const double tan_v = std::tan(0.5 * deg2rad(intr.fov_v_deg));
    for (int py = 0; py < intr.height; ++py) {
      for (int px = 0; px < intr.width; ++px) {
        const double u = (2.0 * (px + 0.5) / intr.width - 1.0) * tan_h;
        const double v = (1.0 - 2.0 * (py + 0.5) / intr.height) * tan_v;
        Vec3 d{fwd.x + u * right.x + v * up.x, fwd.y + u * right.y + v * up.y,
               fwd.z + u * right.z + v * up.z};
        const double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
        d = {d.x / n, d.y / n, d.z / n};
        const double expect = march_oracle(pose.position, d, drift, hf, intr.max_range);
        max_err = std::max(max_err,
                           oracle_error(img.at(px, py), expect, pose.position, d, drift, hf));
      }
    }
  }
  CHECK(max_err < 0.16);  // cell_size / 2
}

TEST_CASE("lidar") {
  DriftGeometry drift;
  soil::Heightfield hf(soil::kDefaultNx, soil::kDefaultNy, soil::kDefaultCell);
  vehicle::VehicleParams params;
  vehicle::VehicleState state;

  SUBCASE("center ray against a wall 5 m ahead") {
    // a tall pile face acts as the wall
    const double face_y = 12.0;
    for (int iy = hf.cell_iy(face_y); iy < hf.ny(); ++iy) {
      for (int ix = 0; ix < hf.nx(); ++ix) hf.at(ix, iy) = 3.0;
    }
    state.x = 0.0;
    state.y = face_y - 5.0 - params.front_axle_to_tip;  // lidar sits at the tip
    const auto scan = lidar_scan(state, params, drift, hf);
    const double wall = hf.cell_iy(face_y) * hf.cell_size();  // column boundary
    CHECK(scan.distances[2] == doctest::Approx(wall - (state.y + params.front_axle_to_tip))
                                   .epsilon(1e-6));
  }

  SUBCASE("symmetric pose gives symmetric side rays") {
    state.x = 0.0;
    state.y = 3.0;
    const auto scan = lidar_scan(state, params, drift, hf);
    CHECK(scan.distances[0] == doctest::Approx(scan.distances[4]).epsilon(1e-9));
    CHECK(scan.distances[1] == doctest::Approx(scan.distances[3]).epsilon(1e-9));
  }

  SUBCASE("matches the dense march oracle on random scenes") {
    Rng rng(33);
    double max_err = 0.0;
    for (int scene = 0; scene < 100; ++scene) {
      auto terrain = random_scene(rng);
      vehicle::VehicleState s;
      s.x = rng.uniform(-2.5, 2.5);
      s.y = rng.uniform(0.5, 5.0);
      s.heading = rng.uniform(-0.4, 0.4);
      const auto scan = lidar_scan(s, params, drift, terrain);
      const Vec2 tip = s.bucket_tip(params);
      for (size_t i = 0; i < kLidarAzimuthsDeg.size(); ++i) {
        const double az = s.heading + deg2rad(kLidarAzimuthsDeg[i]);
        const Vec3 o{tip.x, tip.y, kLidarHeight};
        const Vec3 d{std::sin(az), std::cos(az), 0.0};
        const double expect = march_oracle(o, d, drift, terrain, kMaxRange);
        max_err = std::max(max_err, oracle_error(scan.distances[i], expect, o, d, drift, terrain));
      }
    }
    CHECK(max_err < 0.16);
  }
}

TEST_CASE("scalar normalization bounds") {
  vehicle::VehicleParams params;
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    ScalarObsInputs in;
    in.steer_pos = rng.uniform(-0.5, 1.5);
    in.steer_vel = rng.uniform(-1.0, 1.0);
    in.steer_force = rng.uniform(0.0, 1e6);
    in.lift_pos = rng.uniform(0.0, 1.0);
    in.lift_vel = rng.uniform(-0.5, 0.5);
    in.lift_force = rng.uniform(0.0, 1e6);
    in.tilt_pos = rng.uniform(0.0, 1.0);
    in.tilt_vel = rng.uniform(-0.5, 0.5);
    in.tilt_force = rng.uniform(0.0, 1e6);
    in.shaft_speed = rng.uniform(-3.0, 3.0);
    in.lateral_offset = rng.uniform(-10.0, 10.0);
    for (auto& l : in.lidar) l = rng.uniform(0.1, kMaxRange);
    const auto obs = normalize_scalars(in, params);
    for (double v : obs) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
      CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("observation stacking") {
  ScalarObs a{}, b{};
  a.fill(0.25);
  b.fill(-0.5);

  ObsStack stack;
  stack.reset(a);

  SUBCASE("episode start repeats the first observation four times") {
    const auto v = stack.stacked();
    REQUIRE(v.size() == 64);
    for (double x : v) CHECK(x == 0.25);
  }

  SUBCASE("pushes keep the last four, oldest first") {
    stack.push(b);
    auto v = stack.stacked();
    for (int i = 0; i < 48; ++i) CHECK(v[static_cast<size_t>(i)] == 0.25);
    for (int i = 48; i < 64; ++i) CHECK(v[static_cast<size_t>(i)] == -0.5);

    stack.push(b);
    stack.push(b);
    stack.push(b);
    v = stack.stacked();
    for (double x : v) CHECK(x == -0.5);
  }

  SUBCASE("identical consecutive observations give four equal blocks") {
    stack.push(a);
    stack.push(a);
    stack.push(a);
    const auto v = stack.stacked();
    for (double x : v) CHECK(x == 0.25);
  }
}

TEST_CASE("pgm export") {
  DepthImage img;
  img.width = 4;
  img.height = 2;
  img.depths = {0.5f, 1.0f, 2.0f, 20.0f, 0.1f, 3.0f, 4.0f, 5.0f};
  const auto path = std::filesystem::temp_directory_path() / "mucksim_depth.pgm";
  write_pgm16(img, path.string());

  std::ifstream f(path, std::ios::binary);
  std::string magic, dims;
  std::getline(f, magic);
  CHECK(magic == "P5");
  int w = 0, h = 0, maxv = 0;
  f >> w >> h >> maxv;
  CHECK(w == 4);
  CHECK(h == 2);
  CHECK(maxv == 65535);
  f.get();
  unsigned char hi = 0, lo = 0;
  hi = static_cast<unsigned char>(f.get());
  lo = static_cast<unsigned char>(f.get());
  CHECK((hi << 8 | lo) == 500);  // 0.5 m -> 500 mm
  std::filesystem::remove(path);
}

TEST_CASE("rendering is deterministic") {
  DriftGeometry drift;
  Rng rng(77);
  auto hf = random_scene(rng);
  CameraIntrinsics intr;
  CameraPose pose;
  pose.position = {0.5, 2.0, 3.0};
  pose.pitch = deg2rad(-10.0);
  const auto a = render_depth(pose, intr, drift, hf);
  const auto b = render_depth(pose, intr, drift, hf);
  CHECK(a.depths == b.depths);
}
