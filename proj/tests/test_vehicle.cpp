#include <cmath>

#include "doctest.h"
#include "mucksim/vehicle.hpp"

using namespace mucksim;
using namespace mucksim::vehicle;

namespace {
const VehicleParams kParams;
const DriftGeometry kDrift;

VehicleState start_state() {
  VehicleState s;
  s.x = 0.0;
  s.y = 3.0;
  s.heading = 0.0;
  return s;
}
}  // namespace

TEST_CASE("zero command at rest changes nothing") {
  auto s = start_state();
  auto res = step_vehicle(s, {}, 0.0, 0.02, kParams, kDrift);
  CHECK(res.state.x == s.x);
  CHECK(res.state.y == s.y);
  CHECK(res.state.forward_speed == 0.0);
  CHECK(res.state.lift == 0.0);
  CHECK(res.state.tilt == 0.0);
  CHECK(res.work.total() == 0.0);
  CHECK_FALSE(res.flags.wheel_slip);
  CHECK_FALSE(res.flags.wall_contact);
}

TEST_CASE("full throttle approaches the entry speed scale") {
  auto s = start_state();
  s.y = 1.0;
  ActuatorCommand cmd;
  cmd.throttle = 1.0;
  DriftGeometry long_drift;
  long_drift.length = 500.0;  // keep clear of the back wall
  for (int i = 0; i < 3000; ++i) {
    s = step_vehicle(s, cmd, 0.0, 0.02, kParams, long_drift).state;
  }
  CHECK(s.forward_speed > 1.4);
  CHECK(s.forward_speed < 1.8);
}

TEST_CASE("slip threshold") {
  SUBCASE("demand beyond traction slips") {
    auto s = start_state();
    ActuatorCommand cmd;
    cmd.throttle = 1.0;  // demand 350 kN > 0.6 * 245 kN
    auto res = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift);
    CHECK(res.flags.wheel_slip);
  }

  SUBCASE("moderate throttle does not slip unloaded") {
    auto s = start_state();
    ActuatorCommand cmd;
    cmd.throttle = 0.35;  // 122.5 kN < 147 kN traction limit
    auto res = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift);
    CHECK_FALSE(res.flags.wheel_slip);
  }

  SUBCASE("driving into resistance above traction slips") {
    auto s = start_state();
    s.forward_speed = 0.5;
    ActuatorCommand cmd;
    cmd.throttle = 0.3;
    const double traction = 0.6 * 0.5 * kParams.total_mass * kGravity;
    auto res = step_vehicle(s, cmd, traction * 1.2, 0.02, kParams, kDrift);
    CHECK(res.flags.wheel_slip);
  }

  SUBCASE("bucket load raises the traction limit") {
    auto s = start_state();
    s.fill_mass = 17000.0;
    s.fill_volume = s.fill_mass / 2900.0;
    ActuatorCommand cmd;
    cmd.throttle = 0.7;  // 245 kN < 0.6*(245k + 17000*9.81*1.5) ~ 297 kN
    auto res = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift);
    CHECK_FALSE(res.flags.wheel_slip);
  }

  SUBCASE("slip scales advance by the fixed factor") {
    auto a = start_state();
    a.forward_speed = 1.0;
    ActuatorCommand hard;
    hard.throttle = 1.0;
    auto slipped = step_vehicle(a, hard, 0.0, 0.02, kParams, kDrift);
    REQUIRE(slipped.flags.wheel_slip);
    const double adv_slip = slipped.state.y - a.y;
    const double v_after = slipped.state.forward_speed;
    CHECK(adv_slip == doctest::Approx(0.25 * v_after * 0.02));
  }
}

TEST_CASE("kinetic energy decays when coasting") {
  auto s = start_state();
  s.forward_speed = 1.5;
  double prev = s.forward_speed;
  DriftGeometry long_drift;
  long_drift.length = 100.0;
  for (int i = 0; i < 200; ++i) {
    s = step_vehicle(s, {}, 0.0, 0.02, kParams, long_drift).state;
    CHECK(s.forward_speed <= prev + 1e-12);
    prev = s.forward_speed;
  }
}

TEST_CASE("cylinder clamping and rate limits") {
  auto s = start_state();
  ActuatorCommand cmd;
  cmd.lift_rate = 1.0;
  cmd.tilt_rate = 1.0;

  // commanded rates beyond limits move exactly at the limit
  auto res = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift);
  CHECK(res.state.lift ==
        doctest::Approx(kParams.lift_rate_max * 0.02 / kParams.lift_stroke).epsilon(1e-9));
  CHECK(res.state.tilt ==
        doctest::Approx(kParams.tilt_rate_max * 0.02 / kParams.tilt_stroke).epsilon(1e-9));

  // extensions clamp to [0, 1] and stay there
  for (int i = 0; i < 20000; ++i) s = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift).state;
  CHECK(s.lift == 1.0);
  CHECK(s.tilt == 1.0);
  cmd.lift_rate = -1.0;
  cmd.tilt_rate = -1.0;
  for (int i = 0; i < 20000; ++i) s = step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift).state;
  CHECK(s.lift == 0.0);
  CHECK(s.tilt == 0.0);
}

TEST_CASE("actuator work") {
  SUBCASE("idle actuators do no work") {
    ActuatorLoads loads;
    loads.lift_force = 50e3;  // holding force without motion
    const auto w = actuator_work(loads, 0.0625);
    CHECK(w.total() == 0.0);
  }

  SUBCASE("lift work arithmetic") {
    ActuatorLoads loads;
    loads.lift_force = 10e3;
    loads.lift_speed = 0.1;
    const auto w = actuator_work(loads, 0.0625);
    CHECK(w.lift == doctest::Approx(62.5).epsilon(1e-12));
    CHECK(w.tilt == 0.0);
  }

  SUBCASE("work terms are non-negative under random stepping") {
    Rng rng(2);
    auto s = start_state();
    for (int i = 0; i < 500; ++i) {
      ActuatorCommand cmd;
      cmd.throttle = rng.uniform(-1, 1);
      cmd.steer_rate = rng.uniform(-1, 1);
      cmd.lift_rate = rng.uniform(-1, 1);
      cmd.tilt_rate = rng.uniform(-1, 1);
      auto res = step_vehicle(s, cmd, rng.uniform(0, 5e4), 0.02, kParams, kDrift);
      s = res.state;
      CHECK(res.work.tilt >= 0.0);
      CHECK(res.work.lift >= 0.0);
      CHECK(res.work.steer >= 0.0);
      CHECK(res.work.engine >= 0.0);
      CHECK(s.lift >= 0.0);
      CHECK(s.lift <= 1.0);
      CHECK(s.tilt >= 0.0);
      CHECK(s.tilt <= 1.0);
    }
  }

  SUBCASE("reward weighting divides engine work by five") {
    WorkBreakdown w;
    w.tilt = 100.0;
    w.lift = 200.0;
    w.steer = 50.0;
    w.engine = 1000.0;
    CHECK(w.reward_weighted() == doctest::Approx(550.0));
    CHECK(w.total() == doctest::Approx(1350.0));
  }
}

TEST_CASE("wall contact") {
  auto s = start_state();
  s.x = 2.9;  // bucket corner at 2.9 + 1.75 = 4.65 > 4.5
  auto res = step_vehicle(s, {}, 0.0, 0.02, kParams, kDrift);
  CHECK(res.flags.wall_contact);
  CHECK(std::abs(res.state.x) < 2.9);  // pushed back inside

  s = start_state();
  res = step_vehicle(s, {}, 0.0, 0.02, kParams, kDrift);
  CHECK_FALSE(res.flags.wall_contact);
}

TEST_CASE("bucket engagement") {
  soil::Heightfield hf(soil::kDefaultNx, soil::kDefaultNy, soil::kDefaultCell);

  SUBCASE("far from the pile") {
    for (int iy = 40; iy < 60; ++iy) {
      for (int ix = 0; ix < hf.nx(); ++ix) hf.at(ix, iy) = 1.0;
    }
    auto s = start_state();  // tip at y = 5, pile starts at 12.8
    const auto cut = bucket_engagement(s, kParams, hf);
    CHECK_FALSE(cut.engaged);
    CHECK(cut.depth == 0.0);
  }

  SUBCASE("fully inside a 1 m-high front") {
    for (int iy = 10; iy < 60; ++iy) {
      for (int ix = 0; ix < hf.nx(); ++ix) hf.at(ix, iy) = 1.0;
    }
    auto s = start_state();
    s.y = 4.0;  // tip at 6.0, well inside
    const auto cut = bucket_engagement(s, kParams, hf);
    CHECK(cut.engaged);
    CHECK(cut.depth == doctest::Approx(1.0));
    CHECK(cut.width == doctest::Approx(kParams.bucket_width));
  }

  SUBCASE("raising the lift above the surface disengages") {
    for (int iy = 10; iy < 60; ++iy) {
      for (int ix = 0; ix < hf.nx(); ++ix) hf.at(ix, iy) = 1.0;
    }
    auto s = start_state();
    s.y = 4.0;
    s.lift = 0.5;  // cutting edge at 1.5 m > 1.0 m surface
    const auto cut = bucket_engagement(s, kParams, hf);
    CHECK_FALSE(cut.engaged);
  }

  SUBCASE("curling the bucket stops cutting but still meets resistance") {
    for (int iy = 10; iy < 60; ++iy) {
      for (int ix = 0; ix < hf.nx(); ++ix) hf.at(ix, iy) = 1.0;
    }
    auto s = start_state();
    s.y = 4.0;
    s.tilt = 0.9;
    const auto cut = bucket_engagement(s, kParams, hf);
    CHECK(cut.engaged);
    CHECK_FALSE(cut.cutting);
    s.tilt = 0.2;
    CHECK(bucket_engagement(s, kParams, hf).cutting);
  }
}

TEST_CASE("fill_bucket") {
  auto s = start_state();

  SUBCASE("zero removed leaves fill unchanged") {
    s = fill_bucket(s, 0.0, 2700.0, kParams);
    CHECK(s.fill_volume == 0.0);
    CHECK(s.fill_fraction(kParams) == 0.0);
  }

  SUBCASE("half capacity from empty") {
    s = fill_bucket(s, kParams.bucket_capacity_volume / 2.0, 2700.0, kParams);
    CHECK(s.fill_fraction(kParams) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("overflow clamps at capacity") {
    s = fill_bucket(s, kParams.bucket_capacity_volume, 2900.0, kParams);
    s = fill_bucket(s, 1.0, 2900.0, kParams);
    CHECK(s.fill_fraction(kParams) == 1.0);
    CHECK(s.fill_mass == doctest::Approx(17500.0).epsilon(1e-9));
  }

  SUBCASE("fill fraction is non-decreasing under filling") {
    Rng rng(4);
    double prev = 0.0;
    for (int i = 0; i < 100; ++i) {
      s = fill_bucket(s, rng.uniform(0.0, 0.2), 2700.0, kParams);
      CHECK(s.fill_fraction(kParams) >= prev);
      prev = s.fill_fraction(kParams);
    }
  }

  SUBCASE("negative volume rejected") {
    CHECK_THROWS_AS(fill_bucket(s, -0.1, 2700.0, kParams), std::invalid_argument);
  }
}

TEST_CASE("non-finite inputs are rejected") {
  auto s = start_state();
  ActuatorCommand cmd;
  cmd.throttle = std::nan("");
  CHECK_THROWS_AS(step_vehicle(s, cmd, 0.0, 0.02, kParams, kDrift), std::invalid_argument);
  CHECK_THROWS_AS(step_vehicle(s, {}, -1.0, 0.02, kParams, kDrift), std::invalid_argument);
  CHECK_THROWS_AS(step_vehicle(s, {}, 0.0, 0.0, kParams, kDrift), std::invalid_argument);
}

TEST_CASE("articulated steering turns the vehicle") {
  auto s = start_state();
  DriftGeometry wide;
  wide.width = 40.0;
  wide.length = 100.0;
  s.y = 20.0;
  ActuatorCommand cmd;
  cmd.throttle = 0.3;
  cmd.steer_rate = 1.0;
  for (int i = 0; i < 600; ++i) s = step_vehicle(s, cmd, 0.0, 0.02, kParams, wide).state;
  CHECK(s.articulation > 0.0);
  CHECK(std::abs(s.heading) > 0.05);
}
