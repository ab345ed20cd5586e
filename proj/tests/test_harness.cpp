#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mucksim/harness.hpp"

using namespace mucksim;
using namespace mucksim::harness;

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// tiny but complete training setup: short episodes, small nets
TrainConfig tiny_config() {
  TrainConfig cfg = TrainConfig::desk();
  cfg.seed = 5;
  cfg.env.timeout_s = 1.5;
  cfg.env.camera_width = 28;
  cfg.env.camera_height = 16;
  cfg.ma_net.image_w = 28;
  cfg.ma_net.image_h = 16;
  cfg.ma_net.image_pool = 4;
  cfg.ma_net.conv = {{4, 4, 2}};
  cfg.ma_net.visual_dense = {16};
  cfg.ma_net.scalar_dense = {16};
  cfg.mpa_net.image_w = 28;
  cfg.mpa_net.image_h = 16;
  cfg.mpa_net.image_pool = 4;
  cfg.mpa_net.conv = {{4, 4, 2}};
  cfg.mpa_net.dense = {16};
  cfg.ma_sac.batch_size = 16;
  cfg.ma_sac.lr = 1e-3;
  cfg.mpa_sac.batch_size = 4;
  cfg.ma_buffer_capacity = 2000;
  cfg.mpa_buffer_capacity = 200;
  cfg.ma_pretrain_steps = 2400;
  cfg.joint_ma_steps = 200;
  cfg.mpa_phase_loadings = 6;
  cfg.warmup_random_steps = 100;
  cfg.metrics_update_stride = 100;
  return cfg;
}

std::vector<env::LoadingOutcome> synthetic_outcomes() {
  auto make = [](double mass, double dur, double energy, double pos, bool failed, int idx) {
    env::LoadingOutcome o;
    o.mass_t = mass;
    o.duration_s = dur;
    o.energy_J = energy;
    o.position_error_m = pos;
    o.failed = failed;
    o.loading_index = idx;
    o.target_x = 0.4 * idx - 1.0;
    o.pile_shape = soil::PileShape::convex;
    return o;
  };
  return {make(13.2, 15.0, 1.1e6, 0.05, false, 1), make(10.0, 20.0, 1.3e6, -0.10, false, 2),
          make(0.0, 48.0, 0.4e6, 0.80, true, 3),   make(16.0, 16.0, 1.2e6, 0.00, false, 4),
          make(8.5, 17.0, 0.9e6, 0.20, false, 1),  make(12.0, 48.0, 2.0e6, -0.30, true, 2)};
}

}  // namespace

TEST_CASE("curriculum lessons") {
  const auto c = Curriculum::standard(3000);
  CHECK(c.lessons[0].sequence_length == 10);
  CHECK(c.lessons[0].max_generation == 0);
  CHECK(c.lessons[0].step_budget == 1000);
  CHECK(c.lessons[1].sequence_length == 15);
  CHECK(c.lessons[1].max_generation == 1);
  CHECK(c.lessons[2].sequence_length == 20);
  CHECK(c.lessons[2].max_generation == 2);
  CHECK(c.lessons[0].step_budget + c.lessons[1].step_budget + c.lessons[2].step_budget == 3000);

  int idx = -1;
  CHECK(c.lesson_at_step(0, &idx).sequence_length == 10);
  CHECK(idx == 0);
  CHECK(c.lesson_at_step(1500, &idx).sequence_length == 15);
  CHECK(idx == 1);
  CHECK(c.lesson_at_step(2999, &idx).sequence_length == 20);
  CHECK(c.lesson_at_step(999999, &idx).sequence_length == 20);
}

TEST_CASE("report statistics match the spreadsheet oracle") {
  const auto report = compute_report(synthetic_outcomes());

  CHECK(report.all.n == 6);
  CHECK(report.all.mass_t.mean == doctest::Approx(9.95).epsilon(1e-12));
  CHECK(report.all.mass_t.stddev == doctest::Approx(5.52222781130949).epsilon(1e-12));
  CHECK(report.all.productivity.mean == doctest::Approx(0.5216666666666667).epsilon(1e-12));
  CHECK(report.all.productivity.stddev == doctest::Approx(0.3752554685366579).epsilon(1e-12));
  CHECK(report.all.energy_MJ.mean == doctest::Approx(1.15).epsilon(1e-12));
  CHECK(report.all.energy_MJ.stddev == doctest::Approx(0.5244044240850757).epsilon(1e-12));
  CHECK(report.all.position_error_m.mean == doctest::Approx(0.10833333333333334).epsilon(1e-12));
  CHECK(report.all.position_error_m.stddev == doctest::Approx(0.37738132792530515).epsilon(1e-12));
  CHECK(report.all.failure_ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK(report.completed.n == 4);
  CHECK(report.completed.mass_t.mean == doctest::Approx(11.925).epsilon(1e-12));
  CHECK(report.completed.mass_t.stddev == doctest::Approx(3.35).epsilon(1e-12));
  CHECK(report.completed.productivity.mean == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(report.completed.energy_MJ.mean == doctest::Approx(1.125).epsilon(1e-12));
  CHECK(report.completed.position_error_m.mean == doctest::Approx(0.0375).epsilon(1e-9));
  CHECK(report.completed.failure_ratio == 0.0);

  // per-index means: (13.2+8.5)/2, (10+12)/2, 0, 16
  REQUIRE(report.mass_by_index_mean.size() == 4);
  CHECK(report.mass_by_index_mean[0] == doctest::Approx(10.85));
  CHECK(report.mass_by_index_mean[1] == doctest::Approx(11.0));
  CHECK(report.mass_by_index_mean[2] == doctest::Approx(0.0));
  CHECK(report.mass_by_index_mean[3] == doctest::Approx(16.0));
  CHECK(report.mass_index_slope == doctest::Approx(0.44499999999999884).epsilon(1e-9));
  CHECK(report.mass_index_slope_se == doctest::Approx(3.6820748227052635).epsilon(1e-9));

  // histogram counts the six targets
  int total = 0;
  for (const auto& [shape, bins] : report.target_histogram) {
    for (int b : bins) total += b;
  }
  CHECK(total == 6);
}

TEST_CASE("measure_bucket_mass") {
  vehicle::VehicleParams params;
  vehicle::VehicleState s;
  soil::SoilParams sp;
  sp.density = 2900.0;

  s.fill_volume = params.bucket_capacity_volume;
  CHECK(measure_bucket_mass(s, sp) == doctest::Approx(17.5).epsilon(1e-9));
  s.fill_volume = 0.0;
  CHECK(measure_bucket_mass(s, sp) == 0.0);
  s.fill_volume = 0.75 * params.bucket_capacity_volume;
  CHECK(measure_bucket_mass(s, sp) == doctest::Approx(13.125).epsilon(1e-9));
}

TEST_CASE("outcome CSV columns") {
  const auto dir = fresh_dir("mucksim_csv_test");
  const auto path = (dir / "outcomes.csv").string();
  write_outcomes_csv(path, synthetic_outcomes(), "run-1", agents::Variant::B);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "run_id,variant,pile_shape,generation,loading_index,target_x,final_x,mass_t,duration_s,"
        "energy_J,failed");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 6);
  fs::remove_all(dir);
}

TEST_CASE("config JSON round trip") {
  TrainConfig cfg = TrainConfig::desk();
  cfg.seed = 42;
  cfg.variant = agents::Variant::C;
  cfg.env.w2 = 2e-6;
  cfg.ma_sac.batch_size = 99;
  cfg.initial_piles[1].apex_height = 2.5;

  const auto text = train_config_to_json(cfg);
  const auto back = train_config_from_json(text);
  CHECK(back.seed == 42);
  CHECK(back.variant == agents::Variant::C);
  CHECK(back.env.w2 == 2e-6);
  CHECK(back.ma_sac.batch_size == 99);
  CHECK(back.initial_piles[1].apex_height == 2.5);
  CHECK(back.ma_net.conv.size() == cfg.ma_net.conv.size());

  // partial config: unknown fields take defaults
  const auto partial = train_config_from_json("{\"seed\": 7}");
  CHECK(partial.seed == 7);
  CHECK(partial.env.w1 == 100.0);
}

TEST_CASE("variant C differs from B only by the energy weight") {
  TrainConfig b = TrainConfig::desk();
  b.variant = agents::Variant::B;
  TrainConfig c = b;
  c.variant = agents::Variant::C;

  const auto eb = apply_variant(b);
  const auto ec = apply_variant(c);
  CHECK(eb.env.w2 == 1e-6);
  CHECK(ec.env.w2 == 0.0);

  // the JSON dumps differ in exactly the variant tag and w2
  auto jb = train_config_to_json(eb);
  auto jc = train_config_to_json(ec);
  size_t diffs = 0;
  std::istringstream sb(jb), sc(jc);
  std::string lb, lc;
  while (std::getline(sb, lb) && std::getline(sc, lc)) {
    if (lb != lc) ++diffs;
  }
  CHECK(diffs == 2);
}

TEST_CASE("evaluate with an idle agent fails every loading") {
  EvalConfig cfg;
  cfg.n_loadings = 3;
  cfg.sequence_length = 2;
  cfg.env.timeout_s = 2.0;
  std::vector<env::LoadingOutcome> outs;
  Rng rng(3);
  const auto report = evaluate(make_random_target_policy(rng, 2.75), make_idle_ma_policy(), cfg,
                               &outs);
  CHECK(report.all.n == 3);
  CHECK(report.all.failure_ratio == 1.0);
  CHECK(report.all.mass_t.mean == 0.0);
  CHECK(outs.size() == 3);
  // two piles were used: the first sequence has 2 loadings, the second 1
  CHECK(outs[0].loading_index == 1);
  CHECK(outs[1].loading_index == 2);
  CHECK(outs[2].loading_index == 1);
}

TEST_CASE("evaluate with the scripted baseline") {
  EvalConfig cfg;
  cfg.n_loadings = 4;
  cfg.sequence_length = 1;  // one loading per pile, cycling all four shapes
  cfg.piles = desk_pile_specs();
  cfg.env.fixed_camera_y = 0.8;
  std::vector<env::LoadingOutcome> outs;
  const auto report = evaluate_with_factory(
      make_fixed_target_policy(0.5),
      [](env::LoaderEnv& e) { return make_scripted_ma_policy(e); }, cfg, &outs);
  CHECK(report.all.n == 4);
  CHECK(report.all.failure_ratio == 0.0);
  CHECK(report.all.mass_t.mean > 5.0);
  for (const auto& o : outs) {
    CHECK(o.mass_t <= 17.5 + 1e-9);  // loaded mass never exceeds capacity
    CHECK(o.pile_generation == 0);
  }
  // all four shapes appear
  CHECK(report.target_histogram.size() == 4);
}

TEST_CASE("training pipeline on a tiny config") {
  const auto dir = fresh_dir("mucksim_train_tiny");
  auto cfg = tiny_config();
  const auto result = train(cfg, dir.string());
  CHECK_FALSE(result.aborted);
  CHECK(result.ma_steps >= cfg.ma_pretrain_steps);
  CHECK(fs::exists(result.metrics_path));
  CHECK(fs::exists(result.ma_checkpoint));

  const auto text = slurp(result.metrics_path);
  CHECK(text.find("# mucksim metrics v1") != std::string::npos);
  CHECK(text.find("kind,agent,phase,lesson") != std::string::npos);
  CHECK(text.find("phase,,ma_pretrain") != std::string::npos);
  // all three curriculum lessons appear, in order
  const auto l0 = text.find("lesson,,ma_pretrain,0");
  const auto l1 = text.find("lesson,,ma_pretrain,1");
  const auto l2 = text.find("lesson,,ma_pretrain,2");
  CHECK(l0 != std::string::npos);
  CHECK(l1 != std::string::npos);
  CHECK(l2 != std::string::npos);
  CHECK(l0 < l1);
  CHECK(l1 < l2);
  CHECK(text.find("loading,ma") != std::string::npos);
  CHECK(text.find("update,ma") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("two identical runs produce bit-identical metrics") {
  const auto dir1 = fresh_dir("mucksim_det_1");
  const auto dir2 = fresh_dir("mucksim_det_2");
  auto cfg = tiny_config();
  cfg.ma_pretrain_steps = 700;
  train(cfg, dir1.string());
  train(cfg, dir2.string());
  const auto a = slurp((dir1 / "metrics.csv").string());
  const auto b = slurp((dir2 / "metrics.csv").string());
  CHECK(a == b);
  CHECK_FALSE(a.empty());
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("resume from a training-state snapshot replays identically") {
  auto cfg = tiny_config();
  cfg.ma_pretrain_steps = 900;
  cfg.state_snapshot_sequences = 1;

  const auto base_dir = fresh_dir("mucksim_resume_base");
  train(cfg, base_dir.string());
  const auto baseline = slurp((base_dir / "metrics.csv").string());

  auto halted_cfg = cfg;
  halted_cfg.halt_after_sequences = 1;
  const auto halt_dir = fresh_dir("mucksim_resume_halt");
  train(halted_cfg, halt_dir.string());
  const auto halted = slurp((halt_dir / "metrics.csv").string());
  REQUIRE(fs::exists(halt_dir / "train_state.ckpt"));

  const auto resume_dir = fresh_dir("mucksim_resume_cont");
  train(cfg, resume_dir.string(), (halt_dir / "train_state.ckpt").string());
  const auto resumed = slurp((resume_dir / "metrics.csv").string());

  CHECK(halted + resumed == baseline);
  fs::remove_all(base_dir);
  fs::remove_all(halt_dir);
  fs::remove_all(resume_dir);
}

TEST_CASE("variant A runs all three phases") {
  const auto dir = fresh_dir("mucksim_train_a");
  auto cfg = tiny_config();
  cfg.variant = agents::Variant::A;
  cfg.ma_pretrain_steps = 400;
  cfg.joint_ma_steps = 150;
  cfg.mpa_phase_loadings = 3;
  const auto result = train(cfg, dir.string());
  CHECK_FALSE(result.aborted);
  const auto text = slurp(result.metrics_path);
  CHECK(text.find("phase,,ma_pretrain") != std::string::npos);
  CHECK(text.find("phase,,mpa_frozen_ma") != std::string::npos);
  CHECK(text.find("phase,,joint") != std::string::npos);
  CHECK(fs::exists(result.mpa_checkpoint));
  CHECK(result.ma_checkpoint.find("ma-A-") != std::string::npos);
  fs::remove_all(dir);
}
