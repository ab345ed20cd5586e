#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mucksim/harness.hpp"
#include "mucksim/sensors.hpp"

namespace fs = std::filesystem;
using namespace mucksim;

namespace {

harness::TrainConfig load_config(const std::string& path, uint64_t seed,
                                 const std::string& variant) {
  harness::TrainConfig cfg = harness::TrainConfig::desk();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw CLI::ValidationError("--config", "cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    cfg = harness::train_config_from_json(text);
  }
  if (seed != 0) cfg.seed = seed;
  if (!variant.empty()) cfg.variant = agents::variant_from_name(variant);
  return cfg;
}

int cmd_train(const std::string& config, uint64_t seed, const std::string& variant,
              const std::string& out, const std::string& resume) {
  auto cfg = load_config(config, seed, variant);
  auto result = harness::train(cfg, out, resume);
  std::cout << "train: steps=" << result.ma_steps << " episodes=" << result.episodes
            << " metrics=" << result.metrics_path << "\n";
  if (!result.ma_checkpoint.empty()) std::cout << "ma checkpoint: " << result.ma_checkpoint << "\n";
  if (!result.mpa_checkpoint.empty()) {
    std::cout << "mpa checkpoint: " << result.mpa_checkpoint << "\n";
  }
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    return 2;
  }
  std::cout << "last-50 loadings: mean fill " << result.mean_fill_last50 << ", failure ratio "
            << result.failure_ratio_last50 << "\n";
  return 0;
}

int cmd_eval(const std::string& config, uint64_t seed, const std::string& variant_s,
             const std::string& out, const std::string& ma_ckpt, const std::string& mpa_ckpt,
             int loadings) {
  auto cfg = load_config(config, seed, variant_s);
  const auto variant = cfg.variant;
  harness::EvalConfig ec;
  ec.n_loadings = loadings;
  ec.seed = cfg.seed;
  ec.env = cfg.env;
  ec.vehicle = cfg.vehicle;
  ec.piles = cfg.initial_piles;

  if (ma_ckpt.empty()) {
    std::cerr << "eval: --ma-ckpt is required (no trained mucking agent given)\n";
    return 2;
  }
  agents::MaObsAdapter ma_adapter(cfg.ma_net);
  sac::SacAgent ma(ma_adapter.actor_spec(), ma_adapter.critic_spec(), agents::kMaActionDim,
                   cfg.ma_sac, cfg.seed);
  try {
    ma.load_policy(ma_ckpt);
  } catch (const std::exception& e) {
    std::cerr << "eval: cannot load mucking-agent checkpoint '" << ma_ckpt << "': " << e.what()
              << "\n";
    return 2;
  }
  Rng policy_rng(Rng::mix(cfg.seed, 31));
  auto ma_policy = harness::make_sac_ma_policy(ma, ma_adapter, policy_rng, true);

  const double range = DriftGeometry{}.half_width() - 0.5 * cfg.vehicle.bucket_width;
  Rng target_rng(Rng::mix(cfg.seed, 32));
  env::MpaPolicy mpa_policy;
  std::unique_ptr<sac::SacAgent> mpa;
  agents::MpaObsAdapter mpa_adapter(cfg.mpa_net);
  if (variant == agents::Variant::A) {
    if (mpa_ckpt.empty()) {
      std::cerr << "eval: variant A requires --mpa-ckpt\n";
      return 2;
    }
    mpa = std::make_unique<sac::SacAgent>(mpa_adapter.actor_spec(), mpa_adapter.critic_spec(),
                                          agents::kMpaActionDim, cfg.mpa_sac, cfg.seed);
    try {
      mpa->load_policy(mpa_ckpt);
    } catch (const std::exception& e) {
      std::cerr << "eval: cannot load position-agent checkpoint '" << mpa_ckpt
                << "': " << e.what() << "\n";
      return 2;
    }
    mpa_policy = harness::make_sac_mpa_policy(*mpa, mpa_adapter, policy_rng, true, range);
  } else {
    mpa_policy = harness::make_random_target_policy(target_rng, range);
  }

  std::vector<env::LoadingOutcome> outcomes;
  auto report = harness::evaluate(mpa_policy, ma_policy, ec, &outcomes);

  fs::create_directories(out);
  const std::string run_id = "eval-" + std::to_string(cfg.seed);
  harness::write_outcomes_csv((fs::path(out) / "outcomes.csv").string(), outcomes, run_id, variant);
  std::ofstream rf(fs::path(out) / "report.json");
  rf << harness::report_to_json(report) << "\n";
  std::cout << harness::report_to_json(report) << "\n";
  return 0;
}

int cmd_rollout(const std::string& config, uint64_t seed, const std::string& variant,
                const std::string& out, const std::string& ma_ckpt, double target) {
  auto cfg = load_config(config, seed, variant);
  DriftGeometry drift;
  env::LoaderEnv env(cfg.env, cfg.vehicle, drift);
  Rng pile_rng(Rng::mix(cfg.seed, 4));
  env.set_pile(soil::generate_pile(cfg.initial_piles.at(0), drift, pile_rng),
               cfg.initial_piles.at(0).shape);
  soil::SoilParams sp;
  sp.density = 2900.0;
  env.set_soil(sp);

  env::MaPolicy policy = harness::make_idle_ma_policy();
  std::unique_ptr<sac::SacAgent> ma;
  agents::MaObsAdapter ma_adapter(cfg.ma_net);
  Rng policy_rng(Rng::mix(cfg.seed, 31));
  if (!ma_ckpt.empty()) {
    ma = std::make_unique<sac::SacAgent>(ma_adapter.actor_spec(), ma_adapter.critic_spec(),
                                         agents::kMaActionDim, cfg.ma_sac, cfg.seed);
    ma->load_policy(ma_ckpt);
    policy = harness::make_sac_ma_policy(*ma, ma_adapter, policy_rng, true);
  }

  fs::create_directories(out);
  std::ofstream trace(fs::path(out) / "trace.csv");
  trace << env::LoaderEnv::trace_header() << "\n";
  env.set_trace(&trace);

  auto obs = env.reset_loading(target);
  env::StepResult res;
  while (true) {
    res = env.step(policy(obs));
    obs = std::move(res.obs);
    if (res.done) break;
  }
  const auto& o = *res.outcome;
  std::cout << "loading: mass " << o.mass_t << " t, duration " << o.duration_s << " s, energy "
            << o.energy_J / 1e6 << " MJ, failed " << (o.failed ? "yes" : "no") << "\n";
  std::cout << "trace: " << (fs::path(out) / "trace.csv").string() << "\n";
  return 0;
}

int cmd_gen_piles(uint64_t seed, const std::string& out) {
  fs::create_directories(out);
  DriftGeometry drift;
  Rng rng(seed == 0 ? 1 : seed);
  for (const auto& spec : harness::default_pile_specs()) {
    auto hf = soil::generate_pile(spec, drift, rng);
    const std::string base = soil::pile_shape_name(spec.shape);
    soil::save_pile(hf, (fs::path(out) / (base + ".pile")).string());

    env::EnvConfig ec;
    env::LoaderEnv env(ec, vehicle::VehicleParams{}, drift);
    env.set_pile(hf, spec.shape);
    sensors::write_pgm16(env.fixed_camera_depth(), (fs::path(out) / (base + ".pgm")).string());
  }
  std::cout << "wrote 4 piles to " << out << "\n";
  return 0;
}

bool check(bool ok, const std::string& name) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
  return ok;
}

int cmd_selftest() {
  bool all = true;

  // reward formulas
  all &= check(std::abs(env::position_reward(0.0) - 1.0) < 1e-12 &&
                   std::abs(env::position_reward(4.0)) < 1e-12 &&
                   std::abs(env::position_reward(0.25) - 0.6701) < 1e-4,
               "reward formulas");

  // mass conservation on random excavations
  {
    Rng rng(7);
    DriftGeometry drift;
    auto hf = soil::generate_pile({soil::PileShape::convex, 3.0, 9.0}, drift, rng);
    soil::SoilParams sp;
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      const double before = soil::pile_mass_tonnes(hf, sp);
      SweptRegion region{rng.uniform(-4.5, 3.5), 0, rng.uniform(0, 18), 0, rng.uniform(0, 2)};
      region.x1 = region.x0 + rng.uniform(0.2, 2.0);
      region.y1 = region.y0 + rng.uniform(0.2, 2.0);
      const double removed = soil::excavate(hf, region);
      const double after = soil::pile_mass_tonnes(hf, sp);
      const double expect = removed * sp.density / 1000.0;
      ok = std::abs((before - after) - expect) <= 1e-9 * std::max(1.0, expect);
    }
    all &= check(ok, "mass conservation");
  }

  // raycast vs dense march
  {
    Rng rng(11);
    DriftGeometry drift;
    auto hf = soil::generate_pile({soil::PileShape::concave, 3.5, 10.0}, drift, rng);
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      Vec3 o{rng.uniform(-4.0, 4.0), rng.uniform(0.5, 8.0), rng.uniform(0.5, 4.0)};
      const double az = rng.uniform(-1.2, 1.2), el = rng.uniform(-0.6, 0.3);
      Vec3 d{std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
      const double fast = sensors::raycast_scene(o, d, drift, hf, 20.0);
      double slow = 20.0;
      for (double t = 0.0; t < 20.0; t += 0.004) {
        const Vec3 p{o.x + t * d.x, o.y + t * d.y, o.z + t * d.z};
        if (std::abs(p.x) >= drift.half_width() || p.y >= drift.length || p.y <= 0.0 ||
            p.z >= drift.height || p.z <= hf.height_at(p.x, p.y)) {
          slow = t;
          break;
        }
      }
      ok = std::abs(fast - slow) < 0.16;
    }
    all &= check(ok, "raycast oracle");
  }

  // gradient check: small double-precision dense net
  {
    Rng rng(3);
    nn::Sequential<double> net;
    auto* d1 = net.add<nn::Dense<double>>(3, 5, "d1");
    d1->init(rng, 1.0);
    net.add<nn::Relu<double>>();
    auto* d2 = net.add<nn::Dense<double>>(5, 2, "d2");
    d2->init(rng, 1.0);
    nn::Tensor<double> x({2, 3});
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    auto loss_of = [&]() {
      auto y = net.forward(x);
      double s = 0;
      for (double v : y.v) s += v * v;
      return 0.5 * s;
    };
    auto y = net.forward(x);
    nn::Tensor<double> dy = y;
    for (auto* p : net.params()) p->zero_grad();
    net.backward(dy);
    bool ok = true;
    const double h = 1e-5;
    for (auto* p : net.params()) {
      for (size_t i = 0; i < p->value.v.size() && ok; i += 3) {
        const double keep = p->value.v[i];
        p->value.v[i] = keep + h;
        const double lp = loss_of();
        p->value.v[i] = keep - h;
        const double lm = loss_of();
        p->value.v[i] = keep;
        const double num = (lp - lm) / (2 * h);
        ok = std::abs(num - p->grad.v[i]) <= 1e-4 * std::max(1.0, std::abs(num));
      }
    }
    all &= check(ok, "gradient check");
  }

  std::cout << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mucksim: underground-loader mucking simulator and RL harness"};
  app.require_subcommand(1);

  std::string config, variant, out = "out", resume, ma_ckpt, mpa_ckpt;
  uint64_t seed = 0;
  int loadings = 80;
  double target = 0.0;
  bool dump_config = false;

  auto* train = app.add_subcommand("train", "run the training pipeline");
  train->add_option("--config", config, "config JSON path");
  train->add_option("--seed", seed, "run seed (overrides config)");
  train->add_option("--variant", variant, "controller variant A|B|C");
  train->add_option("--out", out, "output directory");
  train->add_option("--resume", resume, "training-state checkpoint to resume from");
  train->add_flag("--dump-config", dump_config, "print the effective config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate trained policies");
  eval->add_option("--config", config, "config JSON path");
  eval->add_option("--seed", seed, "run seed");
  eval->add_option("--variant", variant, "controller variant A|B|C");
  eval->add_option("--out", out, "output directory");
  eval->add_option("--ma-ckpt", ma_ckpt, "mucking-agent policy checkpoint");
  eval->add_option("--mpa-ckpt", mpa_ckpt, "position-agent policy checkpoint (variant A)");
  eval->add_option("--loadings", loadings, "number of loadings to evaluate");

  auto* rollout = app.add_subcommand("rollout", "trace a single loading");
  rollout->add_option("--config", config, "config JSON path");
  rollout->add_option("--seed", seed, "run seed");
  rollout->add_option("--variant", variant, "controller variant A|B|C");
  rollout->add_option("--out", out, "output directory");
  rollout->add_option("--ma-ckpt", ma_ckpt, "policy checkpoint (idle policy when omitted)");
  rollout->add_option("--target", target, "target mucking position (m)");

  auto* gen = app.add_subcommand("gen-piles", "emit the four initial piles");
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--out", out, "output directory");

  app.add_subcommand("selftest", "run the built-in oracle checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("train")) {
      if (dump_config) {
        std::cout << harness::train_config_to_json(load_config(config, seed, variant)) << "\n";
        return 0;
      }
      return cmd_train(config, seed, variant, out, resume);
    }
    if (app.got_subcommand("eval")) {
      return cmd_eval(config, seed, variant, out, ma_ckpt, mpa_ckpt, loadings);
    }
    if (app.got_subcommand("rollout")) {
      return cmd_rollout(config, seed, variant, out, ma_ckpt, target);
    }
    if (app.got_subcommand("gen-piles")) return cmd_gen_piles(seed, out);
    if (app.got_subcommand("selftest")) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
