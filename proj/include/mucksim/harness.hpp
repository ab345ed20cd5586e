#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mucksim/agents.hpp"
#include "mucksim/env.hpp"
#include "mucksim/sac.hpp"

namespace mucksim::harness {

struct Lesson {
  int sequence_length = 10;
  int max_generation = 0;
  int64_t step_budget = 0;
};

// Three lessons: sequences grow 10 -> 15 -> 20 while the admissible pile
// generation grows 0 -> 1 -> 2.
struct Curriculum {
  std::array<Lesson, 3> lessons;
  static Curriculum standard(int64_t total_steps);
  const Lesson& lesson_at_step(int64_t step, int* index = nullptr) const;
};

enum class TrainPhase { ma_pretrain = 0, mpa_frozen_ma = 1, joint = 2 };
const char* phase_name(TrainPhase p);

struct TrainConfig {
  uint64_t seed = 1;
  agents::Variant variant = agents::Variant::B;
  env::EnvConfig env;
  vehicle::VehicleParams vehicle;
  std::vector<soil::PileSpec> initial_piles;
  agents::MaNetConfig ma_net;
  agents::MpaNetConfig mpa_net;
  sac::SacConfig ma_sac;
  sac::SacConfig mpa_sac;
  size_t ma_buffer_capacity = 60000;
  size_t mpa_buffer_capacity = 4000;
  int64_t ma_pretrain_steps = 40000;
  int64_t joint_ma_steps = 12000;
  int mpa_phase_loadings = 150;
  int64_t warmup_random_steps = 1500;
  // fraction of warmup loadings driven by the scripted baseline instead of
  // random actions; seeds the off-policy buffer with completed loadings
  double scripted_warmup_fraction = 0.5;
  // after warmup, every Nth loading is still collected from the scripted
  // baseline (0 = off); keeps end-state transitions in the replay buffer.
  // Demo loadings are tagged in the metrics and excluded from tail stats.
  int scripted_demo_every = 10;
  int metrics_update_stride = 100;
  int state_snapshot_sequences = 0;   // 0 = off; else snapshot every N sequences
  int64_t halt_after_sequences = 0;   // 0 = off; debugging/resume-testing knob

  // Desk-scale default: pooled images, small nets, faster optimizer.
  static TrainConfig desk();
  // Full-scale settings mirroring the reference hyperparameters (CPU-weeks).
  static TrainConfig paper();
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// Controller presets: C is B with the energy penalty removed (w2 = 0), the
// only field that differs.
TrainConfig apply_variant(TrainConfig cfg);

struct TrainResult {
  int64_t ma_steps = 0;
  int64_t episodes = 0;
  bool aborted = false;
  std::string abort_reason;
  std::string ma_checkpoint;
  std::string mpa_checkpoint;
  std::string metrics_path;
  // summary of the tail of training (used by the acceptance suite)
  double mean_fill_last50 = 0.0;
  double failure_ratio_last50 = 0.0;
  double mean_energy_last50 = 0.0;
};

TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_state = "");

struct EvalConfig {
  int n_loadings = 80;
  int sequence_length = 20;
  uint64_t seed = 9;
  double density = 2900.0;  // upper limit so a full bucket is ~17.5 t
  double penetration_scaling = 6.5;
  env::EnvConfig env;
  vehicle::VehicleParams vehicle;
  std::vector<soil::PileSpec> piles;
  EvalConfig();
};

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalReport {
  struct Row {
    int n = 0;
    EvalStats mass_t, productivity, energy_MJ, position_error_m;
    double failure_ratio = 0.0;
  };
  Row all;
  Row completed;
  // mucking-position histogram per initial pile shape
  int histogram_bins = 11;
  std::map<std::string, std::vector<int>> target_histogram;
  // per-loading-index mass curve and its regression
  std::vector<double> mass_by_index_mean;
  std::vector<int> mass_by_index_count;
  double mass_index_slope = 0.0;
  double mass_index_slope_se = 0.0;
};

// Pure statistics over an outcome list (oracle-testable).
EvalReport compute_report(const std::vector<env::LoadingOutcome>& outcomes,
                          double usable_half_range = 2.75);

EvalReport evaluate(const env::MpaPolicy& mpa_policy, const env::MaPolicy& ma_policy,
                    const EvalConfig& cfg, std::vector<env::LoadingOutcome>* outcomes_out = nullptr);

// Variant for policies that need the evaluation environment (e.g. the
// scripted baseline); the factory is invoked once on the internal instance.
using MaPolicyFactory = std::function<env::MaPolicy(env::LoaderEnv&)>;
EvalReport evaluate_with_factory(const env::MpaPolicy& mpa_policy,
                                 const MaPolicyFactory& ma_factory, const EvalConfig& cfg,
                                 std::vector<env::LoadingOutcome>* outcomes_out = nullptr);

// outcome CSV: run_id, variant, pile_shape, generation, loading_index,
// target_x, final_x, mass_t, duration_s, energy_J, failed
void write_outcomes_csv(const std::string& path, const std::vector<env::LoadingOutcome>& outcomes,
                        const std::string& run_id, agents::Variant variant);
std::string report_to_json(const EvalReport& report);

double measure_bucket_mass(const vehicle::VehicleState& state, const soil::SoilParams& soil);

// Policy adapters.
env::MaPolicy make_idle_ma_policy();
// Hand-tuned baseline digger bound to one environment instance: approach,
// depth-regulated cut (with stall recovery), curl, reverse out, hold. Useful
// for protocol tests and as a scripted evaluation reference. When an rng is
// given, the cut depth target is redrawn per loading for trajectory variety.
env::MaPolicy make_scripted_ma_policy(env::LoaderEnv& env, Rng* depth_rng = nullptr);
env::MaPolicy make_sac_ma_policy(sac::SacAgent& agent, const agents::MaObsAdapter& adapter,
                                 Rng& rng, bool deterministic);
env::MpaPolicy make_random_target_policy(Rng& rng, double usable_half_range);
env::MpaPolicy make_sac_mpa_policy(sac::SacAgent& agent, const agents::MpaObsAdapter& adapter,
                                   Rng& rng, bool deterministic, double usable_half_range);
env::MpaPolicy make_fixed_target_policy(double target_x);

std::vector<soil::PileSpec> default_pile_specs();
std::vector<soil::PileSpec> desk_pile_specs();

}  // namespace mucksim::harness
