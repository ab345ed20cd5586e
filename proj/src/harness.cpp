#include "mucksim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "mucksim/checkpoint.hpp"

namespace mucksim::harness {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- curriculum

Curriculum Curriculum::standard(int64_t total_steps) {
  Curriculum c;
  const int64_t third = total_steps / 3;
  c.lessons[0] = {10, 0, third};
  c.lessons[1] = {15, 1, third};
  c.lessons[2] = {20, 2, total_steps - 2 * third};
  return c;
}

const Lesson& Curriculum::lesson_at_step(int64_t step, int* index) const {
  int64_t acc = 0;
  for (int i = 0; i < 3; ++i) {
    acc += lessons[static_cast<size_t>(i)].step_budget;
    if (step < acc) {
      if (index) *index = i;
      return lessons[static_cast<size_t>(i)];
    }
  }
  if (index) *index = 2;
  return lessons[2];
}

const char* phase_name(TrainPhase p) {
  switch (p) {
    case TrainPhase::ma_pretrain: return "ma_pretrain";
    case TrainPhase::mpa_frozen_ma: return "mpa_frozen_ma";
    case TrainPhase::joint: return "joint";
  }
  return "?";
}

// ------------------------------------------------------------------- config

std::vector<soil::PileSpec> default_pile_specs() {
  return {{soil::PileShape::convex, 4.0, 11.0},
          {soil::PileShape::concave, 4.0, 11.0},
          {soil::PileShape::left_skewed, 4.0, 11.0},
          {soil::PileShape::right_skewed, 4.0, 11.0}};
}

std::vector<soil::PileSpec> desk_pile_specs() {
  return {{soil::PileShape::convex, 2.0, 7.0},
          {soil::PileShape::concave, 2.0, 7.0},
          {soil::PileShape::left_skewed, 2.0, 7.0},
          {soil::PileShape::right_skewed, 2.0, 7.0}};
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.initial_piles = desk_pile_specs();
  c.env.fixed_camera_y = 0.8;

  c.ma_net.image_pool = 4;
  c.ma_net.conv = {{8, 4, 2}, {8, 3, 1}};
  c.ma_net.visual_dense = {64, 64};
  c.ma_net.scalar_dense = {64, 64};

  c.mpa_net.image_pool = 4;
  c.mpa_net.conv = {{8, 4, 2}, {8, 3, 1}};
  c.mpa_net.dense = {64, 64};

  c.ma_sac.lr = 3e-4;
  c.ma_sac.batch_size = 64;
  c.ma_sac.alpha_init = 0.1;
  c.ma_sac.target_entropy = -10.0;

  c.mpa_sac.lr = 1e-3;
  c.mpa_sac.batch_size = 16;
  c.mpa_sac.alpha_init = 0.1;
  c.mpa_sac.target_entropy = -1.0;
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.initial_piles = default_pile_specs();

  c.ma_net = agents::MaNetConfig{};    // 84x44, conv 16/32, 4x256 + 4x256
  c.mpa_net = agents::MpaNetConfig{};  // 84x44, conv 16/32, 3x128

  c.ma_sac = sac::SacConfig{};  // gamma 0.995, lr 1e-5, batch 256, alpha 0.2
  c.mpa_sac = sac::SacConfig{};

  c.ma_buffer_capacity = 300000;
  c.mpa_buffer_capacity = 100000;
  c.ma_pretrain_steps = 10000000;
  c.joint_ma_steps = 10000000;
  c.mpa_phase_loadings = 20000;
  c.warmup_random_steps = 10000;
  c.scripted_warmup_fraction = 0.0;
  c.scripted_demo_every = 0;
  return c;
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

json pile_to_json(const soil::PileSpec& p) {
  return {{"shape", soil::pile_shape_name(p.shape)},
          {"apex_height", p.apex_height},
          {"toe_position", p.toe_position}};
}

soil::PileSpec pile_from_json(const json& j) {
  soil::PileSpec p;
  if (j.contains("shape")) p.shape = soil::pile_shape_from_name(j.at("shape").get<std::string>());
  get_if(j, "apex_height", p.apex_height);
  get_if(j, "toe_position", p.toe_position);
  return p;
}

json env_to_json(const env::EnvConfig& e) {
  return {{"physics_dt", e.physics_dt},
          {"control_interval", e.control_interval},
          {"timeout_s", e.timeout_s},
          {"loadings_per_pile_save", e.loadings_per_pile_save},
          {"sequence_length", e.sequence_length},
          {"w1", e.w1},
          {"w2", e.w2},
          {"d0", e.d0},
          {"breakout_hold_s", e.breakout_hold_s},
          {"start_y", e.start_y},
          {"fixed_camera_y", e.fixed_camera_y},
          {"fixed_camera_z", e.fixed_camera_z},
          {"fixed_camera_pitch_deg", e.fixed_camera_pitch_deg},
          {"ma_camera_z", e.ma_camera_z},
          {"ma_camera_pitch_deg", e.ma_camera_pitch_deg},
          {"camera_width", e.camera_width},
          {"camera_height", e.camera_height}};
}

void env_from_json(const json& j, env::EnvConfig& e) {
  get_if(j, "physics_dt", e.physics_dt);
  get_if(j, "control_interval", e.control_interval);
  get_if(j, "timeout_s", e.timeout_s);
  get_if(j, "loadings_per_pile_save", e.loadings_per_pile_save);
  get_if(j, "sequence_length", e.sequence_length);
  get_if(j, "w1", e.w1);
  get_if(j, "w2", e.w2);
  get_if(j, "d0", e.d0);
  get_if(j, "breakout_hold_s", e.breakout_hold_s);
  get_if(j, "start_y", e.start_y);
  get_if(j, "fixed_camera_y", e.fixed_camera_y);
  get_if(j, "fixed_camera_z", e.fixed_camera_z);
  get_if(j, "fixed_camera_pitch_deg", e.fixed_camera_pitch_deg);
  get_if(j, "ma_camera_z", e.ma_camera_z);
  get_if(j, "ma_camera_pitch_deg", e.ma_camera_pitch_deg);
  get_if(j, "camera_width", e.camera_width);
  get_if(j, "camera_height", e.camera_height);
}

json vehicle_to_json(const vehicle::VehicleParams& v) {
  return {{"total_mass", v.total_mass},
          {"bucket_width", v.bucket_width},
          {"bucket_capacity_volume", v.bucket_capacity_volume},
          {"bucket_capacity_mass_t", v.bucket_capacity_mass_t},
          {"max_speed", v.max_speed},
          {"max_reverse_speed", v.max_reverse_speed},
          {"engine_power_max", v.engine_power_max},
          {"stall_force", v.stall_force},
          {"traction_coefficient", v.traction_coefficient},
          {"rolling_coeff", v.rolling_coeff},
          {"fill_normal_gain", v.fill_normal_gain},
          {"slip_advance_factor", v.slip_advance_factor},
          {"lift_max_height", v.lift_max_height},
          {"tilt_cutoff", v.tilt_cutoff}};
}

void vehicle_from_json(const json& j, vehicle::VehicleParams& v) {
  get_if(j, "total_mass", v.total_mass);
  get_if(j, "bucket_width", v.bucket_width);
  get_if(j, "bucket_capacity_volume", v.bucket_capacity_volume);
  get_if(j, "bucket_capacity_mass_t", v.bucket_capacity_mass_t);
  get_if(j, "max_speed", v.max_speed);
  get_if(j, "max_reverse_speed", v.max_reverse_speed);
  get_if(j, "engine_power_max", v.engine_power_max);
  get_if(j, "stall_force", v.stall_force);
  get_if(j, "traction_coefficient", v.traction_coefficient);
  get_if(j, "rolling_coeff", v.rolling_coeff);
  get_if(j, "fill_normal_gain", v.fill_normal_gain);
  get_if(j, "slip_advance_factor", v.slip_advance_factor);
  get_if(j, "lift_max_height", v.lift_max_height);
  get_if(j, "tilt_cutoff", v.tilt_cutoff);
}

json conv_to_json(const std::vector<nn::ConvSpec>& cs) {
  json out = json::array();
  for (const auto& c : cs) out.push_back({{"out_ch", c.out_ch}, {"kernel", c.kernel}, {"stride", c.stride}});
  return out;
}

std::vector<nn::ConvSpec> conv_from_json(const json& j) {
  std::vector<nn::ConvSpec> out;
  for (const auto& e : j) {
    out.push_back({e.at("out_ch").get<int>(), e.at("kernel").get<int>(), e.at("stride").get<int>()});
  }
  return out;
}

json sac_to_json(const sac::SacConfig& s) {
  return {{"gamma", s.gamma},
          {"lr", s.lr},
          {"tau", s.tau},
          {"alpha_init", s.alpha_init},
          {"batch_size", s.batch_size},
          {"auto_alpha", s.auto_alpha},
          {"target_entropy", s.target_entropy},
          {"updates_per_env_step", s.updates_per_env_step},
          {"deterministic_policy", s.deterministic_policy}};
}

void sac_from_json(const json& j, sac::SacConfig& s) {
  get_if(j, "gamma", s.gamma);
  get_if(j, "lr", s.lr);
  get_if(j, "tau", s.tau);
  get_if(j, "alpha_init", s.alpha_init);
  get_if(j, "batch_size", s.batch_size);
  get_if(j, "auto_alpha", s.auto_alpha);
  get_if(j, "target_entropy", s.target_entropy);
  get_if(j, "updates_per_env_step", s.updates_per_env_step);
  get_if(j, "deterministic_policy", s.deterministic_policy);
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["variant"] = agents::variant_name(c.variant);
  j["env"] = env_to_json(c.env);
  j["vehicle"] = vehicle_to_json(c.vehicle);
  json piles = json::array();
  for (const auto& p : c.initial_piles) piles.push_back(pile_to_json(p));
  j["initial_piles"] = piles;
  j["ma_net"] = {{"image_w", c.ma_net.image_w},
                 {"image_h", c.ma_net.image_h},
                 {"image_pool", c.ma_net.image_pool},
                 {"conv", conv_to_json(c.ma_net.conv)},
                 {"visual_dense", c.ma_net.visual_dense},
                 {"scalar_dense", c.ma_net.scalar_dense}};
  j["mpa_net"] = {{"image_w", c.mpa_net.image_w},
                  {"image_h", c.mpa_net.image_h},
                  {"image_pool", c.mpa_net.image_pool},
                  {"conv", conv_to_json(c.mpa_net.conv)},
                  {"dense", c.mpa_net.dense}};
  j["ma_sac"] = sac_to_json(c.ma_sac);
  j["mpa_sac"] = sac_to_json(c.mpa_sac);
  j["ma_buffer_capacity"] = c.ma_buffer_capacity;
  j["mpa_buffer_capacity"] = c.mpa_buffer_capacity;
  j["ma_pretrain_steps"] = c.ma_pretrain_steps;
  j["joint_ma_steps"] = c.joint_ma_steps;
  j["mpa_phase_loadings"] = c.mpa_phase_loadings;
  j["warmup_random_steps"] = c.warmup_random_steps;
  j["scripted_warmup_fraction"] = c.scripted_warmup_fraction;
  j["scripted_demo_every"] = c.scripted_demo_every;
  j["metrics_update_stride"] = c.metrics_update_stride;
  j["state_snapshot_sequences"] = c.state_snapshot_sequences;
  j["halt_after_sequences"] = c.halt_after_sequences;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c = TrainConfig::desk();
  get_if(j, "seed", c.seed);
  if (j.contains("variant")) c.variant = agents::variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("env")) env_from_json(j.at("env"), c.env);
  if (j.contains("vehicle")) vehicle_from_json(j.at("vehicle"), c.vehicle);
  if (j.contains("initial_piles")) {
    c.initial_piles.clear();
    for (const auto& p : j.at("initial_piles")) c.initial_piles.push_back(pile_from_json(p));
  }
  if (j.contains("ma_net")) {
    const auto& m = j.at("ma_net");
    get_if(m, "image_w", c.ma_net.image_w);
    get_if(m, "image_h", c.ma_net.image_h);
    get_if(m, "image_pool", c.ma_net.image_pool);
    if (m.contains("conv")) c.ma_net.conv = conv_from_json(m.at("conv"));
    get_if(m, "visual_dense", c.ma_net.visual_dense);
    get_if(m, "scalar_dense", c.ma_net.scalar_dense);
  }
  if (j.contains("mpa_net")) {
    const auto& m = j.at("mpa_net");
    get_if(m, "image_w", c.mpa_net.image_w);
    get_if(m, "image_h", c.mpa_net.image_h);
    get_if(m, "image_pool", c.mpa_net.image_pool);
    if (m.contains("conv")) c.mpa_net.conv = conv_from_json(m.at("conv"));
    get_if(m, "dense", c.mpa_net.dense);
  }
  if (j.contains("ma_sac")) sac_from_json(j.at("ma_sac"), c.ma_sac);
  if (j.contains("mpa_sac")) sac_from_json(j.at("mpa_sac"), c.mpa_sac);
  get_if(j, "ma_buffer_capacity", c.ma_buffer_capacity);
  get_if(j, "mpa_buffer_capacity", c.mpa_buffer_capacity);
  get_if(j, "ma_pretrain_steps", c.ma_pretrain_steps);
  get_if(j, "joint_ma_steps", c.joint_ma_steps);
  get_if(j, "mpa_phase_loadings", c.mpa_phase_loadings);
  get_if(j, "warmup_random_steps", c.warmup_random_steps);
  get_if(j, "scripted_warmup_fraction", c.scripted_warmup_fraction);
  get_if(j, "scripted_demo_every", c.scripted_demo_every);
  get_if(j, "metrics_update_stride", c.metrics_update_stride);
  get_if(j, "state_snapshot_sequences", c.state_snapshot_sequences);
  get_if(j, "halt_after_sequences", c.halt_after_sequences);
  return c;
}

// ----------------------------------------------------------------- training

TrainConfig apply_variant(TrainConfig cfg) {
  if (cfg.variant == agents::Variant::C) cfg.env.w2 = 0.0;
  return cfg;
}

namespace {

struct LoadingRun {
  env::LoadingOutcome outcome;
  double episode_reward = 0.0;
};

class TrainSession {
 public:
  TrainSession(const TrainConfig& cfg_in, const std::string& out_dir)
      : cfg_(mucksim::harness::apply_variant(cfg_in)), out_dir_(out_dir), drift_{},
        ma_adapter_(cfg_.ma_net), mpa_adapter_(cfg_.mpa_net),
        ma_(ma_adapter_.actor_spec(), ma_adapter_.critic_spec(), agents::kMaActionDim, cfg_.ma_sac,
            Rng::mix(cfg_.seed, 11)),
        mpa_(mpa_adapter_.actor_spec(), mpa_adapter_.critic_spec(), agents::kMpaActionDim,
             cfg_.mpa_sac, Rng::mix(cfg_.seed, 12)),
        ma_buf_(cfg_.ma_buffer_capacity, ma_adapter_.vis_dim(), ma_adapter_.scalar_dim(),
                agents::kMaActionDim),
        mpa_buf_(cfg_.mpa_buffer_capacity, mpa_adapter_.vis_dim(), 0, agents::kMpaActionDim),
        env_(cfg_.env, cfg_.vehicle, drift_),
        env_rng_(Rng::mix(cfg_.seed, 1)), policy_rng_(Rng::mix(cfg_.seed, 2)),
        buffer_rng_(Rng::mix(cfg_.seed, 3)),
        curriculum_(Curriculum::standard(cfg_.ma_pretrain_steps)) {
    fs::create_directories(out_dir_);
    metrics_path_ = (fs::path(out_dir_) / "metrics.csv").string();
  }

  TrainResult run(const std::string& resume_state, int64_t halt_after_sequences) {
    init_pool();
    const bool resuming = !resume_state.empty();
    if (resuming) load_state(resume_state);
    open_metrics(resuming);
    halt_after_sequences_ = halt_after_sequences;

    TrainResult result;
    result.metrics_path = metrics_path_;
    try {
      if (phase_ == TrainPhase::ma_pretrain) {
        if (!resuming) phase_row();
        run_ma_pretrain();
        if (!halted_) {
          result.ma_checkpoint = save_policy_checkpoint("ma", ma_);
          if (cfg_.variant == agents::Variant::A) advance_phase(TrainPhase::mpa_frozen_ma);
        }
      }
      if (!halted_ && cfg_.variant == agents::Variant::A) {
        if (phase_ == TrainPhase::mpa_frozen_ma) {
          run_mpa_phase(false);
          if (!halted_) {
            result.mpa_checkpoint = save_policy_checkpoint("mpa", mpa_);
            advance_phase(TrainPhase::joint);
          }
        }
        if (!halted_ && phase_ == TrainPhase::joint) {
          run_mpa_phase(true);
          if (!halted_) {
            result.ma_checkpoint = save_policy_checkpoint("ma", ma_);
            result.mpa_checkpoint = save_policy_checkpoint("mpa", mpa_);
          }
        }
      }
    } catch (const std::exception& e) {
      // retain the last-good checkpoint: do not overwrite with post-abort state
      result.aborted = true;
      result.abort_reason = e.what();
      metrics_ << "abort,,,,,,,,,,,,,," << std::quoted(std::string(e.what())) << ",,,,\n";
    }
    if (!result.aborted && result.ma_checkpoint.empty()) {
      result.ma_checkpoint = save_policy_checkpoint("ma", ma_);
    }
    metrics_.flush();
    result.ma_steps = ma_step_;
    result.episodes = episode_;
    tail_stats(result);
    return result;
  }

 private:
  void init_pool() {
    Rng pile_rng(Rng::mix(cfg_.seed, 4));
    for (const auto& spec : cfg_.initial_piles) {
      pool_.push(soil::generate_pile(spec, drift_, pile_rng), -1);
      pool_shapes_.push_back(spec.shape);
    }
  }

  void open_metrics(bool append) {
    metrics_.open(metrics_path_, append ? std::ios::app : std::ios::out);
    metrics_ << std::setprecision(12);
    if (!append) {
      metrics_ << "# mucksim metrics v1\n";
      metrics_ << "kind,agent,phase,lesson,step,episode,loading_index,target_x,reward,fill,"
                  "mass_t,duration_s,energy_J,failed,q1,q2,actor,alpha,entropy\n";
    }
  }

  // metric rows keep a fixed column layout; unused fields stay empty
  void phase_row() {
    metrics_ << "phase,," << phase_name(phase_) << ",," << ma_step_ << "," << episode_
             << ",,,,,,,,,,,,,\n";
  }
  void lesson_row(int lesson_idx) {
    metrics_ << "lesson,," << phase_name(phase_) << "," << lesson_idx << "," << ma_step_ << ","
             << episode_ << ",,,,,,,,,,,,,\n";
  }
  void loading_row(const env::LoadingOutcome& o, double ep_reward, const char* agent = "ma") {
    metrics_ << "loading," << agent << "," << phase_name(phase_) << "," << lesson_idx_ << ","
             << ma_step_ << "," << episode_ << "," << o.loading_index << "," << o.target_x << ","
             << ep_reward << "," << o.final_fill << "," << o.mass_t << "," << o.duration_s << ","
             << o.energy_J << "," << (o.failed ? 1 : 0) << ",,,,,\n";
  }
  void update_row(const char* agent, const sac::LossReport& r, int64_t updates) {
    metrics_ << "update," << agent << "," << phase_name(phase_) << "," << lesson_idx_ << ","
             << ma_step_ << "," << episode_ << "," << updates << ",,,,,,,," << r.q1 << "," << r.q2
             << "," << r.actor << "," << r.alpha << "," << r.entropy << "\n";
  }

  void advance_phase(TrainPhase p) {
    phase_ = p;
    if (p == TrainPhase::joint) joint_start_step_ = ma_step_;
    phase_row();
  }

  void start_sequence(int max_generation) {
    const size_t idx = pool_.draw_index(env_rng_, max_generation);
    seq_parent_generation_ = pool_.entry(idx).generation;
    env_.set_pile(pool_.entry(idx), pool_shapes_[idx]);
    env_.set_soil(soil::sample_soil(env_rng_));
  }

  enum class ActionSource { policy, random, scripted };

  // Warmup loadings mix random and scripted trajectories; afterwards every
  // Nth loading is still scripted so the buffer keeps seeing completed
  // breakouts. Demo loadings are excluded from the tail statistics.
  ActionSource pick_source() {
    if (ma_step_ < cfg_.warmup_random_steps) {
      return policy_rng_.uniform() < cfg_.scripted_warmup_fraction ? ActionSource::scripted
                                                                   : ActionSource::random;
    }
    if (cfg_.scripted_demo_every > 0 && episode_ % cfg_.scripted_demo_every == 0) {
      return ActionSource::scripted;
    }
    return ActionSource::policy;
  }

  LoadingRun run_loading(double target, bool learn_ma, bool stochastic_ma,
                         ActionSource source = ActionSource::policy) {
    auto obs = env_.reset_loading(target);
    sac::Obs enc = ma_adapter_.encode(obs);
    LoadingRun run;
    if (!scripted_) scripted_ = make_scripted_ma_policy(env_, &policy_rng_);
    while (true) {
      std::vector<float> action(agents::kMaActionDim);
      if (source == ActionSource::scripted) {
        const auto cmd = scripted_(obs);
        action = {static_cast<float>(cmd.throttle), static_cast<float>(cmd.steer_rate),
                  static_cast<float>(cmd.lift_rate), static_cast<float>(cmd.tilt_rate)};
      } else if (source == ActionSource::random && ma_step_ < cfg_.warmup_random_steps) {
        for (auto& a : action) a = static_cast<float>(policy_rng_.uniform(-1.0, 1.0));
      } else {
        action = ma_.act(enc, policy_rng_, !stochastic_ma);
      }
      auto res = env_.step(agents::command_from_action(action));
      sac::Obs enc2 = ma_adapter_.encode(res.obs);
      run.episode_reward += res.reward;
      if (learn_ma) {
        // timeouts are truncations: bootstrap through them
        const bool terminal = res.done && res.outcome && !res.outcome->failed;
        ma_buf_.push({enc, action, static_cast<float>(res.reward), enc2, terminal});
        ++ma_step_;
        maybe_update_ma();
      }
      enc = std::move(enc2);
      if (res.done) {
        run.outcome = *res.outcome;
        break;
      }
    }
    ++episode_;
    return run;
  }

  void maybe_update_ma() {
    if (ma_step_ <= cfg_.warmup_random_steps) return;
    if (ma_buf_.size() < static_cast<size_t>(cfg_.ma_sac.batch_size)) return;
    for (int u = 0; u < cfg_.ma_sac.updates_per_env_step; ++u) {
      auto report = ma_.update(ma_buf_.sample(buffer_rng_, cfg_.ma_sac.batch_size));
      if (ma_.update_count() % cfg_.metrics_update_stride == 0) update_row("ma", report, ma_.update_count());
    }
  }

  void note_loading(const env::LoadingOutcome& o) {
    tail_.push_back(o);
    while (tail_.size() > 50) tail_.pop_front();
  }

  bool sequence_done_hook() {
    ++sequences_done_;
    if (cfg_.state_snapshot_sequences > 0 &&
        sequences_done_ % cfg_.state_snapshot_sequences == 0) {
      save_state((fs::path(out_dir_) / "train_state.ckpt").string());
    }
    if (halt_after_sequences_ > 0 && sequences_done_ >= halt_after_sequences_) {
      halted_ = true;
      return true;
    }
    return false;
  }

  void run_ma_pretrain() {
    const double range = env_.usable_half_range();
    while (ma_step_ < cfg_.ma_pretrain_steps) {
      int lesson_idx = 0;
      const Lesson& lesson = curriculum_.lesson_at_step(ma_step_, &lesson_idx);
      if (lesson_idx != lesson_idx_) {
        lesson_idx_ = lesson_idx;
        lesson_row(lesson_idx);
      }
      start_sequence(lesson.max_generation);
      for (int i = 1; i <= lesson.sequence_length && ma_step_ < cfg_.ma_pretrain_steps; ++i) {
        const double target = env_rng_.uniform(-range, range);
        const auto source = pick_source();
        auto run = run_loading(target, true, true, source);
        run.outcome.loading_index = i;
        loading_row(run.outcome, run.episode_reward,
                    source == ActionSource::scripted ? "demo" : "ma");
        if (source == ActionSource::policy) note_loading(run.outcome);
        if (i == cfg_.env.loadings_per_pile_save) {
          pool_.push(env_.heightfield(), seq_parent_generation_);
          pool_shapes_.push_back(env_.pile_shape());
        }
      }
      if (sequence_done_hook()) return;
    }
  }

  void run_mpa_phase(bool joint) {
    const double range = env_.usable_half_range();
    const Lesson& lesson = curriculum_.lessons[2];
    if (joint && joint_start_step_ < 0) joint_start_step_ = ma_step_;
    const int64_t joint_budget_end = joint ? joint_start_step_ + cfg_.joint_ma_steps : 0;
    auto phase_done = [&]() {
      return joint ? ma_step_ >= joint_budget_end
                   : mpa_loadings_done_ >= cfg_.mpa_phase_loadings;
    };
    while (!phase_done()) {
      start_sequence(lesson.max_generation);
      agents::CooperationState coop;
      for (int i = 1; i <= lesson.sequence_length && !phase_done(); ++i) {
        auto sel_obs = mpa_adapter_.encode(env_.fixed_camera_depth());
        auto action = mpa_.act(sel_obs, policy_rng_, false);
        const double target = agents::target_from_action(action[0], range);
        agents::open_loading(coop, sel_obs, action, target);
        auto run = run_loading(target, joint, joint);
        run.outcome.loading_index = i;
        auto next_obs = mpa_adapter_.encode(env_.fixed_camera_depth());
        const bool seq_end = i == lesson.sequence_length;
        mpa_buf_.push(agents::build_mpa_transition(coop, run.outcome, next_obs, seq_end));
        ++mpa_loadings_done_;
        if (mpa_buf_.size() >= static_cast<size_t>(cfg_.mpa_sac.batch_size)) {
          auto report = mpa_.update(mpa_buf_.sample(buffer_rng_, cfg_.mpa_sac.batch_size));
          if (mpa_.update_count() % cfg_.metrics_update_stride == 0) {
            update_row("mpa", report, mpa_.update_count());
          }
        }
        loading_row(run.outcome, run.episode_reward);
        note_loading(run.outcome);
        if (i == cfg_.env.loadings_per_pile_save) {
          pool_.push(env_.heightfield(), seq_parent_generation_);
          pool_shapes_.push_back(env_.pile_shape());
        }
      }
      if (sequence_done_hook()) return;
    }
  }

  std::string save_policy_checkpoint(const std::string& agent, sac::SacAgent& a) {
    const std::string name = agent + "-" + agents::variant_name(cfg_.variant) + "-" +
                             std::to_string(ma_step_) + ".ckpt";
    const std::string path = (fs::path(out_dir_) / name).string();
    a.save_policy(path);
    return path;
  }

  void tail_stats(TrainResult& r) const {
    if (tail_.empty()) return;
    double fill = 0, energy = 0;
    int failed = 0;
    for (const auto& o : tail_) {
      fill += o.final_fill;
      energy += o.energy_J;
      failed += o.failed ? 1 : 0;
    }
    const double n = static_cast<double>(tail_.size());
    r.mean_fill_last50 = fill / n;
    r.mean_energy_last50 = energy / n;
    r.failure_ratio_last50 = failed / n;
  }

  void save_state(const std::string& path) const {
    nn::Checkpoint ck;
    ma_.save_state(ck, "ma/");
    mpa_.save_state(ck, "mpa/");
    auto save_buf = [&](const std::string& tag, const sac::ReplayBuffer& buf) {
      ck.add_f32(tag + "/data", {static_cast<int>(buf.storage().size())}, buf.storage().data(),
                 static_cast<int64_t>(buf.storage().size()));
      ck.add_text(tag + "/size", std::to_string(buf.size()));
      ck.add_text(tag + "/next", std::to_string(buf.next_slot()));
    };
    save_buf("ma_buf", ma_buf_);
    save_buf("mpa_buf", mpa_buf_);
    for (size_t i = 0; i < pool_.size(); ++i) {
      const auto& hf = pool_.entry(i);
      ck.add_f64("pool/" + std::to_string(i), {hf.nx(), hf.ny()}, hf.data().data(),
                 static_cast<int64_t>(hf.data().size()));
      ck.add_text("pool/" + std::to_string(i) + "/generation", std::to_string(hf.generation));
      ck.add_text("pool/" + std::to_string(i) + "/shape",
                  soil::pile_shape_name(pool_shapes_[i]));
    }
    ck.add_text("pool/count", std::to_string(pool_.size()));
    ck.add_text("rng/env", env_rng_.state());
    ck.add_text("rng/policy", policy_rng_.state());
    ck.add_text("rng/buffer", buffer_rng_.state());
    ck.add_text("ctr/phase", std::to_string(static_cast<int>(phase_)));
    ck.add_text("ctr/ma_step", std::to_string(ma_step_));
    ck.add_text("ctr/episode", std::to_string(episode_));
    ck.add_text("ctr/mpa_loadings", std::to_string(mpa_loadings_done_));
    ck.add_text("ctr/sequences", std::to_string(sequences_done_));
    ck.add_text("ctr/lesson", std::to_string(lesson_idx_));
    ck.add_text("ctr/joint_start", std::to_string(joint_start_step_));
    ck.save(path);
  }

  void load_state(const std::string& path) {
    auto ck = nn::Checkpoint::load(path);
    ma_.load_state(ck, "ma/");
    mpa_.load_state(ck, "mpa/");
    auto load_buf = [&](const std::string& tag, sac::ReplayBuffer& buf) {
      buf.restore(ck.get_f32(tag + "/data"), std::stoull(ck.get_text(tag + "/size")),
                  std::stoull(ck.get_text(tag + "/next")));
    };
    load_buf("ma_buf", ma_buf_);
    load_buf("mpa_buf", mpa_buf_);
    const size_t n = std::stoull(ck.get_text("pool/count"));
    pool_ = soil::PilePool();
    pool_shapes_.clear();
    for (size_t i = 0; i < n; ++i) {
      const auto shape = ck.shape_of("pool/" + std::to_string(i));
      soil::Heightfield hf(shape[0], shape[1], soil::kDefaultCell);
      hf.data() = ck.get_f64("pool/" + std::to_string(i));
      const int gen = std::stoi(ck.get_text("pool/" + std::to_string(i) + "/generation"));
      pool_.push(hf, gen - 1);
      pool_shapes_.push_back(
          soil::pile_shape_from_name(ck.get_text("pool/" + std::to_string(i) + "/shape")));
    }
    env_rng_.set_state(ck.get_text("rng/env"));
    policy_rng_.set_state(ck.get_text("rng/policy"));
    buffer_rng_.set_state(ck.get_text("rng/buffer"));
    phase_ = static_cast<TrainPhase>(std::stoi(ck.get_text("ctr/phase")));
    ma_step_ = std::stoll(ck.get_text("ctr/ma_step"));
    episode_ = std::stoll(ck.get_text("ctr/episode"));
    mpa_loadings_done_ = std::stoi(ck.get_text("ctr/mpa_loadings"));
    sequences_done_ = std::stoll(ck.get_text("ctr/sequences"));
    lesson_idx_ = std::stoi(ck.get_text("ctr/lesson"));
    joint_start_step_ = std::stoll(ck.get_text("ctr/joint_start"));
  }

  TrainConfig cfg_;
  std::string out_dir_;
  DriftGeometry drift_;
  agents::MaObsAdapter ma_adapter_;
  agents::MpaObsAdapter mpa_adapter_;
  sac::SacAgent ma_;
  sac::SacAgent mpa_;
  sac::ReplayBuffer ma_buf_;
  sac::ReplayBuffer mpa_buf_;
  env::LoaderEnv env_;
  Rng env_rng_, policy_rng_, buffer_rng_;
  Curriculum curriculum_;
  soil::PilePool pool_;
  std::vector<soil::PileShape> pool_shapes_;
  env::MaPolicy scripted_;

  std::ofstream metrics_;
  std::string metrics_path_;
  TrainPhase phase_ = TrainPhase::ma_pretrain;
  int64_t ma_step_ = 0;
  int64_t episode_ = 0;
  int mpa_loadings_done_ = 0;
  int64_t sequences_done_ = 0;
  int lesson_idx_ = -1;
  int seq_parent_generation_ = 0;
  int64_t joint_start_step_ = -1;
  int64_t halt_after_sequences_ = 0;
  bool halted_ = false;
  std::deque<env::LoadingOutcome> tail_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_state) {
  TrainSession session(cfg, out_dir);
  return session.run(resume_state, cfg.halt_after_sequences);
}

// ------------------------------------------------------------------- eval

EvalConfig::EvalConfig() { piles = default_pile_specs(); }

namespace {

EvalStats stats_of(const std::vector<double>& v) {
  EvalStats s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

EvalReport::Row make_row(const std::vector<env::LoadingOutcome>& outs) {
  EvalReport::Row row;
  row.n = static_cast<int>(outs.size());
  std::vector<double> mass, prod, energy, pos;
  int failed = 0;
  for (const auto& o : outs) {
    mass.push_back(o.mass_t);
    prod.push_back(o.duration_s > 0 ? o.mass_t / o.duration_s : 0.0);
    energy.push_back(o.energy_J / 1e6);
    pos.push_back(o.position_error_m);
    failed += o.failed ? 1 : 0;
  }
  row.mass_t = stats_of(mass);
  row.productivity = stats_of(prod);
  row.energy_MJ = stats_of(energy);
  row.position_error_m = stats_of(pos);
  row.failure_ratio = outs.empty() ? 0.0 : static_cast<double>(failed) / outs.size();
  return row;
}

}  // namespace

EvalReport compute_report(const std::vector<env::LoadingOutcome>& outcomes,
                          double usable_half_range) {
  EvalReport r;
  r.all = make_row(outcomes);
  std::vector<env::LoadingOutcome> completed;
  for (const auto& o : outcomes) {
    if (!o.failed) completed.push_back(o);
  }
  r.completed = make_row(completed);

  for (const auto& o : outcomes) {
    auto& hist = r.target_histogram[soil::pile_shape_name(o.pile_shape)];
    if (hist.empty()) hist.assign(static_cast<size_t>(r.histogram_bins), 0);
    const double u = (o.target_x + usable_half_range) / (2.0 * usable_half_range);
    int bin = static_cast<int>(u * r.histogram_bins);
    bin = std::clamp(bin, 0, r.histogram_bins - 1);
    ++hist[static_cast<size_t>(bin)];
  }

  int max_index = 0;
  for (const auto& o : outcomes) max_index = std::max(max_index, o.loading_index);
  r.mass_by_index_mean.assign(static_cast<size_t>(max_index), 0.0);
  r.mass_by_index_count.assign(static_cast<size_t>(max_index), 0);
  for (const auto& o : outcomes) {
    if (o.loading_index < 1) continue;
    r.mass_by_index_mean[static_cast<size_t>(o.loading_index - 1)] += o.mass_t;
    r.mass_by_index_count[static_cast<size_t>(o.loading_index - 1)] += 1;
  }
  std::vector<double> xs, ys;
  for (int i = 0; i < max_index; ++i) {
    if (r.mass_by_index_count[static_cast<size_t>(i)] > 0) {
      r.mass_by_index_mean[static_cast<size_t>(i)] /= r.mass_by_index_count[static_cast<size_t>(i)];
      xs.push_back(i + 1.0);
      ys.push_back(r.mass_by_index_mean[static_cast<size_t>(i)]);
    }
  }
  if (xs.size() >= 3) {
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom > 0) {
      r.mass_index_slope = (n * sxy - sx * sy) / denom;
      const double intercept = (sy - r.mass_index_slope * sx) / n;
      double sse = 0.0;
      for (size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (intercept + r.mass_index_slope * xs[i]);
        sse += e * e;
      }
      const double xbar = sx / n;
      double sxx_c = 0.0;
      for (double x : xs) sxx_c += (x - xbar) * (x - xbar);
      if (xs.size() > 2 && sxx_c > 0) {
        r.mass_index_slope_se = std::sqrt(sse / (n - 2.0) / sxx_c);
      }
    }
  }
  return r;
}

EvalReport evaluate_with_factory(const env::MpaPolicy& mpa_policy,
                                 const MaPolicyFactory& ma_factory, const EvalConfig& cfg,
                                 std::vector<env::LoadingOutcome>* outcomes_out) {
  DriftGeometry drift;
  env::LoaderEnv env(cfg.env, cfg.vehicle, drift);
  soil::SoilParams sp;
  sp.density = cfg.density;
  sp.penetration_scaling = cfg.penetration_scaling;
  Rng pile_rng(Rng::mix(cfg.seed, 21));
  const auto ma_policy = ma_factory(env);

  std::vector<env::LoadingOutcome> all;
  size_t k = 0;
  while (static_cast<int>(all.size()) < cfg.n_loadings) {
    const auto& spec = cfg.piles[k % cfg.piles.size()];
    ++k;
    env.set_pile(soil::generate_pile(spec, drift, pile_rng), spec.shape);
    env.set_soil(sp);
    const int n = std::min<int>(cfg.sequence_length, cfg.n_loadings - static_cast<int>(all.size()));
    auto outs = env::run_sequence(env, mpa_policy, ma_policy, n, nullptr);
    all.insert(all.end(), outs.begin(), outs.end());
  }
  const double range = drift.half_width() - 0.5 * cfg.vehicle.bucket_width;
  auto report = compute_report(all, range);
  if (outcomes_out) *outcomes_out = std::move(all);
  return report;
}

EvalReport evaluate(const env::MpaPolicy& mpa_policy, const env::MaPolicy& ma_policy,
                    const EvalConfig& cfg, std::vector<env::LoadingOutcome>* outcomes_out) {
  return evaluate_with_factory(
      mpa_policy, [&](env::LoaderEnv&) { return ma_policy; }, cfg, outcomes_out);
}

void write_outcomes_csv(const std::string& path, const std::vector<env::LoadingOutcome>& outcomes,
                        const std::string& run_id, agents::Variant variant) {
  std::ofstream f(path);
  f << std::setprecision(12);
  f << "run_id,variant,pile_shape,generation,loading_index,target_x,final_x,mass_t,duration_s,"
       "energy_J,failed\n";
  for (const auto& o : outcomes) {
    f << run_id << "," << agents::variant_name(variant) << "," << soil::pile_shape_name(o.pile_shape)
      << "," << o.pile_generation << "," << o.loading_index << "," << o.target_x << ","
      << o.final_x << "," << o.mass_t << "," << o.duration_s << "," << o.energy_J << ","
      << (o.failed ? 1 : 0) << "\n";
  }
}

std::string report_to_json(const EvalReport& r) {
  auto row = [](const EvalReport::Row& x) {
    return json{{"n", x.n},
                {"mass_t", {{"mean", x.mass_t.mean}, {"std", x.mass_t.stddev}}},
                {"productivity_t_per_s",
                 {{"mean", x.productivity.mean}, {"std", x.productivity.stddev}}},
                {"energy_MJ", {{"mean", x.energy_MJ.mean}, {"std", x.energy_MJ.stddev}}},
                {"position_error_m",
                 {{"mean", x.position_error_m.mean}, {"std", x.position_error_m.stddev}}},
                {"failure_ratio", x.failure_ratio}};
  };
  json j;
  j["all_loadings"] = row(r.all);
  j["completed_loadings"] = row(r.completed);
  j["target_histogram"] = r.target_histogram;
  j["mass_by_index_mean"] = r.mass_by_index_mean;
  j["mass_by_index_count"] = r.mass_by_index_count;
  j["mass_index_slope"] = r.mass_index_slope;
  j["mass_index_slope_se"] = r.mass_index_slope_se;
  return j.dump(2);
}

double measure_bucket_mass(const vehicle::VehicleState& state, const soil::SoilParams& soil) {
  return state.fill_volume * soil.density / 1000.0;
}

env::MaPolicy make_idle_ma_policy() {
  return [](const sensors::StackedObservation&) { return vehicle::ActuatorCommand{}; };
}

env::MaPolicy make_scripted_ma_policy(env::LoaderEnv& env, Rng* depth_rng) {
  // per-loading controller state lives in the closure; reset on clock zero
  struct ScriptState {
    bool breakout = false;
    double stall_time = 0.0;
    double depth_base = 0.16;
  };
  auto st = std::make_shared<ScriptState>();
  return [&env, st, depth_rng](const sensors::StackedObservation&) {
    const auto& s = env.vehicle_state();
    const auto& p = env.vehicle_params();
    const double dt = env.control_dt();
    if (env.clock() < 1.5 * dt) {
      st->breakout = false;
      st->stall_time = 0.0;
      st->depth_base = depth_rng ? depth_rng->uniform(0.12, 0.3) : 0.16;
    }

    vehicle::ActuatorCommand cmd;
    const Vec2 tip = s.bucket_tip(p);
    const auto cut = vehicle::bucket_engagement(s, p, env.heightfield());

    // pushing without advancing means the cut has loaded up beyond traction
    if (!st->breakout && cut.engaged && std::abs(s.forward_speed) < 0.02 &&
        s.fill_fraction(p) > 0.05) {
      st->stall_time += dt;
    } else {
      st->stall_time = 0.0;
    }

    if (!st->breakout && (s.fill_fraction(p) >= 0.7 || s.tilt >= p.tilt_cutoff - 0.02 ||
                          st->stall_time > 1.5 || env.clock() > 30.0)) {
      st->breakout = true;
    }

    if (st->breakout) {
      // curl fully, back straight out, hold the tilt command still
      if (s.tilt < 0.999) {
        cmd.tilt_rate = 1.0;
        cmd.throttle = -0.2;
      } else {
        cmd.tilt_rate = 0.0;
        cmd.throttle = -0.5;
        cmd.lift_rate = s.lift > 0.4 ? -0.2 : 0.0;
      }
      return cmd;
    }

    // steer the tip toward the target and keep the frame straight
    const double dx = env.target_x() - tip.x;
    cmd.steer_rate = std::clamp(1.5 * dx - 2.0 * s.heading - 1.0 * s.articulation, -1.0, 1.0);

    if (!cut.engaged && s.fill_volume == 0.0) {
      cmd.throttle = 0.4;  // approach below the traction limit
      cmd.lift_rate = s.lift > 0.0 ? -0.5 : 0.0;
      cmd.tilt_rate = s.tilt > 0.0 ? -0.5 : 0.0;
      return cmd;
    }

    // depth-regulated cut: raise the blade when the cut loads up or slips
    const double depth_target = st->depth_base + 0.14 * s.fill_fraction(p);
    cmd.throttle = s.wheel_slip ? 0.25 : 0.45;
    if (cut.depth > depth_target || s.wheel_slip) {
      cmd.lift_rate = 0.8;
    } else if (cut.depth < 0.6 * depth_target) {
      cmd.lift_rate = -0.3;
    }
    cmd.tilt_rate = s.fill_fraction(p) > 0.2 ? 0.1 : 0.0;
    return cmd;
  };
}

env::MaPolicy make_sac_ma_policy(sac::SacAgent& agent, const agents::MaObsAdapter& adapter,
                                 Rng& rng, bool deterministic) {
  return [&agent, adapter, &rng, deterministic](const sensors::StackedObservation& obs) {
    auto action = agent.act(adapter.encode(obs), rng, deterministic);
    return agents::command_from_action(action);
  };
}

env::MpaPolicy make_random_target_policy(Rng& rng, double usable_half_range) {
  return [&rng, usable_half_range](const sensors::DepthImage&) {
    return rng.uniform(-usable_half_range, usable_half_range);
  };
}

env::MpaPolicy make_sac_mpa_policy(sac::SacAgent& agent, const agents::MpaObsAdapter& adapter,
                                   Rng& rng, bool deterministic, double usable_half_range) {
  return [&agent, adapter, &rng, deterministic, usable_half_range](const sensors::DepthImage& d) {
    auto action = agent.act(adapter.encode(d), rng, deterministic);
    return agents::target_from_action(action[0], usable_half_range);
  };
}

env::MpaPolicy make_fixed_target_policy(double target_x) {
  return [target_x](const sensors::DepthImage&) { return target_x; };
}

}  // namespace mucksim::harness
