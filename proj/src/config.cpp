#include "omniloco/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace omniloco {

namespace {

using nlohmann::json;

// One field list per struct, walked by both the reader and the writer so the
// two can never drift apart.
template <class V>
void visit_fields(V& v, TerrainGenConfig& c) {
  v.field("map_size", c.map_size);
  v.field("cell_size", c.cell_size);
  v.field("spawn_clear_radius", c.spawn_clear_radius);
  v.field("edge_margin", c.edge_margin);
  v.field("block_count_lo", c.block_count_lo);
  v.field("block_count_hi", c.block_count_hi);
  v.field("block_gap", c.block_gap);
  v.field("stair_start_radius", c.stair_start_radius);
  v.field("stair_plateau", c.stair_plateau);
  v.field("placement_retries", c.placement_retries);
}

template <class V>
void visit_fields(V& v, CommandRanges& c) {
  v.field("vx", c.vx);
  v.field("vy", c.vy);
  v.field("yaw_rate", c.yaw_rate);
  v.field("height", c.height);
}

template <class V>
void visit_fields(V& v, EnvConfig& c) {
  v.field("episode_ticks", c.episode_ticks);
  v.field("ticks_per_step", c.ticks_per_step);
  v.field("dt", c.dt);
  v.field("vel_tau", c.vel_tau);
  v.field("yaw_tau", c.yaw_tau);
  v.field("z_tau", c.z_tau);
  v.field("cap_forward", c.cap_forward);
  v.field("cap_lateral", c.cap_lateral);
  v.field("cap_backward", c.cap_backward);
  v.field("foot_lateral", c.foot_lateral);
  v.field("hip_lateral", c.hip_lateral);
  v.field("hip_drop", c.hip_drop);
  v.field("apex_scale", c.apex_scale);
  v.field("arc_sample", c.arc_sample);
  v.field("rod_sample", c.rod_sample);
  v.field("stumble_vel_scale", c.stumble_vel_scale);
  v.field("drop_soft", c.drop_soft);
  v.field("tilt_limit", c.tilt_limit);
  v.field("inst_decay_tau", c.inst_decay_tau);
  v.field("inst_collision_base", c.inst_collision_base);
  v.field("inst_collision_vel", c.inst_collision_vel);
  v.field("inst_cap_base", c.inst_cap_base);
  v.field("inst_cap_excess", c.inst_cap_excess);
  v.field("inst_rod", c.inst_rod);
  v.field("inst_drop_base", c.inst_drop_base);
  v.field("inst_drop_excess", c.inst_drop_excess);
  v.field("act_dv", c.act_dv);
  v.field("act_dyaw", c.act_dyaw);
  v.field("act_land", c.act_land);
  v.field("height_min", c.height_min);
  v.field("body_radius", c.body_radius);
  v.field("body_clearance", c.body_clearance);
  v.field("rangefinder_offset", c.rangefinder_offset);
  v.field("w_vel", c.w_vel);
  v.field("k_vel", c.k_vel);
  v.field("w_h", c.w_h);
  v.field("k_h", c.k_h);
  v.field("w_yaw", c.w_yaw);
  v.field("k_yaw", c.k_yaw);
  v.field("w_eff", c.w_eff);
  v.field("k_eff", c.k_eff);
  v.field("collision_penalty", c.collision_penalty);
  v.field("spawn_radius", c.spawn_radius);
  v.field("cmd_change_lo", c.cmd_change_lo);
  v.field("cmd_change_hi", c.cmd_change_hi);
  v.object("cmd", c.cmd);
}

template <class V>
void visit_fields(V& v, CameraRig& c) {
  v.field("fov_deg", c.fov_deg);
  v.field("pitch_down_deg", c.pitch_down_deg);
  v.field("d_min", c.d_min);
  v.field("d_max", c.d_max);
  v.field("height_offset", c.height_offset);
}

template <class V>
void visit_fields(V& v, DrConfig& c) {
  v.field("enabled", c.enabled);
  v.field("mass_frac", c.mass_frac);
  v.field("com_bound", c.com_bound);
  v.field("torque_lo", c.torque_lo);
  v.field("torque_hi", c.torque_hi);
  v.field("delay_ms_lo", c.delay_ms_lo);
  v.field("delay_ms_hi", c.delay_ms_hi);
  v.field("encoder_noise", c.encoder_noise);
  v.field("hm_shift_xy", c.hm_shift_xy);
  v.field("hm_shift_z_ep", c.hm_shift_z_ep);
  v.field("hm_shift_z_step", c.hm_shift_z_step);
  v.field("hm_delay_ms_lo", c.hm_delay_ms_lo);
  v.field("hm_delay_ms_hi", c.hm_delay_ms_hi);
}

template <class V>
void visit_fields(V& v, PpoConfig& c) {
  v.field("iterations", c.iterations);
  v.field("workers", c.workers);
  v.field("horizon", c.horizon);
  v.field("gamma", c.gamma);
  v.field("lam", c.lam);
  v.field("clip", c.clip);
  v.field("epochs", c.epochs);
  v.field("minibatch_chunks", c.minibatch_chunks);
  v.field("bptt_window", c.bptt_window);
  v.field("lr", c.lr);
  v.field("vf_coef", c.vf_coef);
  v.field("ent_coef", c.ent_coef);
  v.field("mirror_coef", c.mirror_coef);
  v.field("mirror_every", c.mirror_every);
  v.field("max_grad_norm", c.max_grad_norm);
  v.field("checkpoint_every", c.checkpoint_every);
}

template <class V>
void visit_fields(V& v, BlindTrainConfig& c) {
  v.field("iterations", c.iterations);
  v.field("flat_prob", c.flat_prob);
  v.field("perturbations", c.perturbations);
  v.field("perturb_mag", c.perturb_mag);
  v.field("perturb_gap_lo", c.perturb_gap_lo);
  v.field("perturb_gap_hi", c.perturb_gap_hi);
}

template <class V>
void visit_fields(V& v, TeacherTrainConfig& c) {
  v.field("iterations", c.iterations);
  v.field("use_blind", c.use_blind);
}

template <class V>
void visit_fields(V& v, InjectionConfig& c) {
  v.field("k", c.k);
  v.field("vx", c.vx);
  v.field("vy", c.vy);
  v.field("yaw_rate", c.yaw_rate);
}

template <class V>
void visit_fields(V& v, DepthAugment& c) {
  v.field("noise_std", c.noise_std);
  v.field("dropout_rate", c.dropout_rate);
  v.field("max_shift_px", c.max_shift_px);
}

template <class V>
void visit_fields(V& v, DistillConfig& c) {
  v.field("rounds", c.rounds);
  v.field("episodes_per_round", c.episodes_per_round);
  v.field("epochs", c.epochs);
  v.field("variants_per_pass", c.variants_per_pass);
  v.field("lr", c.lr);
  v.field("w_embed", c.w_embed);
  v.field("bptt_window", c.bptt_window);
  v.field("max_grad_norm", c.max_grad_norm);
  v.field("use_injection", c.use_injection);
  v.object("inject", c.inject);
  v.object("augment", c.augment);
  v.field("replay_episodes", c.replay_episodes);
  v.field("heldout_per_tier", c.heldout_per_tier);
  v.field("heldout_ticks", c.heldout_ticks);
  v.field("mse_threshold", c.mse_threshold);
}

template <class V>
void visit_fields(V& v, EvalConfig& c) {
  v.field("episodes_per_tier", c.episodes_per_tier);
  v.field("max_workers", c.max_workers);
}

template <class V>
void visit_fields(V& v, RunConfig& c) {
  v.field("seed", c.seed);
  v.field("threads", c.threads);
  v.object("terrain", c.terrain);
  v.object("env", c.env);
  v.object("rig", c.rig);
  v.object("dr", c.dr);
  v.object("ppo", c.ppo);
  v.object("blind", c.blind);
  v.object("teacher", c.teacher);
  v.object("distill", c.distill);
  v.object("eval", c.eval);
}

class Writer {
 public:
  explicit Writer(json& j) : j_(&j) {}
  void field(const char* key, Real v) { (*j_)[key] = v; }
  void field(const char* key, int v) { (*j_)[key] = v; }
  void field(const char* key, bool v) { (*j_)[key] = v; }
  void field(const char* key, std::uint64_t v) { (*j_)[key] = v; }
  void field(const char* key, const Range& r) {
    (*j_)[key] = json::array({r.lo, r.hi});
  }
  template <class T>
  void object(const char* key, T& sub) {
    json child = json::object();
    Writer w(child);
    visit_fields(w, sub);
    (*j_)[key] = std::move(child);
  }

 private:
  json* j_;
};

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) fail("config: expected object at " + path_);
  }

  void field(const char* key, Real& v) {
    const json* e = find(key);
    if (!e) return;
    if (!e->is_number()) type_error(key, "number");
    v = e->get<Real>();
  }
  void field(const char* key, int& v) {
    const json* e = find(key);
    if (!e) return;
    if (!e->is_number_integer()) type_error(key, "integer");
    v = e->get<int>();
  }
  void field(const char* key, bool& v) {
    const json* e = find(key);
    if (!e) return;
    if (!e->is_boolean()) type_error(key, "boolean");
    v = e->get<bool>();
  }
  void field(const char* key, std::uint64_t& v) {
    const json* e = find(key);
    if (!e) return;
    if (!e->is_number_integer()) type_error(key, "integer");
    v = e->get<std::uint64_t>();
  }
  void field(const char* key, Range& r) {
    const json* e = find(key);
    if (!e) return;
    if (!e->is_array() || e->size() != 2 || !(*e)[0].is_number() ||
        !(*e)[1].is_number())
      type_error(key, "[lo, hi]");
    r.lo = (*e)[0].get<Real>();
    r.hi = (*e)[1].get<Real>();
  }
  template <class T>
  void object(const char* key, T& sub) {
    const json* e = find(key);
    if (!e) return;
    Reader r(*e, path_ + key + ".");
    visit_fields(r, sub);
    r.check_unknown();
  }

  // Keys beginning with '_' are comments; anything else unseen is an error.
  void check_unknown() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      const std::string& k = it.key();
      if (!k.empty() && k[0] == '_') continue;
      if (!seen_.count(k)) fail("config: unknown key \"" + path_ + k + "\"");
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  [[noreturn]] void type_error(const char* key, const char* want) const {
    fail("config: key \"" + path_ + key + "\" must be " + want);
  }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("config: parse error: ") + e.what());
  }
  RunConfig cfg;
  Reader r(j, "");
  visit_fields(r, cfg);
  r.check_unknown();
  validate(cfg);
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  json j = json::object();
  Writer w(j);
  visit_fields(w, const_cast<RunConfig&>(cfg));
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail("config: cannot write " + path);
  os << config_to_json(cfg);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = config_to_json(cfg);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::string config_hash_hex(const RunConfig& cfg) {
  return config_hash_hex(config_hash(cfg));
}

void write_config_template(const std::string& path) {
  RunConfig cfg;
  json j = json::parse(config_to_json(cfg));
  j["_doc"] =
      "Keys starting with '_' are ignored.  Unlisted keys are rejected; "
      "absent keys keep built-in defaults.";
  j["terrain"]["_doc"] = "Procedural map: size/cells in metres, block/stair "
                         "placement bounds, spawn clearing.";
  j["env"]["_doc"] = "Walker dynamics, reward weights, termination limits, "
                     "command ranges (cmd).";
  j["rig"]["_doc"] = "Four depth cameras: field of view, downward pitch, "
                     "clip range.";
  j["dr"]["_doc"] = "Domain randomization bounds; enabled=false fixes the "
                    "nominal model.";
  j["ppo"]["_doc"] = "PPO: clip/gamma/lambda, epochs, BPTT window, mirror "
                     "loss weight, entropy bonus.";
  j["blind"]["_doc"] = "Base-policy pretraining: flat/hills mix and "
                       "velocity-impulse perturbations.";
  j["teacher"]["_doc"] = "Privileged training; use_blind=false trains from "
                         "scratch (ablation).";
  j["distill"]["_doc"] = "Student distillation: round sizes, command "
                         "injection (inject.k, ranges), depth augmentation, "
                         "held-out stop threshold.";
  j["eval"]["_doc"] = "Evaluation episode count per terrain tier.";
  std::ofstream os(path);
  if (!os) fail("config: cannot write " + path);
  os << j.dump(2) << "\n";
}

void validate(const RunConfig& cfg) {
  OL_REQUIRE(cfg.terrain.map_size > 2 * cfg.terrain.spawn_clear_radius,
             "config: map smaller than the spawn clearing");
  OL_REQUIRE(cfg.terrain.cell_size > 0, "config: cell_size");
  OL_REQUIRE(cfg.env.episode_ticks > 0 && cfg.env.ticks_per_step > 0,
             "config: episode sizing");
  OL_REQUIRE(cfg.env.dt > 0, "config: dt");
  OL_REQUIRE(cfg.env.cmd_change_lo <= cfg.env.cmd_change_hi &&
                 cfg.env.cmd_change_hi < cfg.env.episode_ticks,
             "config: command-change window");
  OL_REQUIRE(cfg.rig.d_min > 0 && cfg.rig.d_max > cfg.rig.d_min,
             "config: camera clip range");
  OL_REQUIRE(cfg.ppo.gamma > 0 && cfg.ppo.gamma < 1, "config: gamma");
  OL_REQUIRE(cfg.ppo.lam >= 0 && cfg.ppo.lam <= 1, "config: lambda");
  OL_REQUIRE(cfg.ppo.clip > 0, "config: clip");
  OL_REQUIRE(cfg.ppo.epochs > 0 && cfg.ppo.minibatch_chunks > 0 &&
                 cfg.ppo.bptt_window > 0,
             "config: ppo batch shape");
  OL_REQUIRE(cfg.ppo.lr > 0 && cfg.distill.lr > 0, "config: learning rate");
  OL_REQUIRE(cfg.ppo.workers > 0 && cfg.ppo.horizon > 0,
             "config: collection shape");
  OL_REQUIRE(cfg.ppo.mirror_every > 0, "config: mirror_every");
  OL_REQUIRE(cfg.blind.flat_prob >= 0 && cfg.blind.flat_prob <= 1,
             "config: flat_prob");
  OL_REQUIRE(cfg.blind.perturb_gap_lo > 0 &&
                 cfg.blind.perturb_gap_lo <= cfg.blind.perturb_gap_hi,
             "config: perturbation gap");
  OL_REQUIRE(cfg.distill.inject.k >= 0, "config: inject.k");
  OL_REQUIRE(cfg.distill.rounds > 0 && cfg.distill.episodes_per_round > 0,
             "config: distill sizing");
  OL_REQUIRE(cfg.distill.variants_per_pass >= 1,
             "config: variants_per_pass");
  OL_REQUIRE(cfg.distill.heldout_per_tier > 0 &&
                 cfg.distill.heldout_ticks > 0,
             "config: held-out sizing");
  OL_REQUIRE(cfg.distill.augment.dropout_rate >= 0 &&
                 cfg.distill.augment.dropout_rate < 1,
             "config: dropout_rate");
  OL_REQUIRE(cfg.eval.episodes_per_tier > 0, "config: eval episodes");
}

}  // namespace omniloco
