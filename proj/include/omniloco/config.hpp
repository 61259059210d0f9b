#pragma once

#include <cstdint>
#include <string>

#include "omniloco/perception.hpp"
#include "omniloco/simworld.hpp"
#include "omniloco/terrain.hpp"

namespace omniloco {

struct PpoConfig {
  int iterations = 150;
  int workers = 8;
  int horizon = 450;  // steps collected per worker per iteration
  Real gamma = 0.99;
  Real lam = 0.95;
  Real clip = 0.2;
  int epochs = 4;
  int minibatch_chunks = 32;  // BPTT windows per minibatch
  int bptt_window = 32;
  Real lr = 3e-4;
  Real vf_coef = 0.5;
  Real ent_coef = 0.003;
  Real mirror_coef = 0.5;     // w_m
  int mirror_every = 2;       // apply the mirror term every n-th minibatch
  Real max_grad_norm = 1.0;
  int checkpoint_every = 0;   // iterations; 0 disables
};

struct BlindTrainConfig {
  int iterations = 120;
  Real flat_prob = 0.3;  // terrain mix restricted to flat/hills
  bool perturbations = true;
  Real perturb_mag = 0.5;        // max impulse, m/s
  int perturb_gap_lo = 100;      // ticks between impulses
  int perturb_gap_hi = 200;
};

struct TeacherTrainConfig {
  int iterations = 150;
  bool use_blind = true;  // frozen base; false = from-scratch ablation
};

struct InjectionConfig {
  int k = 10;  // injected command draws per stored episode
  Range vx{-0.6, 1.0};
  Range vy{-0.6, 0.6};
  Range yaw_rate{-0.4, 0.4};
};

struct DistillConfig {
  int rounds = 12;
  int episodes_per_round = 6;
  int epochs = 2;            // passes over each round's buffer
  int variants_per_pass = 4; // injected sequences trained per episode pass
  Real lr = 1e-3;
  Real w_embed = 1.0;
  int bptt_window = 32;
  Real max_grad_norm = 1.0;
  bool use_injection = true;
  InjectionConfig inject;
  DepthAugment augment;
  int replay_episodes = 6;    // older buffer episodes revisited per pass
  int heldout_per_tier = 50;  // teacher-driven held-out episodes per tier
  int heldout_ticks = 450;
  Real mse_threshold = 0.05;  // held-out action MSE stop condition
};

struct EvalConfig {
  int episodes_per_tier = 100;
  int max_workers = 8;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = library default
  TerrainGenConfig terrain;
  EnvConfig env;
  CameraRig rig;
  DrConfig dr;
  PpoConfig ppo;
  BlindTrainConfig blind;
  TeacherTrainConfig teacher;
  DistillConfig distill;
  EvalConfig eval;
};

// Strict JSON round-trip: unknown keys are errors, except keys starting
// with '_' (reserved for comments).  Absent keys keep their defaults.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);  // canonical, sorted keys

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

// FNV-1a over the canonical serialization; logged into every artifact.
std::uint64_t config_hash(const RunConfig& cfg);
std::string config_hash_hex(std::uint64_t hash);
std::string config_hash_hex(const RunConfig& cfg);

// Default config with per-section comment keys describing the fields.
void write_config_template(const std::string& path);

// Bounds and sanity checks; throws on violation.
void validate(const RunConfig& cfg);

}  // namespace omniloco
