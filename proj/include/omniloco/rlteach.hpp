#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "omniloco/config.hpp"
#include "omniloco/netcore.hpp"
#include "omniloco/policy.hpp"

namespace omniloco {

struct GaeOut {
  std::vector<Real> adv, ret;
};

// Generalized advantage estimation over one episode; bootstrap_value is the
// critic's estimate past the last step (0 for terminal endings).
GaeOut compute_gae(std::span<const Real> rewards, std::span<const Real> values,
                   Real bootstrap_value, Real gamma, Real lam);

// Per-sample clipped surrogate (negated, i.e. a loss) and its derivative
// with respect to the new log-prob.  Exposed for finite-difference tests of
// the clip behaviour.
Real ppo_surrogate(Real logp_new, Real logp_old, Real adv, Real clip);
Real ppo_surrogate_dlogp(Real logp_new, Real logp_old, Real adv, Real clip);

// Whole-batch advantage normalization (mean 0, std 1), applied once before
// the epoch loop.
void normalize_advantages(std::vector<GaeOut>& gae);

enum class ActorArch { Blind, Teacher };

// One episode (or budget-cut piece of one) of on-policy experience.
struct Rollout {
  int T = 0;
  bool ended = false;      // reached done() rather than the worker budget
  bool truncated = false;  // alive at the final stored step
  TerminationReason term = TerminationReason::None;
  Real ep_return = 0;

  Tensor pc;      // [T,17] as the actor saw them (noise included)
  Tensor hm;      // [T,2400] teacher only
  Tensor extras;  // [T,232] privileged critic inputs
  Tensor act;     // [T,6]
  Tensor base;    // [T,6] frozen-base actions (teacher only)
  Tensor base_m;  // [T,6] frozen base fed mirrored observations
  std::vector<Real> logp, val, rew;
  Real bootstrap = 0;

  // Hidden states at every BPTT-window start; index = window number.
  std::vector<LstmPair> actor_h, critic_h;
};

struct IterStats {
  Real samples = 0, episodes = 0;
  Real ret_mean = 0, ret_std = 0, ep_len = 0, success = 0;
  Real loss_pi = 0, loss_v = 0, entropy = 0, loss_mirror = 0;
  Real approx_kl = 0, clip_frac = 0, grad_norm = 0;
};

// What distinguishes blind pretraining, teacher training and the ablation
// arms; everything else comes from RunConfig.
struct TrainArm {
  ActorArch arch = ActorArch::Teacher;
  std::array<Real, 5> terrain_probs = kTerrainKindProbs;
  bool perturbations = false;  // velocity impulses (blind pretraining)
  bool dr = true;
};

class PpoTrainer {
 public:
  PpoTrainer(const RunConfig& cfg, const TrainArm& arm,
             netcore::ParameterStore actor, netcore::ParameterStore critic,
             std::uint64_t seed);

  IterStats iterate();
  // cfg.ppo.iterations rounds, one log row each; checkpoints periodically
  // when a directory is given and cfg.ppo.checkpoint_every > 0.
  void run(std::ostream& log, const std::string& checkpoint_dir = "");

  int iteration() const { return iter_; }
  std::uint64_t samples() const { return samples_; }
  const netcore::ParameterStore& actor_params() const { return actor_; }
  const netcore::ParameterStore& critic_params() const { return critic_; }
  const std::vector<IterStats>& history() const { return history_; }
  const TrainArm& arm() const { return arm_; }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  static std::vector<std::string> log_columns();
  static std::vector<Real> log_row(int iter, std::uint64_t samples,
                                   const IterStats& st);

  // Exposed for tests: one collection pass at the current parameters.
  std::vector<Rollout> collect();

 private:
  Rollout collect_episode(Rng& rng, int max_steps);
  void update(std::vector<Rollout>& batch, IterStats& st);

  RunConfig cfg_;
  TrainArm arm_;
  netcore::ParameterStore actor_, critic_;
  netcore::Adam adam_actor_, adam_critic_;
  std::vector<std::size_t> trainable_;  // actor entries the optimizer moves
  Rng learner_rng_;
  std::vector<Rng> worker_rngs_;
  int iter_ = 0;
  std::uint64_t samples_ = 0;
  std::vector<IterStats> history_;
};

// Standard arms.
PpoTrainer make_blind_trainer(const RunConfig& cfg, std::uint64_t seed);
// Blind architecture on the full terrain mix: the "blind-with-terrain"
// comparison baseline.
PpoTrainer make_blind_terrain_trainer(const RunConfig& cfg,
                                      std::uint64_t seed);
// blind == nullptr trains the no-base ablation.
PpoTrainer make_teacher_trainer(const RunConfig& cfg,
                                const netcore::ParameterStore* blind,
                                std::uint64_t seed);

// Mean achieved vx on flat ground under a fixed command; the blind policy's
// convergence probe.
Real probe_tracking_vx(const netcore::ParameterStore& blind,
                       const RunConfig& cfg, Real vx_cmd, int episodes,
                       std::uint64_t seed);

// First sample count at which the running-mean return reaches the
// threshold; -1 when never.  Used by the samples-to-threshold ablations.
long long samples_to_threshold(std::span<const Real> samples,
                               std::span<const Real> returns, Real threshold,
                               int smooth_window = 5);

}  // namespace omniloco
