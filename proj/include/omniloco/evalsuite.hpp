#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "omniloco/config.hpp"
#include "omniloco/policy.hpp"
#include "omniloco/simworld.hpp"
#include "omniloco/terrain.hpp"

namespace omniloco {

// ---------------------------------------------------------------------------
// Held-out evaluation.  Episodes are seeded from the eval root seed only, so
// every policy sees the same terrains, spawns and command schedules and the
// comparisons are paired.  Domain randomization is off and actions are the
// policy mean.
// ---------------------------------------------------------------------------

enum class PolicyArch { Blind = 0, Teacher = 1, Student = 2 };
const char* policy_arch_name(PolicyArch a);
// Sniffs the architecture from the store's tag.
PolicyArch policy_arch_of(const netcore::ParameterStore& p);

// Report tiers: one mixed easy tier plus the three hard single-kind tiers.
enum class ReportTier { Easy = 0, RidgeHard = 1, StairHard = 2, BlockHard = 3 };
inline constexpr int kReportTiers = 4;
const char* report_tier_name(ReportTier t);

// Terrain for the i-th episode of a tier.  The easy tier cycles through
// ridges, stairs and blocks at their easy parameter ranges; the hard tiers
// fix the kind at the hard ranges.
TerrainSpec tier_terrain_spec(ReportTier tier, int episode,
                              const TerrainGenConfig& cfg, Rng& rng);

// Per-tick effort: squared action offsets from the nominal gait, apex
// down-weighted since lifting the swing foot is partly unavoidable.
Real action_effort(const ActionVector& executed);

// Drives one policy through episodes with mean actions, owning the hidden
// state and whatever perception the architecture needs.
class PolicyDriver {
 public:
  explicit PolicyDriver(const netcore::ParameterStore* params,
                        const CameraRig* rig = nullptr,
                        RenderCounter* counter = nullptr);
  void reset();
  ActionVector act(const HeightField& field, const RobotState& s,
                   const Real* obs);
  PolicyArch arch() const { return arch_; }

 private:
  PolicyArch arch_;
  const CameraRig* rig_;
  RenderCounter* counter_;
  std::unique_ptr<BlindNet> blind_;
  std::unique_ptr<TeacherNet> teacher_;
  std::unique_ptr<StudentNet> student_;
  LstmPair blind_s_, ds_s_;
};

struct EpisodeResult {
  int episode = 0;
  TerrainKind kind = TerrainKind::Flat;
  int ticks = 0;
  TerminationReason term = TerminationReason::None;
  bool success = false;  // survived to the tick cap
  Real ep_return = 0;
  Real energy = 0;  // cumulative action effort
  int collisions = 0;
  bool had_collision = false;
  // terminated episode with a collision event in its final 100 ticks
  bool term_collision = false;
  Real dist = 0;  // planar displacement, m
};

// 95% interval on a rate, binomial normal approximation, clamped to [0,1].
std::array<Real, 2> rate_ci(Real p, std::size_t n);

struct TierReport {
  ReportTier tier = ReportTier::Easy;
  std::vector<EpisodeResult> episodes;

  Real success_rate() const;
  Real collision_rate() const;       // episodes with any collision event
  Real term_collision_rate() const;  // collision-linked terminations
  std::array<Real, 2> success_ci() const;
  Real mean_energy_rate() const;  // mean of energy / ticks
  Real mean_return() const;
  Real mean_ticks() const;
};

struct EvalReport {
  std::string policy;
  PolicyArch arch = PolicyArch::Blind;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int episodes_per_tier = 0;
  std::array<TierReport, kReportTiers> tiers;

  const TierReport& tier(ReportTier t) const {
    return tiers[static_cast<int>(t)];
  }
};

// episodes_per_tier == 0 falls back to cfg.eval.episodes_per_tier.
EvalReport run_eval(const netcore::ParameterStore& params,
                    const RunConfig& cfg, std::uint64_t eval_seed,
                    const std::string& policy_name,
                    int episodes_per_tier = 0);

// Text serialization: one row per episode, aggregates recomputable.
void write_report(const EvalReport& rep, const std::string& path);
EvalReport read_report(const std::string& path);

}  // namespace omniloco
