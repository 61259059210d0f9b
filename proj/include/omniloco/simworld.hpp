#pragma once

#include <array>
#include <deque>
#include <utility>

#include "omniloco/common.hpp"
#include "omniloco/perception.hpp"
#include "omniloco/rng.hpp"
#include "omniloco/terrain.hpp"

namespace omniloco {

enum class Foot { Left = 0, Right = 1 };
inline Foot other_foot(Foot f) {
  return f == Foot::Left ? Foot::Right : Foot::Left;
}

// Locomotion command kinds and their sampling probabilities: step in place,
// step in place + turn, walk, walk + turn.
enum class CommandKind {
  StepInPlace = 0,
  StepInPlaceTurn = 1,
  Walk = 2,
  WalkTurn = 3,
};
inline constexpr std::array<Real, 4> kCommandKindProbs = {0.05, 0.05, 0.60,
                                                          0.30};
const char* command_kind_name(CommandKind k);

struct Command {
  Real vx = 0;        // m/s, body frame
  Real vy = 0;        // m/s
  Real yaw_rate = 0;  // rad/s
  Real height = 0.8;  // base height over local support, m
};

struct CommandRanges {
  Range vx{-0.6, 1.0};
  Range vy{-0.45, 0.45};
  Range yaw_rate{-22.5 * kPi / 180.0, 22.5 * kPi / 180.0};
  Range height{0.4, 0.95};
};

// Policy action: offsets on the commanded planar velocity and yaw rate, the
// swing apex, and landing-position offsets in the body frame.
struct ActionVector {
  static constexpr int kDim = 6;
  Real dvx = 0, dvy = 0, dyaw = 0;
  Real apex = 0;
  Real land_dx = 0, land_dy = 0;

  std::array<Real, kDim> to_array() const {
    return {dvx, dvy, dyaw, apex, land_dx, land_dy};
  }
  static ActionVector from_array(const std::array<Real, kDim>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  static ActionVector from_ptr(const Real* a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
};

// Physical/observation randomization for one episode.  Fields are the
// resolved per-episode draws, not ranges.
struct DomainRandomization {
  Real mass_scale = 1;     // scales the velocity-lag time constant
  Real com_x = 0, com_y = 0;  // landing bias, body frame, m
  Real torque_eff = 1;     // scales action authority and swing apex
  int action_delay_ticks = 0;
  Real encoder_noise = 0;  // uniform bound applied to proprio entries
  HeightmapPerturb hm;
};

// Sampling bounds (Table-style): one draw per field at episode start.
struct DrConfig {
  bool enabled = true;
  Real mass_frac = 0.25;
  Real com_bound = 0.01;
  Real torque_lo = 0.9, torque_hi = 1.0;
  Real delay_ms_lo = 0.5, delay_ms_hi = 3.0;
  Real encoder_noise = 0.05;
  Real hm_shift_xy = 0.05;
  Real hm_shift_z_ep = 0.1;
  Real hm_shift_z_step = 0.02;
  Real hm_delay_ms_lo = 20, hm_delay_ms_hi = 100;
};

DomainRandomization sample_domain_randomization(const DrConfig& cfg, Rng& rng);

struct EnvConfig {
  int episode_ticks = 450;
  int ticks_per_step = 15;  // footstep period in control ticks
  Real dt = 0.02;

  // first-order tracking lags (s)
  Real vel_tau = 0.2, yaw_tau = 0.2, z_tau = 0.08;

  // step capability caps by direction of travel (max support rise, m)
  Real cap_forward = 0.5, cap_lateral = 0.35, cap_backward = 0.2;

  Real foot_lateral = 0.12;  // nominal lateral foot offset, m
  Real hip_lateral = 0.10;
  Real hip_drop = 0.10;      // hip z below base z
  Real apex_scale = 0.4;     // metres of swing lift at apex action 1
  Real arc_sample = 0.01;    // collision sweep spacing, m
  Real rod_sample = 0.02;    // conrod check spacing, m
  Real stumble_vel_scale = 0.5;
  Real drop_soft = 0.5;      // tolerated landing drop, m

  // instability accumulator (tilt proxy, degrees)
  Real tilt_limit = 15.0;
  Real inst_decay_tau = 0.7;
  Real inst_collision_base = 6.0, inst_collision_vel = 6.0;
  Real inst_cap_base = 8.0, inst_cap_excess = 40.0;
  Real inst_rod = 4.0;
  Real inst_drop_base = 8.0, inst_drop_excess = 20.0;

  // action clamps
  Real act_dv = 1.0, act_dyaw = 1.0, act_land = 0.3;

  // termination
  Real height_min = 0.40;
  Real body_radius = 0.2;
  Real body_clearance = 0.25;  // trunk underside below base z

  // probe offset for the critic's simulated rangefinders, m
  Real rangefinder_offset = 0.15;

  // reward
  Real w_vel = 0.4, k_vel = 4.0;
  Real w_h = 0.3, k_h = 20.0;
  Real w_yaw = 0.2, k_yaw = 4.0;
  Real w_eff = 0.1, k_eff = 0.1;
  Real collision_penalty = 5.0;

  // episodes
  Real spawn_radius = 1.5;
  int cmd_change_lo = 200, cmd_change_hi = 250;
  CommandRanges cmd;
};

struct RobotState {
  Real x = 0, y = 0, z = 0;
  Real yaw = 0;
  Real vx = 0, vy = 0;  // body frame
  Real yaw_rate = 0;
  Real phase = 0;  // footstep phase in [0,1)
  Foot stance = Foot::Left;
  std::array<Vec3, 2> foot{};  // world positions, indexed by Foot
  Vec3 swing_lift{};           // where the swing foot lifted off
  Real support_z = 0;          // height of the current support surface
  Real instability = 0;        // degrees
};

enum class TerminationReason {
  None = 0,
  Tilt,
  OverSpeed,
  HeightDrop,
  BodyCollision,
};
const char* termination_name(TerminationReason r);

struct StepEvents {
  int foot_collisions = 0;
  int rod_contacts = 0;
  int cap_violations = 0;
  bool touchdown = false;
  Real rise = 0;  // support height change at touchdown
  ActionVector executed;  // clamped action the dynamics actually used
  bool fault = false;     // non-finite state detected (should never fire)
};

CommandKind sample_command_kind(Rng& rng);
// Draws all four values regardless of kind (fixed rng consumption), then
// zeroes the ones the kind holds at zero.
Command sample_command_values(CommandKind kind, const CommandRanges& r,
                              Rng& rng);
std::pair<CommandKind, Command> sample_command(const CommandRanges& r,
                                               Rng& rng);
int sample_command_change_tick(const EnvConfig& cfg, Rng& rng);

ActionVector clamp_action(const ActionVector& a, const EnvConfig& cfg);

RobotState reset_state(const HeightField& field, const Command& cmd,
                       const EnvConfig& cfg, Rng& rng);

StepEvents step_env(RobotState& s, const ActionVector& action,
                    const Command& cmd, const HeightField& field,
                    const DomainRandomization& dr, const EnvConfig& cfg);

// Tracking reward plus collision penalties; `effort` is the executed action.
Real reward(const RobotState& s, const Command& cmd,
            const ActionVector& effort, const StepEvents& ev,
            const EnvConfig& cfg);

// Checked in order: tilt, overspeed, height drop, body collision.
TerminationReason check_termination(const RobotState& s,
                                    const HeightField& field,
                                    const Command& cmd, const EnvConfig& cfg);

// Owns episode state: command schedule, action-delay queue, termination.
// All episode draws happen inside reset() in a fixed order, so the rng
// consumption is identical no matter which policy drives the env.
class Env {
 public:
  Env(const HeightField* field, const EnvConfig* cfg)
      : field_(field), cfg_(cfg) {}

  void reset(const DomainRandomization& dr, Rng& rng);
  StepEvents step(const ActionVector& a);

  // External push used when training the base policy for robustness.
  void apply_velocity_impulse(Real dvx, Real dvy) {
    state_.vx += dvx;
    state_.vy += dvy;
  }

  const RobotState& state() const { return state_; }
  const Command& command() const {
    return tick_ >= change_tick_ ? cmd1_ : cmd0_;
  }
  CommandKind command_kind() const {
    return tick_ >= change_tick_ ? kind1_ : kind0_;
  }
  const DomainRandomization& dr() const { return dr_; }
  int tick() const { return tick_; }
  Real last_reward() const { return reward_; }
  const ActionVector& last_executed() const { return executed_; }
  TerminationReason termination() const { return term_; }
  bool done() const {
    return term_ != TerminationReason::None || tick_ >= cfg_->episode_ticks;
  }
  // Reached the tick cap alive (value bootstrapping wants the distinction).
  bool truncated() const {
    return term_ == TerminationReason::None && tick_ >= cfg_->episode_ticks;
  }
  const HeightField& field() const { return *field_; }
  const EnvConfig& config() const { return *cfg_; }

 private:
  const HeightField* field_;
  const EnvConfig* cfg_;
  RobotState state_;
  DomainRandomization dr_;
  CommandKind kind0_ = CommandKind::Walk, kind1_ = CommandKind::Walk;
  Command cmd0_, cmd1_;
  int change_tick_ = 0;
  int tick_ = 0;
  Real reward_ = 0;
  ActionVector executed_;
  TerminationReason term_ = TerminationReason::None;
  std::deque<ActionVector> delay_queue_;
};

}  // namespace omniloco
