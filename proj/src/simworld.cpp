#include "omniloco/simworld.hpp"

#include <algorithm>
#include <cmath>

namespace omniloco {

const char* command_kind_name(CommandKind k) {
  switch (k) {
    case CommandKind::StepInPlace: return "step_in_place";
    case CommandKind::StepInPlaceTurn: return "step_in_place_turn";
    case CommandKind::Walk: return "walk";
    case CommandKind::WalkTurn: return "walk_turn";
  }
  fail("command_kind_name: bad kind");
}

const char* termination_name(TerminationReason r) {
  switch (r) {
    case TerminationReason::None: return "none";
    case TerminationReason::Tilt: return "tilt";
    case TerminationReason::OverSpeed: return "overspeed";
    case TerminationReason::HeightDrop: return "height_drop";
    case TerminationReason::BodyCollision: return "body_collision";
  }
  fail("termination_name: bad reason");
}

DomainRandomization sample_domain_randomization(const DrConfig& cfg,
                                                Rng& rng) {
  DomainRandomization dr;
  if (!cfg.enabled) return dr;
  dr.mass_scale = 1.0 + rng.uniform(-cfg.mass_frac, cfg.mass_frac);
  dr.com_x = rng.uniform(-cfg.com_bound, cfg.com_bound);
  dr.com_y = rng.uniform(-cfg.com_bound, cfg.com_bound);
  dr.torque_eff = rng.uniform(cfg.torque_lo, cfg.torque_hi);
  // Sub-tick actuation delays rounded to whole control ticks: anything past
  // half the sampled range becomes one tick.
  const Real delay_ms = rng.uniform(cfg.delay_ms_lo, cfg.delay_ms_hi);
  dr.action_delay_ticks =
      delay_ms >= 0.5 * (cfg.delay_ms_lo + cfg.delay_ms_hi) ? 1 : 0;
  dr.encoder_noise = cfg.encoder_noise;
  dr.hm.ep_shift_x = rng.uniform(-cfg.hm_shift_xy, cfg.hm_shift_xy);
  dr.hm.ep_shift_y = rng.uniform(-cfg.hm_shift_xy, cfg.hm_shift_xy);
  dr.hm.ep_shift_z = rng.uniform(-cfg.hm_shift_z_ep, cfg.hm_shift_z_ep);
  const Real hm_delay_ms = rng.uniform(cfg.hm_delay_ms_lo, cfg.hm_delay_ms_hi);
  dr.hm.delay_ticks =
      static_cast<int>(std::clamp(std::llround(hm_delay_ms / 20.0), 1LL, 5LL));
  dr.hm.step_shift_xy = cfg.hm_shift_xy;
  dr.hm.step_shift_z = cfg.hm_shift_z_step;
  return dr;
}

CommandKind sample_command_kind(Rng& rng) {
  return static_cast<CommandKind>(
      rng.categorical(std::span<const Real>(kCommandKindProbs)));
}

Command sample_command_values(CommandKind kind, const CommandRanges& r,
                              Rng& rng) {
  Command c;
  c.vx = rng.uniform(r.vx.lo, r.vx.hi);
  c.vy = rng.uniform(r.vy.lo, r.vy.hi);
  c.yaw_rate = rng.uniform(r.yaw_rate.lo, r.yaw_rate.hi);
  c.height = rng.uniform(r.height.lo, r.height.hi);
  const bool in_place = kind == CommandKind::StepInPlace ||
                        kind == CommandKind::StepInPlaceTurn;
  const bool turning = kind == CommandKind::StepInPlaceTurn ||
                       kind == CommandKind::WalkTurn;
  if (in_place) c.vx = c.vy = 0;
  if (!turning) c.yaw_rate = 0;
  return c;
}

std::pair<CommandKind, Command> sample_command(const CommandRanges& r,
                                               Rng& rng) {
  const CommandKind kind = sample_command_kind(rng);
  return {kind, sample_command_values(kind, r, rng)};
}

int sample_command_change_tick(const EnvConfig& cfg, Rng& rng) {
  return rng.uniform_int(cfg.cmd_change_lo, cfg.cmd_change_hi);
}

ActionVector clamp_action(const ActionVector& a, const EnvConfig& cfg) {
  ActionVector c;
  c.dvx = clamp(a.dvx, -cfg.act_dv, cfg.act_dv);
  c.dvy = clamp(a.dvy, -cfg.act_dv, cfg.act_dv);
  c.dyaw = clamp(a.dyaw, -cfg.act_dyaw, cfg.act_dyaw);
  c.apex = clamp(a.apex, 0, 1);
  c.land_dx = clamp(a.land_dx, -cfg.act_land, cfg.act_land);
  c.land_dy = clamp(a.land_dy, -cfg.act_land, cfg.act_land);
  return c;
}

RobotState reset_state(const HeightField& field, const Command& cmd,
                       const EnvConfig& cfg, Rng& rng) {
  RobotState s;
  const Real r = cfg.spawn_radius * std::sqrt(rng.uniform());
  const Real th = rng.uniform(0, kTwoPi);
  s.x = r * std::cos(th);
  s.y = r * std::sin(th);
  s.yaw = rng.uniform(-kPi, kPi);
  for (int f = 0; f < 2; ++f) {
    const Real side = f == 0 ? 1.0 : -1.0;  // left positive y
    const Vec2 off = rotate({0, side * cfg.foot_lateral}, s.yaw);
    s.foot[f].x = s.x + off.x;
    s.foot[f].y = s.y + off.y;
    s.foot[f].z = field.height_at(s.foot[f].x, s.foot[f].y);
  }
  s.stance = Foot::Left;
  s.swing_lift = s.foot[static_cast<int>(Foot::Right)];
  s.support_z = s.foot[static_cast<int>(Foot::Left)].z;
  s.z = s.support_z + cmd.height;
  return s;
}

namespace {

Real capability_cap(Real vx, Real vy, const EnvConfig& cfg) {
  const Real ay = std::abs(vy);
  if (vx >= ay) return cfg.cap_forward;
  if (-vx >= ay) return cfg.cap_backward;
  return cfg.cap_lateral;
}

Real triangle(Real s) { return 1.0 - std::abs(2.0 * s - 1.0); }

// Swept collision test along the straight segment a->b, sampled every
// `spacing` metres of horizontal travel.  On impact returns the last clear
// point through `stop`.
bool sweep_hits(const HeightField& field, const Vec3& a, const Vec3& b,
                Real spacing, Vec3* stop) {
  const Real dx = b.x - a.x, dy = b.y - a.y;
  const Real horiz = std::sqrt(dx * dx + dy * dy);
  const int n = std::max(1, static_cast<int>(std::ceil(horiz / spacing)));
  Vec3 prev = a;
  for (int i = 1; i <= n; ++i) {
    const Real u = static_cast<Real>(i) / n;
    Vec3 p{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y),
           a.z + u * (b.z - a.z)};
    if (p.z < field.height_at(p.x, p.y) - 1e-9) {
      if (stop) *stop = prev;
      return true;
    }
    prev = p;
  }
  return false;
}

bool rod_contact(const HeightField& field, const Vec3& hip, const Vec3& foot,
                 Real spacing) {
  const Real dx = foot.x - hip.x, dy = foot.y - hip.y, dz = foot.z - hip.z;
  const Real len = std::sqrt(dx * dx + dy * dy + dz * dz);
  const int n = std::max(2, static_cast<int>(std::ceil(len / spacing)));
  // Skip the foot end itself (i = n): resting on terrain is not a contact.
  for (int i = 0; i < n; ++i) {
    const Real u = static_cast<Real>(i) / n;
    const Real px = hip.x + u * dx, py = hip.y + u * dy, pz = hip.z + u * dz;
    if (pz < field.height_at(px, py) - 1e-6) return true;
  }
  return false;
}

}  // namespace

StepEvents step_env(RobotState& s, const ActionVector& action,
                    const Command& cmd, const HeightField& field,
                    const DomainRandomization& dr, const EnvConfig& cfg) {
  StepEvents ev;
  const ActionVector a = clamp_action(action, cfg);
  ev.executed = a;
  const Real eff = dr.torque_eff;
  const Real dt = cfg.dt;

  Real inst_add = 0;

  // velocity tracking toward command + action offsets
  const Real alpha_v = 1.0 - std::exp(-dt / (cfg.vel_tau * dr.mass_scale));
  const Real alpha_w = 1.0 - std::exp(-dt / (cfg.yaw_tau * dr.mass_scale));
  s.vx += alpha_v * (cmd.vx + eff * a.dvx - s.vx);
  s.vy += alpha_v * (cmd.vy + eff * a.dvy - s.vy);
  s.yaw_rate += alpha_w * (cmd.yaw_rate + eff * a.dyaw - s.yaw_rate);

  // pose integration
  s.yaw = wrap_angle(s.yaw + s.yaw_rate * dt);
  const Vec2 v_world = rotate({s.vx, s.vy}, s.yaw);
  s.x += v_world.x * dt;
  s.y += v_world.y * dt;

  // base height: track command height over the support, lifting over
  // whatever sits under the base right now
  const Real under = field.height_at(s.x, s.y);
  const Real z_target = std::max(s.support_z, under) + cmd.height;
  s.z += (1.0 - std::exp(-dt / cfg.z_tau)) * (z_target - s.z);

  // footstep phase
  const Real phase_new = s.phase + 1.0 / cfg.ticks_per_step;
  const bool wrap = phase_new >= 1.0;
  const Real arc_s = std::min(phase_new, 1.0);

  // swing-foot target, re-evaluated every tick
  const Foot swing = other_foot(s.stance);
  const Real side = swing == Foot::Left ? 1.0 : -1.0;
  const Real t_half = 0.5 * cfg.ticks_per_step * dt;
  const Vec2 tgt_body{s.vx * t_half + a.land_dx + dr.com_x,
                      side * cfg.foot_lateral + s.vy * t_half + a.land_dy +
                          dr.com_y};
  const Vec2 tgt_off = rotate(tgt_body, s.yaw);
  const Real tx = s.x + tgt_off.x, ty = s.y + tgt_off.y;
  const Real tz = field.height_at(tx, ty);

  const Vec3& lift = s.swing_lift;
  const Real apex_m = a.apex * eff * cfg.apex_scale;
  Vec3 pos_new{lift.x + arc_s * (tx - lift.x), lift.y + arc_s * (ty - lift.y),
               lift.z + arc_s * (tz - lift.z) + apex_m * triangle(arc_s)};

  Vec3& foot_sw = s.foot[static_cast<int>(swing)];
  bool stumbled = false;
  Vec3 stop;
  if (sweep_hits(field, foot_sw, pos_new, cfg.arc_sample, &stop)) {
    ev.foot_collisions = 1;
    stumbled = true;
    const Real speed = std::sqrt(s.vx * s.vx + s.vy * s.vy);
    inst_add += cfg.inst_collision_base + cfg.inst_collision_vel * speed;
    s.vx *= cfg.stumble_vel_scale;
    s.vy *= cfg.stumble_vel_scale;
    foot_sw = stop;
  } else {
    foot_sw = pos_new;
  }

  // conrod clearance, both legs: hip joint down to the foot
  for (int f = 0; f < 2; ++f) {
    const Real hs = f == static_cast<int>(Foot::Left) ? 1.0 : -1.0;
    const Vec2 hip_off = rotate({0, hs * cfg.hip_lateral}, s.yaw);
    const Vec3 hip{s.x + hip_off.x, s.y + hip_off.y, s.z - cfg.hip_drop};
    if (rod_contact(field, hip, s.foot[f], cfg.rod_sample)) {
      ev.rod_contacts += 1;
      inst_add += cfg.inst_rod;
    }
  }

  if (wrap) {
    ev.touchdown = true;
    Vec3 land = foot_sw;
    if (!stumbled) {
      const Real rise = tz - s.support_z;
      const Real cap = capability_cap(s.vx, s.vy, cfg);
      if (rise > cap) {
        // Leg can't generate that step-up: put the foot down short of the
        // target, at the last spot along the swing line it can reach.
        ev.cap_violations = 1;
        inst_add += cfg.inst_cap_base + cfg.inst_cap_excess * (rise - cap);
        land = lift;
        for (int i = 50; i >= 0; --i) {
          const Real u = static_cast<Real>(i) / 50.0;
          const Real px = lift.x + u * (tx - lift.x);
          const Real py = lift.y + u * (ty - lift.y);
          const Real h = field.height_at(px, py);
          if (h - s.support_z <= cap) {
            land = {px, py, h};
            break;
          }
        }
      } else {
        land = {tx, ty, tz};
      }
    }
    land.z = field.height_at(land.x, land.y);
    const Real drop = s.support_z - land.z;
    if (drop > cfg.drop_soft)
      inst_add += cfg.inst_drop_base + cfg.inst_drop_excess * (drop - cfg.drop_soft);
    ev.rise = land.z - s.support_z;
    foot_sw = land;
    s.support_z = land.z;
    s.stance = swing;
    s.swing_lift = s.foot[static_cast<int>(other_foot(swing))];
    s.phase = phase_new - 1.0;
  } else {
    s.phase = phase_new;
  }

  s.instability =
      s.instability * std::exp(-dt / cfg.inst_decay_tau) + inst_add;

  const bool finite =
      std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.z) &&
      std::isfinite(s.vx) && std::isfinite(s.vy) && std::isfinite(s.yaw) &&
      std::isfinite(s.instability);
  ev.fault = !finite;
  return ev;
}

Real reward(const RobotState& s, const Command& cmd,
            const ActionVector& effort, const StepEvents& ev,
            const EnvConfig& cfg) {
  const Real dvx = s.vx - cmd.vx, dvy = s.vy - cmd.vy;
  const Real dh = (s.z - s.support_z) - cmd.height;
  const Real dw = s.yaw_rate - cmd.yaw_rate;
  const auto e = effort.to_array();
  Real eff2 = 0;
  for (Real v : e) eff2 += v * v;
  Real r = cfg.w_vel * std::exp(-cfg.k_vel * (dvx * dvx + dvy * dvy)) +
           cfg.w_h * std::exp(-cfg.k_h * dh * dh) +
           cfg.w_yaw * std::exp(-cfg.k_yaw * dw * dw) +
           cfg.w_eff * std::exp(-cfg.k_eff * eff2);
  r -= cfg.collision_penalty * ev.foot_collisions;
  r -= cfg.collision_penalty * ev.rod_contacts;
  return r;
}

TerminationReason check_termination(const RobotState& s,
                                    const HeightField& field,
                                    const Command& cmd, const EnvConfig& cfg) {
  if (s.instability > cfg.tilt_limit) return TerminationReason::Tilt;
  const Real speed = std::sqrt(s.vx * s.vx + s.vy * s.vy);
  const Real cmd_speed = std::sqrt(cmd.vx * cmd.vx + cmd.vy * cmd.vy);
  if (speed > 1.0 + cmd_speed) return TerminationReason::OverSpeed;
  if (s.z - field.height_at(s.x, s.y) < cfg.height_min)
    return TerminationReason::HeightDrop;
  if (field.max_height_in_disc(s.x, s.y, cfg.body_radius) >
      s.z - cfg.body_clearance)
    return TerminationReason::BodyCollision;
  return TerminationReason::None;
}

void Env::reset(const DomainRandomization& dr, Rng& rng) {
  dr_ = dr;
  // Fixed draw order so the stream position after reset never depends on the
  // policy: command now, change tick, command after the change, spawn pose.
  std::tie(kind0_, cmd0_) = sample_command(cfg_->cmd, rng);
  change_tick_ = sample_command_change_tick(*cfg_, rng);
  std::tie(kind1_, cmd1_) = sample_command(cfg_->cmd, rng);
  state_ = reset_state(*field_, cmd0_, *cfg_, rng);
  tick_ = 0;
  reward_ = 0;
  term_ = TerminationReason::None;
  executed_ = ActionVector{};
  delay_queue_.assign(static_cast<std::size_t>(dr_.action_delay_ticks),
                      ActionVector{});
}

StepEvents Env::step(const ActionVector& a) {
  OL_REQUIRE(!done(), "Env::step called on a finished episode");
  ActionVector exec = a;
  if (dr_.action_delay_ticks > 0) {
    delay_queue_.push_back(a);
    exec = delay_queue_.front();
    delay_queue_.pop_front();
  }
  const Command& cmd = command();
  StepEvents ev = step_env(state_, exec, cmd, *field_, dr_, *cfg_);
  executed_ = ev.executed;
  reward_ = reward(state_, cmd, ev.executed, ev, *cfg_);
  ++tick_;
  if (ev.fault)
    term_ = TerminationReason::Tilt;  // abort path; fault flagged upstream
  else
    term_ = check_termination(state_, *field_, cmd, *cfg_);
  return ev;
}

}  // namespace omniloco
