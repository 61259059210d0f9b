#include "omniloco/evalsuite.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "omniloco/logio.hpp"
#include "omniloco/parallel.hpp"
#include "omniloco/perception.hpp"

namespace omniloco {

const char* policy_arch_name(PolicyArch a) {
  switch (a) {
    case PolicyArch::Blind: return "blind";
    case PolicyArch::Teacher: return "teacher";
    case PolicyArch::Student: return "student";
  }
  return "?";
}

PolicyArch policy_arch_of(const netcore::ParameterStore& p) {
  if (p.arch_tag == kTagStudent) return PolicyArch::Student;
  if (p.arch_tag == kTagTeacher || p.arch_tag == kTagTeacherNoBase)
    return PolicyArch::Teacher;
  OL_REQUIRE(p.arch_tag == kTagBlind,
             "policy_arch_of: unrecognized tag '" + p.arch_tag + "'");
  return PolicyArch::Blind;
}

const char* report_tier_name(ReportTier t) {
  switch (t) {
    case ReportTier::Easy: return "easy";
    case ReportTier::RidgeHard: return "ridge-hard";
    case ReportTier::StairHard: return "stair-hard";
    case ReportTier::BlockHard: return "block-hard";
  }
  return "?";
}

TerrainSpec tier_terrain_spec(ReportTier tier, int episode,
                              const TerrainGenConfig& cfg, Rng& rng) {
  static constexpr TerrainKind kEasyCycle[3] = {
      TerrainKind::Ridges, TerrainKind::Stairs, TerrainKind::Blocks};
  switch (tier) {
    case ReportTier::Easy:
      return sample_terrain_spec(kEasyCycle[episode % 3], EvalTier::Easy, cfg,
                                 rng);
    case ReportTier::RidgeHard:
      return sample_terrain_spec(TerrainKind::Ridges, EvalTier::Hard, cfg,
                                 rng);
    case ReportTier::StairHard:
      return sample_terrain_spec(TerrainKind::Stairs, EvalTier::Hard, cfg,
                                 rng);
    case ReportTier::BlockHard:
      return sample_terrain_spec(TerrainKind::Blocks, EvalTier::Hard, cfg,
                                 rng);
  }
  OL_REQUIRE(false, "tier_terrain_spec: bad tier");
  return {};
}

Real action_effort(const ActionVector& executed) {
  const auto a = executed.to_array();
  Real e = 0;
  for (int i = 0; i < ActionVector::kDim; ++i)
    if (i != 3) e += a[i] * a[i];
  return e + 0.5 * a[3] * a[3];
}

PolicyDriver::PolicyDriver(const netcore::ParameterStore* params,
                           const CameraRig* rig, RenderCounter* counter)
    : arch_(policy_arch_of(*params)), rig_(rig), counter_(counter) {
  switch (arch_) {
    case PolicyArch::Blind:
      blind_ = std::make_unique<BlindNet>(params);
      break;
    case PolicyArch::Teacher:
      teacher_ = std::make_unique<TeacherNet>(params);
      break;
    case PolicyArch::Student:
      student_ = std::make_unique<StudentNet>(params);
      OL_REQUIRE(rig_ != nullptr, "PolicyDriver: student needs a camera rig");
      break;
  }
  reset();
}

void PolicyDriver::reset() {
  blind_s_.reset(kBlindHidden);
  ds_s_.reset(kDsHidden);
}

ActionVector PolicyDriver::act(const HeightField& field, const RobotState& s,
                               const Real* obs) {
  PolicyStepOut po;
  switch (arch_) {
    case PolicyArch::Blind:
      blind_->step(obs, blind_s_, po.mean.data());
      break;
    case PolicyArch::Teacher: {
      const HeightMapObs hm = extract_heightmap(field, s.x, s.y, s.z, s.yaw);
      Real cat[kQuadrantConcatSize];
      concat_quadrants(hm, cat);
      teacher_->step(obs, cat, blind_s_, ds_s_, po);
      break;
    }
    case PolicyArch::Student: {
      const DepthQuad depth =
          render_depth(field, s.x, s.y, s.z, s.yaw, *rig_, counter_);
      student_->step(obs, depth, blind_s_, ds_s_, po);
      break;
    }
  }
  return ActionVector::from_array(po.mean);
}

std::array<Real, 2> rate_ci(Real p, std::size_t n) {
  if (n == 0) return {0, 1};
  const Real z = 1.959963984540054;  // 97.5th normal percentile
  const Real half = z * std::sqrt(p * (1 - p) / static_cast<Real>(n));
  return {std::max<Real>(0, p - half), std::min<Real>(1, p + half)};
}

Real TierReport::success_rate() const {
  if (episodes.empty()) return 0;
  int s = 0;
  for (const auto& e : episodes) s += e.success ? 1 : 0;
  return static_cast<Real>(s) / static_cast<Real>(episodes.size());
}

Real TierReport::collision_rate() const {
  if (episodes.empty()) return 0;
  int s = 0;
  for (const auto& e : episodes) s += e.had_collision ? 1 : 0;
  return static_cast<Real>(s) / static_cast<Real>(episodes.size());
}

Real TierReport::term_collision_rate() const {
  if (episodes.empty()) return 0;
  int s = 0;
  for (const auto& e : episodes) s += e.term_collision ? 1 : 0;
  return static_cast<Real>(s) / static_cast<Real>(episodes.size());
}

std::array<Real, 2> TierReport::success_ci() const {
  return rate_ci(success_rate(), episodes.size());
}

Real TierReport::mean_energy_rate() const {
  if (episodes.empty()) return 0;
  Real s = 0;
  for (const auto& e : episodes)
    s += e.ticks > 0 ? e.energy / static_cast<Real>(e.ticks) : 0;
  return s / static_cast<Real>(episodes.size());
}

Real TierReport::mean_return() const {
  if (episodes.empty()) return 0;
  Real s = 0;
  for (const auto& e : episodes) s += e.ep_return;
  return s / static_cast<Real>(episodes.size());
}

Real TierReport::mean_ticks() const {
  if (episodes.empty()) return 0;
  Real s = 0;
  for (const auto& e : episodes) s += static_cast<Real>(e.ticks);
  return s / static_cast<Real>(episodes.size());
}

EvalReport run_eval(const netcore::ParameterStore& params,
                    const RunConfig& cfg, std::uint64_t eval_seed,
                    const std::string& policy_name, int episodes_per_tier) {
  const int n = episodes_per_tier > 0 ? episodes_per_tier
                                      : cfg.eval.episodes_per_tier;
  OL_REQUIRE(n > 0, "run_eval: episode count");

  EvalReport rep;
  rep.policy = policy_name;
  rep.arch = policy_arch_of(params);
  rep.config_hash = config_hash(cfg);
  rep.seed = eval_seed;
  rep.episodes_per_tier = n;

  const Rng root(eval_seed);
  for (int ti = 0; ti < kReportTiers; ++ti) {
    const ReportTier tier = static_cast<ReportTier>(ti);
    TierReport& tr = rep.tiers[ti];
    tr.tier = tier;
    tr.episodes.resize(static_cast<std::size_t>(n));

    // Episodes are independent (own rng stream, env and driver), so the
    // parallel loop can't change any result.
    parallel::for_each_index(static_cast<std::size_t>(n), [&](std::size_t e) {
      Rng rng =
          root.spawn(static_cast<std::uint64_t>(ti) * 100000 + e);
      const TerrainSpec spec =
          tier_terrain_spec(tier, static_cast<int>(e), cfg.terrain, rng);
      const HeightField field = generate_terrain(spec, cfg.terrain);
      Env env(&field, &cfg.env);
      env.reset(DomainRandomization{}, rng);
      PolicyDriver drv(&params, &cfg.rig, nullptr);

      EpisodeResult& r = tr.episodes[e];
      r.episode = static_cast<int>(e);
      r.kind = spec.kind;
      const Real x0 = env.state().x, y0 = env.state().y;
      Real obs[ObsVec::kDim];
      int last_collision = -1;
      while (!env.done()) {
        build_obs(env.state(), env.command(), obs);
        const ActionVector a = drv.act(field, env.state(), obs);
        const StepEvents ev = env.step(a);
        r.ep_return += env.last_reward();
        r.energy += action_effort(ev.executed);
        const int hits =
            ev.foot_collisions + ev.rod_contacts + ev.cap_violations;
        r.collisions += hits;
        if (hits > 0) last_collision = env.tick();
      }
      r.ticks = env.tick();
      r.term = env.termination();
      r.success = env.truncated();
      r.had_collision = r.collisions > 0;
      r.term_collision = r.term != TerminationReason::None &&
                         last_collision > r.ticks - 100;
      r.dist = std::hypot(env.state().x - x0, env.state().y - y0);
    });
  }
  return rep;
}

void write_report(const EvalReport& rep, const std::string& path) {
  std::ostringstream os;
  logio::TableWriter w(
      os, "eval",
      {{"policy", rep.policy},
       {"arch", policy_arch_name(rep.arch)},
       {"config", config_hash_hex(rep.config_hash)},
       {"seed", std::to_string(rep.seed)},
       {"episodes_per_tier", std::to_string(rep.episodes_per_tier)}},
      {"tier", "episode", "kind", "ticks", "term", "success", "ret", "energy",
       "collisions", "had_collision", "term_collision", "dist"});
  for (int ti = 0; ti < kReportTiers; ++ti)
    for (const EpisodeResult& r : rep.tiers[ti].episodes)
      w.row(std::array<Real, 12>{
          static_cast<Real>(ti), static_cast<Real>(r.episode),
          static_cast<Real>(static_cast<int>(r.kind)),
          static_cast<Real>(r.ticks),
          static_cast<Real>(static_cast<int>(r.term)),
          r.success ? Real(1) : Real(0), r.ep_return, r.energy,
          static_cast<Real>(r.collisions), r.had_collision ? Real(1) : Real(0),
          r.term_collision ? Real(1) : Real(0), r.dist});
  logio::write_text_file(path, os.str());
}

EvalReport read_report(const std::string& path) {
  const logio::Table t = logio::read_table(path);
  OL_REQUIRE(t.kind == "eval", "read_report: not an eval table: " + path);
  EvalReport rep;
  rep.policy = t.meta.count("policy") ? t.meta.at("policy") : "";
  const std::string arch =
      t.meta.count("arch") ? t.meta.at("arch") : "blind";
  rep.arch = arch == "student"  ? PolicyArch::Student
             : arch == "teacher" ? PolicyArch::Teacher
                                 : PolicyArch::Blind;
  if (t.meta.count("config"))
    rep.config_hash = std::stoull(t.meta.at("config"), nullptr, 16);
  if (t.meta.count("seed")) rep.seed = std::stoull(t.meta.at("seed"));
  if (t.meta.count("episodes_per_tier"))
    rep.episodes_per_tier = std::stoi(t.meta.at("episodes_per_tier"));
  for (int ti = 0; ti < kReportTiers; ++ti)
    rep.tiers[ti].tier = static_cast<ReportTier>(ti);

  const int c_tier = t.col("tier"), c_ep = t.col("episode"),
            c_kind = t.col("kind"), c_ticks = t.col("ticks"),
            c_term = t.col("term"), c_succ = t.col("success"),
            c_ret = t.col("ret"), c_en = t.col("energy"),
            c_col = t.col("collisions"), c_had = t.col("had_collision"),
            c_tc = t.col("term_collision"), c_dist = t.col("dist");
  OL_REQUIRE(c_tier >= 0 && c_dist >= 0, "read_report: missing columns");
  for (const auto& row : t.rows) {
    const int ti = static_cast<int>(row[c_tier]);
    OL_REQUIRE(ti >= 0 && ti < kReportTiers, "read_report: tier out of range");
    EpisodeResult r;
    r.episode = static_cast<int>(row[c_ep]);
    r.kind = static_cast<TerrainKind>(static_cast<int>(row[c_kind]));
    r.ticks = static_cast<int>(row[c_ticks]);
    r.term = static_cast<TerminationReason>(static_cast<int>(row[c_term]));
    r.success = row[c_succ] != 0;
    r.ep_return = row[c_ret];
    r.energy = row[c_en];
    r.collisions = static_cast<int>(row[c_col]);
    r.had_collision = row[c_had] != 0;
    r.term_collision = row[c_tc] != 0;
    r.dist = row[c_dist];
    rep.tiers[ti].episodes.push_back(r);
  }
  return rep;
}

}  // namespace omniloco
