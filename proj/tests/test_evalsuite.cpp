#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "omniloco/evalsuite.hpp"

using namespace omniloco;

TEST_CASE("rate_ci is the clamped normal-approximation interval") {
  const Real z = 1.959963984540054;
  const auto ci = rate_ci(0.85, 100);
  const Real half = z * std::sqrt(0.85 * 0.15 / 100.0);
  CHECK(ci[0] == doctest::Approx(0.85 - half).epsilon(1e-15));
  CHECK(ci[1] == doctest::Approx(0.85 + half).epsilon(1e-15));

  const auto lo = rate_ci(0.02, 10);
  CHECK(lo[0] == 0.0);  // clamped at zero
  const auto hi = rate_ci(0.98, 10);
  CHECK(hi[1] == 1.0);  // clamped at one

  CHECK(rate_ci(0.0, 50) == std::array<Real, 2>{0.0, 0.0});
  CHECK(rate_ci(1.0, 50) == std::array<Real, 2>{1.0, 1.0});
  CHECK(rate_ci(0.5, 0) == std::array<Real, 2>{0.0, 1.0});
}

TEST_CASE("action effort down-weights the swing apex") {
  ActionVector a;
  a.dvx = 0.1;
  a.dvy = -0.2;
  a.dyaw = 0.3;
  a.apex = 0.4;
  a.land_dx = -0.5;
  a.land_dy = 0.6;
  const Real want = 0.1 * 0.1 + 0.2 * 0.2 + 0.3 * 0.3 + 0.5 * 0.4 * 0.4 +
                    0.5 * 0.5 + 0.6 * 0.6;
  CHECK(action_effort(a) == doctest::Approx(want).epsilon(1e-15));
  CHECK(action_effort(ActionVector{}) == 0.0);
}

TEST_CASE("tier terrain specs cycle the easy kinds and pin the hard ones") {
  const TerrainGenConfig cfg;
  Rng rng(3);
  const TerrainKind cycle[3] = {TerrainKind::Ridges, TerrainKind::Stairs,
                                TerrainKind::Blocks};
  for (int e = 0; e < 6; ++e) {
    const TerrainSpec s = tier_terrain_spec(ReportTier::Easy, e, cfg, rng);
    CHECK(s.kind == cycle[e % 3]);
    CHECK(s.tier == EvalTier::Easy);
  }
  const std::pair<ReportTier, TerrainKind> hard[] = {
      {ReportTier::RidgeHard, TerrainKind::Ridges},
      {ReportTier::StairHard, TerrainKind::Stairs},
      {ReportTier::BlockHard, TerrainKind::Blocks},
  };
  for (const auto& [tier, kind] : hard)
    for (int e = 0; e < 3; ++e) {
      const TerrainSpec s = tier_terrain_spec(tier, e, cfg, rng);
      CHECK(s.kind == kind);
      CHECK(s.tier == EvalTier::Hard);
    }
}

TEST_CASE("tier aggregates recompute from the episode rows") {
  TierReport tr;
  tr.episodes.resize(4);
  tr.episodes[0] = {0, TerrainKind::Ridges, 450, TerminationReason::None,
                    true,  90.0, 45.0, 0, false, false, 3.0};
  tr.episodes[1] = {1, TerrainKind::Stairs, 200, TerminationReason::Tilt,
                    false, 40.0, 100.0, 3, true, true, 1.0};
  tr.episodes[2] = {2, TerrainKind::Blocks, 450, TerminationReason::None,
                    true,  80.0, 90.0,  1, true, false, 2.5};
  tr.episodes[3] = {3, TerrainKind::Ridges, 0, TerminationReason::Tilt,
                    false, 0.0,  0.0,   0, false, false, 0.0};

  CHECK(tr.success_rate() == 0.5);
  CHECK(tr.collision_rate() == 0.5);
  CHECK(tr.term_collision_rate() == 0.25);
  CHECK(tr.mean_return() == doctest::Approx((90 + 40 + 80 + 0) / 4.0));
  CHECK(tr.mean_ticks() == doctest::Approx((450 + 200 + 450 + 0) / 4.0));
  // zero-tick episodes contribute zero energy rate, not a division fault
  CHECK(tr.mean_energy_rate() ==
        doctest::Approx((45.0 / 450 + 100.0 / 200 + 90.0 / 450 + 0) / 4.0));
  CHECK(tr.success_ci() == rate_ci(0.5, 4));
}

TEST_CASE("policy arch is sniffed from the store tag") {
  const auto blind = init_blind_params(1);
  CHECK(policy_arch_of(blind) == PolicyArch::Blind);
  const auto teacher = init_teacher_params(2, &blind);
  CHECK(policy_arch_of(teacher) == PolicyArch::Teacher);
  const auto nobase = init_teacher_params(3, nullptr);
  CHECK(policy_arch_of(nobase) == PolicyArch::Teacher);
  const auto student = init_student_params(4, teacher);
  CHECK(policy_arch_of(student) == PolicyArch::Student);
  const auto critic = init_critic_params(5, false);
  CHECK_THROWS(policy_arch_of(critic));
}

TEST_CASE("reports round-trip through their text form") {
  EvalReport rep;
  rep.policy = "unit-fixture";
  rep.arch = PolicyArch::Teacher;
  rep.config_hash = 0xdeadbeefcafe1234ull;
  rep.seed = 42;
  rep.episodes_per_tier = 3;
  Rng rng(8);
  for (int ti = 0; ti < kReportTiers; ++ti) {
    rep.tiers[ti].tier = static_cast<ReportTier>(ti);
    for (int e = 0; e < 3; ++e) {
      EpisodeResult r;
      r.episode = e;
      r.kind = static_cast<TerrainKind>(rng.uniform_int(0, 4));
      r.ticks = rng.uniform_int(0, 450);
      r.term = static_cast<TerminationReason>(rng.uniform_int(0, 4));
      r.success = rng.uniform() < 0.5;
      r.ep_return = rng.uniform(-10, 100);
      r.energy = rng.uniform(0, 50);
      r.collisions = rng.uniform_int(0, 9);
      r.had_collision = r.collisions > 0;
      r.term_collision = rng.uniform() < 0.3;
      r.dist = rng.uniform(0, 6);
      rep.tiers[ti].episodes.push_back(r);
    }
  }

  const std::string path = "eval_roundtrip.tsv";
  write_report(rep, path);
  const EvalReport back = read_report(path);
  CHECK(back.policy == rep.policy);
  CHECK(back.arch == rep.arch);
  CHECK(back.config_hash == rep.config_hash);
  CHECK(back.seed == rep.seed);
  CHECK(back.episodes_per_tier == rep.episodes_per_tier);
  for (int ti = 0; ti < kReportTiers; ++ti) {
    const auto& a = rep.tiers[ti].episodes;
    const auto& b = back.tiers[ti].episodes;
    REQUIRE(a.size() == b.size());
    for (std::size_t e = 0; e < a.size(); ++e) {
      CHECK(a[e].episode == b[e].episode);
      CHECK(a[e].kind == b[e].kind);
      CHECK(a[e].ticks == b[e].ticks);
      CHECK(a[e].term == b[e].term);
      CHECK(a[e].success == b[e].success);
      CHECK(a[e].ep_return == b[e].ep_return);  // exact decimal round-trip
      CHECK(a[e].energy == b[e].energy);
      CHECK(a[e].collisions == b[e].collisions);
      CHECK(a[e].had_collision == b[e].had_collision);
      CHECK(a[e].term_collision == b[e].term_collision);
      CHECK(a[e].dist == b[e].dist);
    }
  }
  std::remove(path.c_str());
  CHECK_THROWS(read_report("missing_report.tsv"));
}

TEST_CASE("evaluation is deterministic and paired across policies") {
  RunConfig cfg;
  cfg.env.episode_ticks = 60;
  const auto blind = init_blind_params(11);
  const auto teacher = init_teacher_params(12, &blind);

  const EvalReport a = run_eval(blind, cfg, 777, "blind-a", 2);
  const EvalReport b = run_eval(blind, cfg, 777, "blind-b", 2);
  const EvalReport t = run_eval(teacher, cfg, 777, "teacher", 2);

  CHECK(a.arch == PolicyArch::Blind);
  CHECK(t.arch == PolicyArch::Teacher);
  for (int ti = 0; ti < kReportTiers; ++ti) {
    REQUIRE(a.tiers[ti].episodes.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      const auto& ea = a.tiers[ti].episodes[e];
      const auto& eb = b.tiers[ti].episodes[e];
      // same seed, same policy: bit-identical outcomes
      CHECK(ea.ticks == eb.ticks);
      CHECK(ea.ep_return == eb.ep_return);
      CHECK(ea.energy == eb.energy);
      CHECK(ea.dist == eb.dist);
      CHECK(ea.kind == eb.kind);
      // same seed, different policy: the terrain pairing holds
      CHECK(ea.kind == t.tiers[ti].episodes[e].kind);
      // bookkeeping invariants
      CHECK(ea.ticks <= cfg.env.episode_ticks);
      CHECK(ea.success == (ea.term == TerminationReason::None));
      CHECK(ea.had_collision == (ea.collisions > 0));
      CHECK(ea.dist >= 0.0);
      CHECK(ea.energy >= 0.0);
    }
  }
}
