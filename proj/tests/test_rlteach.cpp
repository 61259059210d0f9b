#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <span>
#include <vector>

#include "doctest.h"
#include "omniloco/rlteach.hpp"

using namespace omniloco;

namespace {

// Definition-level GAE: adv[t] = sum_l (gamma*lam)^l * delta[t+l], summed
// front-to-back in extended precision.  Independent of the recursion used by
// compute_gae.
void gae_oracle(std::span<const Real> rew, std::span<const Real> val,
                Real bootstrap, Real gamma, Real lam, std::vector<Real>& adv,
                std::vector<Real>& ret) {
  const int T = static_cast<int>(rew.size());
  std::vector<long double> delta(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const long double next =
        t + 1 < T ? static_cast<long double>(val[static_cast<std::size_t>(t + 1)])
                  : static_cast<long double>(bootstrap);
    delta[static_cast<std::size_t>(t)] =
        static_cast<long double>(rew[static_cast<std::size_t>(t)]) +
        static_cast<long double>(gamma) * next -
        static_cast<long double>(val[static_cast<std::size_t>(t)]);
  }
  adv.resize(static_cast<std::size_t>(T));
  ret.resize(static_cast<std::size_t>(T));
  const long double gl = static_cast<long double>(gamma) * lam;
  for (int t = 0; t < T; ++t) {
    long double acc = 0, w = 1;
    for (int l = t; l < T; ++l) {
      acc += w * delta[static_cast<std::size_t>(l)];
      w *= gl;
    }
    adv[static_cast<std::size_t>(t)] = static_cast<Real>(acc);
    ret[static_cast<std::size_t>(t)] = static_cast<Real>(
        acc + static_cast<long double>(val[static_cast<std::size_t>(t)]));
  }
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.ppo.workers = 2;
  cfg.ppo.horizon = 64;
  cfg.ppo.iterations = 2;
  cfg.blind.iterations = 2;
  cfg.teacher.iterations = 2;
  return cfg;
}

}  // namespace

TEST_CASE("gae matches the definition on 1000 random fixtures") {
  Rng rng(2024);
  const auto start = std::chrono::steady_clock::now();
  Real worst = 0;
  for (int fix = 0; fix < 1000; ++fix) {
    const int T = rng.uniform_int(1, 60);
    std::vector<Real> rew(static_cast<std::size_t>(T)),
        val(static_cast<std::size_t>(T));
    for (Real& r : rew) r = rng.uniform(-5, 5);
    for (Real& v : val) v = rng.uniform(-10, 10);
    const Real boot = fix % 3 == 0 ? 0.0 : rng.uniform(-10, 10);
    const Real gamma = rng.uniform(0.8, 1.0);
    const Real lam = rng.uniform(0.8, 1.0);

    const GaeOut got = compute_gae(rew, val, boot, gamma, lam);
    std::vector<Real> adv, ret;
    gae_oracle(rew, val, boot, gamma, lam, adv, ret);
    REQUIRE(got.adv.size() == static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      worst = std::max(worst,
                       std::abs(got.adv[static_cast<std::size_t>(t)] -
                                adv[static_cast<std::size_t>(t)]));
      worst = std::max(worst,
                       std::abs(got.ret[static_cast<std::size_t>(t)] -
                                ret[static_cast<std::size_t>(t)]));
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  CHECK(worst < 1e-12);
  CHECK(secs < 10.0);
  MESSAGE("gae worst abs err ", worst, " in ", secs, " s");
}

TEST_CASE("gae handles single-step episodes") {
  const std::vector<Real> rew = {2.0}, val = {1.0};
  const GaeOut g = compute_gae(rew, val, 3.0, 0.9, 0.8);
  CHECK(g.adv[0] == doctest::Approx(2.0 + 0.9 * 3.0 - 1.0).epsilon(1e-15));
  CHECK(g.ret[0] == doctest::Approx(g.adv[0] + 1.0).epsilon(1e-15));
  CHECK_THROWS(compute_gae(rew, std::vector<Real>{1.0, 2.0}, 0, 0.9, 0.8));
}

TEST_CASE("ppo surrogate derivative matches finite differences") {
  Rng rng(7);
  int checked = 0;
  Real worst = 0;
  while (checked < 200) {
    const Real lo = rng.uniform(-1, 1);
    const Real ln = lo + rng.uniform(-0.5, 0.5);
    const Real adv = rng.uniform(-2, 2);
    const Real clip = rng.uniform(0.05, 0.4);
    // keep away from the clip kinks where the loss is not differentiable
    const Real d = ln - lo;
    if (std::abs(d - std::log(1 + clip)) < 1e-3) continue;
    if (1 - clip > 0 && std::abs(d - std::log(1 - clip)) < 1e-3) continue;
    if (std::abs(adv) < 1e-3) continue;

    const Real h = 1e-7;
    const Real fd = (ppo_surrogate(ln + h, lo, adv, clip) -
                     ppo_surrogate(ln - h, lo, adv, clip)) /
                    (2 * h);
    const Real an = ppo_surrogate_dlogp(ln, lo, adv, clip);
    const Real scale = std::max({std::abs(fd), std::abs(an), Real(1)});
    worst = std::max(worst, std::abs(fd - an) / scale);
    ++checked;
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ppo surrogate clips exactly where it should") {
  const Real clip = 0.2;
  // positive advantage, ratio above 1+clip: loss pinned at -(1+clip)*adv
  CHECK(ppo_surrogate(std::log(2.0), 0.0, 1.5, clip) ==
        doctest::Approx(-1.2 * 1.5).epsilon(1e-15));
  CHECK(ppo_surrogate_dlogp(std::log(2.0), 0.0, 1.5, clip) == 0.0);
  // negative advantage, ratio below 1-clip: pinned at -(1-clip)*adv
  CHECK(ppo_surrogate(std::log(0.5), 0.0, -1.5, clip) ==
        doctest::Approx(0.8 * 1.5).epsilon(1e-15));
  CHECK(ppo_surrogate_dlogp(std::log(0.5), 0.0, -1.5, clip) == 0.0);
  // negative advantage, ratio above 1+clip: unclipped branch stays active
  CHECK(ppo_surrogate(std::log(2.0), 0.0, -1.0, clip) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ppo_surrogate_dlogp(std::log(2.0), 0.0, -1.0, clip) ==
        doctest::Approx(2.0).epsilon(1e-15));
  // ratio exactly 1: loss -adv, derivative -adv
  CHECK(ppo_surrogate(0.3, 0.3, 0.7, clip) == doctest::Approx(-0.7));
  CHECK(ppo_surrogate_dlogp(0.3, 0.3, 0.7, clip) == doctest::Approx(-0.7));
}

TEST_CASE("advantage normalization yields mean 0, std 1 across the batch") {
  Rng rng(9);
  std::vector<GaeOut> gae(7);
  for (auto& g : gae) {
    const int T = rng.uniform_int(5, 80);
    g.adv.resize(static_cast<std::size_t>(T));
    g.ret.resize(static_cast<std::size_t>(T));
    for (Real& a : g.adv) a = rng.uniform(-3, 9);
  }
  normalize_advantages(gae);
  Real sum = 0, n = 0;
  for (const auto& g : gae)
    for (Real a : g.adv) {
      sum += a;
      ++n;
    }
  const Real mean = sum / n;
  Real var = 0;
  for (const auto& g : gae)
    for (Real a : g.adv) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-6);

  std::vector<GaeOut> empty;
  CHECK_THROWS(normalize_advantages(empty));
}

TEST_CASE("collect fills each worker's horizon exactly and keeps shapes") {
  const RunConfig cfg = tiny_config();
  PpoTrainer tr = make_blind_trainer(cfg, 99);
  const auto batch = tr.collect();

  long total = 0;
  for (const Rollout& r : batch) {
    REQUIRE(r.T > 0);
    total += r.T;
    const auto T = static_cast<std::size_t>(r.T);
    CHECK(r.pc.dim(0) >= T);
    CHECK(r.pc.dim(1) == ObsVec::kDim);
    CHECK(r.act.dim(1) == kActionDim);
    CHECK(r.extras.dim(1) == ExtrasVec::kDim);
    CHECK(r.hm.numel() == 0);   // blind arch carries no height map
    CHECK(r.base.numel() == 0);
    CHECK(r.logp.size() == T);
    CHECK(r.val.size() == T);
    CHECK(r.rew.size() == T);
    const std::size_t windows =
        (T + static_cast<std::size_t>(cfg.ppo.bptt_window) - 1) /
        static_cast<std::size_t>(cfg.ppo.bptt_window);
    CHECK(r.actor_h.size() == windows);
    CHECK(r.critic_h.size() == windows);
    Real s = 0;
    for (Real x : r.rew) s += x;
    CHECK(r.ep_return == doctest::Approx(s).epsilon(1e-12));
    if (r.ended && !r.truncated) CHECK(r.bootstrap == 0.0);
    for (Real v : r.val) CHECK(std::isfinite(v));
    for (Real lp : r.logp) CHECK(std::isfinite(lp));
  }
  CHECK(total == cfg.ppo.workers * cfg.ppo.horizon);
}

TEST_CASE("teacher rollouts carry height maps and frozen-base actions") {
  RunConfig cfg = tiny_config();
  cfg.ppo.horizon = 40;
  const auto blind = init_blind_params(31);
  PpoTrainer tr = make_teacher_trainer(cfg, &blind, 99);
  const auto batch = tr.collect();
  REQUIRE(!batch.empty());
  for (const Rollout& r : batch) {
    CHECK(r.hm.dim(1) == HeightMapObs::kSize);
    CHECK(r.base.dim(1) == kActionDim);
    CHECK(r.base_m.dim(1) == kActionDim);
  }
}

TEST_CASE("stored log-probs replay bit-exactly from the stored inputs") {
  // The update's first epoch recomputes log-probs over the same windows; the
  // importance ratio starts at exactly 1 only if this replay is bit-exact.
  const RunConfig cfg = tiny_config();
  PpoTrainer tr = make_blind_trainer(cfg, 5);
  const auto batch = tr.collect();
  REQUIRE(!batch.empty());

  const netcore::ParameterStore& p = tr.actor_params();
  const BlindNet net(&p);
  const Real* log_std = p.get("blind.log_std").ptr();
  const int W = cfg.ppo.bptt_window;

  for (const Rollout& r : batch) {
    LstmPair s = r.actor_h[0];
    Real mean[kActionDim];
    for (int t = 0; t < r.T; ++t) {
      if (t % W == 0) {
        // the stored window-start state must equal the replayed stream
        const LstmPair& cp = r.actor_h[static_cast<std::size_t>(t / W)];
        CHECK(cp.h0 == s.h0);
        CHECK(cp.c0 == s.c0);
        CHECK(cp.h1 == s.h1);
        CHECK(cp.c1 == s.c1);
      }
      net.step(r.pc.row(static_cast<std::size_t>(t)), s, mean);
      const Real lp = netcore::gaussian_logp(
          r.act.row(static_cast<std::size_t>(t)), mean, log_std, kActionDim);
      CHECK(lp == r.logp[static_cast<std::size_t>(t)]);
    }
  }
}

TEST_CASE("one ppo iteration produces sane statistics") {
  RunConfig cfg = tiny_config();
  cfg.ppo.horizon = 500;  // past the episode cap, so at least one ends
  PpoTrainer tr = make_blind_trainer(cfg, 17);
  const IterStats st = tr.iterate();
  CHECK(tr.iteration() == 1);
  CHECK(tr.samples() ==
        static_cast<std::uint64_t>(cfg.ppo.workers * cfg.ppo.horizon));
  CHECK(st.samples == cfg.ppo.workers * cfg.ppo.horizon);
  CHECK(st.episodes >= 1);
  CHECK(std::isfinite(st.ret_mean));
  CHECK(st.loss_v >= 0.0);
  CHECK(st.clip_frac >= 0.0);
  CHECK(st.clip_frac <= 1.0);
  CHECK(st.grad_norm >= 0.0);
  CHECK(st.entropy == doctest::Approx(netcore::gaussian_entropy(
                          tr.actor_params().get("blind.log_std").ptr(),
                          kActionDim))
                          .epsilon(0.5));
  CHECK(PpoTrainer::log_columns().size() ==
        PpoTrainer::log_row(1, 10, st).size());
}

TEST_CASE("training moves the actor but never the frozen blind block") {
  RunConfig cfg = tiny_config();
  cfg.ppo.horizon = 48;
  const auto blind = init_blind_params(31);
  PpoTrainer tr = make_teacher_trainer(cfg, &blind, 12);
  const netcore::ParameterStore before = tr.actor_params();
  tr.iterate();
  const netcore::ParameterStore& after = tr.actor_params();

  for (std::size_t i = 0; i < before.size(); ++i) {
    const std::string& n = before.name(i);
    const Tensor& a = before.tensor(i);
    const Tensor& b = after.get(n);
    if (n.rfind("blind.", 0) == 0) {
      for (std::size_t j = 0; j < a.numel(); ++j) CHECK(a.data[j] == b.data[j]);
      // the frozen block still equals the pretrained source
      const Tensor& src = blind.get(n);
      for (std::size_t j = 0; j < a.numel(); ++j)
        CHECK(b.data[j] == src.data[j]);
    }
  }
  // at least one trainable tensor moved
  bool moved = false;
  for (std::size_t i = 0; i < before.size() && !moved; ++i) {
    if (before.name(i).rfind("blind.", 0) == 0) continue;
    const Tensor& a = before.tensor(i);
    const Tensor& b = after.get(before.name(i));
    for (std::size_t j = 0; j < a.numel(); ++j)
      if (a.data[j] != b.data[j]) {
        moved = true;
        break;
      }
  }
  CHECK(moved);
}

TEST_CASE("checkpoint round-trip resumes bit-identically") {
  const RunConfig cfg = tiny_config();
  const std::string path = "ckpt_roundtrip.bin";

  PpoTrainer a = make_blind_trainer(cfg, 77);
  a.iterate();
  a.save_checkpoint(path);
  const IterStats a1 = a.iterate();
  const IterStats a2 = a.iterate();

  PpoTrainer b = make_blind_trainer(cfg, 77);
  b.load_checkpoint(path);
  CHECK(b.iteration() == 1);
  CHECK(b.samples() == static_cast<std::uint64_t>(cfg.ppo.workers) *
                           static_cast<std::uint64_t>(cfg.ppo.horizon));
  const IterStats b1 = b.iterate();
  const IterStats b2 = b.iterate();

  const auto same = [](const IterStats& x, const IterStats& y) {
    return PpoTrainer::log_row(0, 0, x) == PpoTrainer::log_row(0, 0, y);
  };
  CHECK(same(a1, b1));
  CHECK(same(a2, b2));
  for (std::size_t i = 0; i < a.actor_params().size(); ++i) {
    const Tensor& ta = a.actor_params().tensor(i);
    const Tensor& tb = b.actor_params().get(a.actor_params().name(i));
    for (std::size_t j = 0; j < ta.numel(); ++j)
      CHECK(ta.data[j] == tb.data[j]);
  }
  std::remove(path.c_str());

  PpoTrainer c = make_teacher_trainer(cfg, nullptr, 77);
  CHECK_THROWS(c.load_checkpoint("no_such_checkpoint.bin"));
}

TEST_CASE("samples_to_threshold respects the smoothing window") {
  const std::vector<Real> samples = {100, 200, 300, 400, 500, 600};
  SUBCASE("window 1 fires on the first raw crossing") {
    const std::vector<Real> ret = {0, 1, 5, 2, 6, 7};
    CHECK(samples_to_threshold(samples, ret, 5.0, 1) == 300);
  }
  SUBCASE("the running mean over the window decides") {
    const std::vector<Real> ret = {0, 0, 9, 0, 0, 0};
    // the window grows from the front: mean at i=2 is 3, first >= 2
    CHECK(samples_to_threshold(samples, ret, 2.0, 3) == 300);
    // a single spike is averaged away under a higher threshold
    CHECK(samples_to_threshold(samples, ret, 4.0, 1) == 300);
    CHECK(samples_to_threshold(samples, ret, 4.0, 3) == -1);
  }
  SUBCASE("exact equality counts") {
    const std::vector<Real> ret = {1, 3, 0, 0, 0, 0};
    CHECK(samples_to_threshold(samples, ret, 2.0, 2) == 200);
  }
  SUBCASE("never reaching gives -1") {
    const std::vector<Real> ret = {0, 0, 0, 0, 0, 0};
    CHECK(samples_to_threshold(samples, ret, 0.5, 3) == -1);
  }
  CHECK_THROWS(samples_to_threshold(samples, std::vector<Real>{1.0}, 0.5, 3));
}

TEST_CASE("tracking probe is deterministic and bounded") {
  RunConfig cfg;
  const auto blind = init_blind_params(4);
  const Real v1 = probe_tracking_vx(blind, cfg, 0.4, 2, 123);
  const Real v2 = probe_tracking_vx(blind, cfg, 0.4, 2, 123);
  CHECK(v1 == v2);
  CHECK(std::isfinite(v1));
  CHECK(std::abs(v1) < 3.0);
}
