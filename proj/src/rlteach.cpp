#include "omniloco/rlteach.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "omniloco/logio.hpp"

namespace omniloco {

using netcore::Act;
using netcore::GradStore;
using netcore::LstmCache;
using netcore::LstmGradView;
using netcore::LstmView;
using netcore::ParameterStore;

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

GaeOut compute_gae(std::span<const Real> rewards, std::span<const Real> values,
                   Real bootstrap_value, Real gamma, Real lam) {
  OL_REQUIRE(rewards.size() == values.size(), "compute_gae: length mismatch");
  const int T = static_cast<int>(rewards.size());
  GaeOut out;
  out.adv.resize(T);
  out.ret.resize(T);
  Real next_adv = 0;
  Real next_val = bootstrap_value;
  for (int t = T - 1; t >= 0; --t) {
    const Real delta = rewards[t] + gamma * next_val - values[t];
    next_adv = delta + gamma * lam * next_adv;
    next_val = values[t];
    out.adv[t] = next_adv;
    out.ret[t] = next_adv + values[t];
  }
  return out;
}

Real ppo_surrogate(Real logp_new, Real logp_old, Real adv, Real clip) {
  const Real r = std::exp(logp_new - logp_old);
  const Real rc = clamp(r, 1 - clip, 1 + clip);
  return -std::min(r * adv, rc * adv);
}

Real ppo_surrogate_dlogp(Real logp_new, Real logp_old, Real adv, Real clip) {
  const Real r = std::exp(logp_new - logp_old);
  const Real rc = clamp(r, 1 - clip, 1 + clip);
  // Gradient flows only while the unclipped branch is the active minimum.
  return r * adv <= rc * adv ? -adv * r : 0.0;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

struct ChunkRef {
  int rollout;
  int window;  // index into the rollout's hidden checkpoints
  int t0;
  int len;
};

Tensor copy_rows(const Tensor& src, int t0, int len) {
  const std::size_t w = src.dim(1);
  Tensor out({static_cast<std::size_t>(len), w});
  std::memcpy(out.ptr(), src.row(static_cast<std::size_t>(t0)),
              sizeof(Real) * w * static_cast<std::size_t>(len));
  return out;
}

LstmView lstm_view(const ParameterStore& p, const std::string& name) {
  return {&p.get(name + ".w_ih"), &p.get(name + ".w_hh"), &p.get(name + ".b")};
}

std::vector<std::size_t> all_entries(const ParameterStore& p) {
  std::vector<std::size_t> v(p.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  const std::uint64_t n = s.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(s.data(), static_cast<std::streamsize>(n));
}

std::string read_string(std::istream& is) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  OL_REQUIRE(is.good(), "checkpoint: truncated string");
  return s;
}

}  // namespace

PpoTrainer::PpoTrainer(const RunConfig& cfg, const TrainArm& arm,
                       ParameterStore actor, ParameterStore critic,
                       std::uint64_t seed)
    : cfg_(cfg),
      arm_(arm),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      adam_actor_(actor_, arm.arch == ActorArch::Teacher
                              ? netcore::entries_matching(
                                    actor_,
                                    [](const std::string& n) {
                                      return n.rfind("blind.", 0) != 0;
                                    })
                              : all_entries(actor_)),
      adam_critic_(critic_, all_entries(critic_)),
      learner_rng_(Rng(seed).spawn(0)) {
  trainable_ = adam_actor_.trainable();
  worker_rngs_.reserve(static_cast<std::size_t>(cfg_.ppo.workers));
  const Rng root(seed);
  for (int w = 0; w < cfg_.ppo.workers; ++w)
    worker_rngs_.push_back(root.spawn(1 + static_cast<std::uint64_t>(w)));
  if (arm_.arch == ActorArch::Teacher) {
    OL_REQUIRE(actor_.has("ds.lstm0.w_ih"), "trainer: not a teacher store");
    OL_REQUIRE(critic_.has("vf.lstm0.w_ih") &&
                   critic_.get("vf.lstm0.w_ih").dim(1) ==
                       64 + static_cast<std::size_t>(kHmEmbed),
               "trainer: critic lacks the terrain-embedding input");
  } else {
    OL_REQUIRE(actor_.has("blind.lstm0.w_ih"), "trainer: not a blind store");
    OL_REQUIRE(critic_.get("vf.lstm0.w_ih").dim(1) == 64,
               "trainer: critic input width");
  }
}

// ---------------------------------------------------------------------------
// Collection
// ---------------------------------------------------------------------------

Rollout PpoTrainer::collect_episode(Rng& rng, int max_steps) {
  const bool teach = arm_.arch == ActorArch::Teacher;
  const EnvConfig& ec = cfg_.env;
  const int W = cfg_.ppo.bptt_window;
  const int cap = std::min(max_steps, ec.episode_ticks);

  const TerrainKind kind = static_cast<TerrainKind>(
      rng.categorical(std::span<const Real>(arm_.terrain_probs)));
  const TerrainSpec spec =
      sample_terrain_spec(kind, EvalTier::Train, cfg_.terrain, rng);
  const HeightField field = generate_terrain(spec, cfg_.terrain);

  const DomainRandomization dr =
      arm_.dr && cfg_.dr.enabled ? sample_domain_randomization(cfg_.dr, rng)
                                 : DomainRandomization{};

  Env env(&field, &ec);
  env.reset(dr, rng);
  HeightmapDelayLine delay;

  // Step-wise nets over the current parameters.
  const BlindNet* blind = nullptr;
  std::unique_ptr<BlindNet> blind_holder;
  std::unique_ptr<TeacherNet> teacher;
  if (teach) {
    teacher = std::make_unique<TeacherNet>(&actor_);
    if (teacher->has_base()) {
      blind_holder = std::make_unique<BlindNet>(&actor_);
      blind = blind_holder.get();
    }
  } else {
    blind_holder = std::make_unique<BlindNet>(&actor_);
    blind = blind_holder.get();
  }
  CriticNet critic(&critic_);
  const int ah = teach ? kDsHidden : kBlindHidden;
  const int ch = teach ? kDsHidden : kBlindHidden;
  LstmPair blind_s, blind_m_s, ds_s, vf_s;
  blind_s.reset(kBlindHidden);
  blind_m_s.reset(kBlindHidden);
  ds_s.reset(ah);
  vf_s.reset(ch);

  const Real* log_std =
      teach ? teacher->log_std() : actor_.get("blind.log_std").ptr();

  Rollout r;
  r.pc = Tensor({static_cast<std::size_t>(cap), ObsVec::kDim});
  if (teach) {
    r.hm = Tensor({static_cast<std::size_t>(cap), HeightMapObs::kSize});
    r.base = Tensor({static_cast<std::size_t>(cap), kActionDim});
    r.base_m = Tensor({static_cast<std::size_t>(cap), kActionDim});
  }
  r.extras = Tensor({static_cast<std::size_t>(cap), ExtrasVec::kDim});
  r.act = Tensor({static_cast<std::size_t>(cap), kActionDim});

  int next_push = arm_.perturbations
                      ? rng.uniform_int(cfg_.blind.perturb_gap_lo,
                                        cfg_.blind.perturb_gap_hi)
                      : -1;

  PolicyStepOut po;
  int t = 0;
  while (t < cap) {
    if (t % W == 0) {
      r.actor_h.push_back(teach ? ds_s : blind_s);
      r.critic_h.push_back(vf_s);
    }

    Real* obs = r.pc.row(static_cast<std::size_t>(t));
    build_obs(env.state(), env.command(), obs);
    if (dr.encoder_noise > 0)
      apply_encoder_noise(obs, dr.encoder_noise, rng);

    if (teach) {
      const HeightMapObs raw = extract_heightmap(
          field, env.state().x, env.state().y, env.state().z, env.state().yaw);
      const HeightMapObs seen = delay.process(raw, dr.hm, rng);
      concat_quadrants(seen, r.hm.row(static_cast<std::size_t>(t)));
      teacher->step(obs, r.hm.row(static_cast<std::size_t>(t)), blind_s, ds_s,
                    po);
      std::copy(po.base.begin(), po.base.end(),
                r.base.row(static_cast<std::size_t>(t)));
      Real obs_m[ObsVec::kDim];
      mirror_obs(obs, obs_m);
      if (blind)
        blind->step(obs_m, blind_m_s, r.base_m.row(static_cast<std::size_t>(t)));
    } else {
      blind->step(obs, blind_s, po.mean.data());
    }

    Real* a = r.act.row(static_cast<std::size_t>(t));
    for (int i = 0; i < kActionDim; ++i)
      a[i] = po.mean[i] + std::exp(log_std[i]) * rng.normal();
    r.logp.push_back(netcore::gaussian_logp(a, po.mean.data(), log_std,
                                            kActionDim));

    Real* ex = r.extras.row(static_cast<std::size_t>(t));
    build_extras(env.state(), env.command(), field, ec, ex);
    r.val.push_back(critic.step(ex, teach ? po.embed.data() : nullptr, vf_s));

    env.step(ActionVector::from_ptr(a));
    r.rew.push_back(env.last_reward());
    ++t;

    if (env.done()) break;
    if (next_push >= 0 && env.tick() >= next_push) {
      const Real ang = rng.uniform(0, kTwoPi);
      const Real mag = rng.uniform(0, cfg_.blind.perturb_mag);
      env.apply_velocity_impulse(mag * std::cos(ang), mag * std::sin(ang));
      next_push = env.tick() + rng.uniform_int(cfg_.blind.perturb_gap_lo,
                                               cfg_.blind.perturb_gap_hi);
    }
  }

  r.T = t;
  r.ended = env.done();
  r.term = env.termination();
  r.truncated = !r.ended || env.truncated();
  r.ep_return = std::accumulate(r.rew.begin(), r.rew.end(), Real{0});

  if (r.truncated) {
    // Value estimate for the state past the cut, from clean observations.
    Real obs[ObsVec::kDim];
    build_obs(env.state(), env.command(), obs);
    Real ex[ExtrasVec::kDim];
    build_extras(env.state(), env.command(), field, ec, ex);
    if (teach) {
      const HeightMapObs raw = extract_heightmap(
          field, env.state().x, env.state().y, env.state().z, env.state().yaw);
      Real hm[HeightMapObs::kSize];
      concat_quadrants(raw, hm);
      Real embed[kHmEmbed];
      teacher->embed_only(hm, embed);
      r.bootstrap = critic.step(ex, embed, vf_s);
    } else {
      r.bootstrap = critic.step(ex, nullptr, vf_s);
    }
  }
  return r;
}

std::vector<Rollout> PpoTrainer::collect() {
  std::vector<Rollout> out;
  for (int w = 0; w < cfg_.ppo.workers; ++w) {
    int remaining = cfg_.ppo.horizon;
    while (remaining > 0) {
      Rollout r = collect_episode(worker_rngs_[static_cast<std::size_t>(w)],
                                  remaining);
      remaining -= r.T;
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Update
// ---------------------------------------------------------------------------

void normalize_advantages(std::vector<GaeOut>& gae) {
  Real sum = 0;
  std::size_t n = 0;
  for (const auto& g : gae)
    for (Real a : g.adv) {
      sum += a;
      ++n;
    }
  OL_REQUIRE(n > 0, "normalize_advantages: empty batch");
  const Real mean = sum / static_cast<Real>(n);
  Real var = 0;
  for (const auto& g : gae)
    for (Real a : g.adv) var += (a - mean) * (a - mean);
  const Real inv = 1.0 / (std::sqrt(var / static_cast<Real>(n)) + 1e-8);
  for (auto& g : gae)
    for (Real& a : g.adv) a = (a - mean) * inv;
}

void PpoTrainer::update(std::vector<Rollout>& batch, IterStats& st) {
  const bool teach = arm_.arch == ActorArch::Teacher;
  const PpoConfig& pc = cfg_.ppo;
  const int W = pc.bptt_window;
  const int H = teach ? kDsHidden : kBlindHidden;

  std::vector<GaeOut> gae(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    gae[i] = compute_gae(batch[i].rew, batch[i].val, batch[i].bootstrap,
                         pc.gamma, pc.lam);
  normalize_advantages(gae);

  std::vector<ChunkRef> chunks;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (int t0 = 0, w = 0; t0 < batch[i].T; t0 += W, ++w)
      chunks.push_back({static_cast<int>(i), w, t0,
                        std::min(W, batch[i].T - t0)});

  // Parameter and gradient views.
  const std::string ap = teach ? "ds." : "blind.";
  const Tensor *fc0w{}, *fc0b{}, *fc1w{}, *fc1b{}, *pcw{}, *pcb{};
  if (teach) {
    fc0w = &actor_.get("hm.fc0.w");
    fc0b = &actor_.get("hm.fc0.b");
    fc1w = &actor_.get("hm.fc1.w");
    fc1b = &actor_.get("hm.fc1.b");
    pcw = &actor_.get("pc_enc.w");
    pcb = &actor_.get("pc_enc.b");
  }
  const LstmView l0 = lstm_view(actor_, ap + "lstm0");
  const LstmView l1 = lstm_view(actor_, ap + "lstm1");
  const Tensor& headw = actor_.get(ap + "head.w");
  const Tensor& headb = actor_.get(ap + "head.b");
  const std::string ls_name = teach ? "log_std" : "blind.log_std";
  const Tensor& logstd = actor_.get(ls_name);

  const Tensor& vencw = critic_.get("vf.enc.w");
  const Tensor& vencb = critic_.get("vf.enc.b");
  const LstmView v0 = lstm_view(critic_, "vf.lstm0");
  const LstmView v1 = lstm_view(critic_, "vf.lstm1");
  const Tensor& vheadw = critic_.get("vf.head.w");
  const Tensor& vheadb = critic_.get("vf.head.b");

  GradStore ga(actor_), gc(critic_);
  auto A = [&](const std::string& n) -> Tensor& {
    return ga.of(actor_.index_of(n));
  };
  auto C = [&](const std::string& n) -> Tensor& {
    return gc.of(critic_.index_of(n));
  };
  const LstmGradView gl0{&A(ap + "lstm0.w_ih"), &A(ap + "lstm0.w_hh"),
                         &A(ap + "lstm0.b")};
  const LstmGradView gl1{&A(ap + "lstm1.w_ih"), &A(ap + "lstm1.w_hh"),
                         &A(ap + "lstm1.b")};
  const LstmGradView gv0{&C("vf.lstm0.w_ih"), &C("vf.lstm0.w_hh"),
                         &C("vf.lstm0.b")};
  const LstmGradView gv1{&C("vf.lstm1.w_ih"), &C("vf.lstm1.w_hh"),
                         &C("vf.lstm1.b")};

  const auto& perm = mirror_hm_permutation();

  std::vector<std::size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const int n_mb = (static_cast<int>(chunks.size()) + pc.minibatch_chunks - 1) /
                   pc.minibatch_chunks;
  Real sum_pi = 0, sum_v = 0, sum_mir = 0, sum_gn = 0;
  Real sum_kl = 0, sum_clip = 0;
  std::size_t n_samples = 0;
  int mb_count = 0;

  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          learner_rng_.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (int mb = 0; mb < n_mb; ++mb) {
      const std::size_t lo = static_cast<std::size_t>(mb) *
                             static_cast<std::size_t>(pc.minibatch_chunks);
      const std::size_t hi =
          std::min(order.size(),
                   lo + static_cast<std::size_t>(pc.minibatch_chunks));
      if (lo >= hi) continue;
      std::size_t N = 0;
      for (std::size_t k = lo; k < hi; ++k)
        N += static_cast<std::size_t>(chunks[order[k]].len);
      const bool mirror_on =
          pc.mirror_coef > 0 && (mb_count % pc.mirror_every == 0);

      ga.zero();
      gc.zero();
      Real mb_pi = 0, mb_v = 0, mb_mir = 0;

      for (std::size_t k = lo; k < hi; ++k) {
        const ChunkRef& c = chunks[order[k]];
        const Rollout& R = batch[static_cast<std::size_t>(c.rollout)];
        const GaeOut& G = gae[static_cast<std::size_t>(c.rollout)];
        const int Tc = c.len;
        const std::size_t Ts = static_cast<std::size_t>(Tc);
        const LstmPair& h_act =
            R.actor_h[static_cast<std::size_t>(c.window)];
        const LstmPair& h_cri =
            R.critic_h[static_cast<std::size_t>(c.window)];
        auto vec_tensor = [](const std::vector<Real>& v) {
          Tensor t({v.size()});
          std::copy(v.begin(), v.end(), t.data.begin());
          return t;
        };

        // --- actor forward ---
        const Tensor PC = copy_rows(R.pc, c.t0, Tc);
        Tensor HM, A0, E, P;
        Tensor X;
        if (teach) {
          HM = copy_rows(R.hm, c.t0, Tc);
          netcore::dense_forward(*fc0w, *fc0b, HM, A0, Act::Relu);
          netcore::dense_forward(*fc1w, *fc1b, A0, E, Act::Relu);
          netcore::dense_forward(*pcw, *pcb, PC, P, Act::Linear);
          X = Tensor({Ts, static_cast<std::size_t>(kDsInput)});
          for (int t = 0; t < Tc; ++t) {
            Real* x = X.row(static_cast<std::size_t>(t));
            std::memcpy(x, P.row(static_cast<std::size_t>(t)),
                        sizeof(Real) * kPcEnc);
            std::memcpy(x + kPcEnc, E.row(static_cast<std::size_t>(t)),
                        sizeof(Real) * kHmEmbed);
            std::memcpy(x + kPcEnc + kHmEmbed,
                        R.base.row(static_cast<std::size_t>(c.t0 + t)),
                        sizeof(Real) * kActionDim);
          }
        } else {
          X = PC;
        }
        LstmCache cc0, cc1;
        netcore::lstm_forward(l0, X, vec_tensor(h_act.h0), vec_tensor(h_act.c0),
                              cc0);
        netcore::lstm_forward(l1, cc0.h, vec_tensor(h_act.h1),
                              vec_tensor(h_act.c1), cc1);
        Tensor DIFF;
        netcore::dense_forward(headw, headb, cc1.h, DIFF, Act::Linear);
        Tensor MU = DIFF;
        if (teach)
          for (int t = 0; t < Tc; ++t) {
            Real* m = MU.row(static_cast<std::size_t>(t));
            const Real* b = R.base.row(static_cast<std::size_t>(c.t0 + t));
            for (int i = 0; i < kActionDim; ++i) m[i] += b[i];
          }

        // --- critic forward ---
        const Tensor EX = copy_rows(R.extras, c.t0, Tc);
        Tensor ENC;
        netcore::dense_forward(vencw, vencb, EX, ENC, Act::Relu);
        Tensor XV;
        if (teach) {
          XV = Tensor({Ts, 64 + static_cast<std::size_t>(kHmEmbed)});
          for (int t = 0; t < Tc; ++t) {
            Real* x = XV.row(static_cast<std::size_t>(t));
            std::memcpy(x, ENC.row(static_cast<std::size_t>(t)),
                        sizeof(Real) * 64);
            std::memcpy(x + 64, E.row(static_cast<std::size_t>(t)),
                        sizeof(Real) * kHmEmbed);
          }
        } else {
          XV = ENC;
        }
        LstmCache vc0, vc1;
        netcore::lstm_forward(v0, XV, vec_tensor(h_cri.h0),
                              vec_tensor(h_cri.c0), vc0);
        netcore::lstm_forward(v1, vc0.h, vec_tensor(h_cri.h1),
                              vec_tensor(h_cri.c1), vc1);
        Tensor V;
        netcore::dense_forward(vheadw, vheadb, vc1.h, V, Act::Linear);

        // --- per-step losses ---
        Tensor dMU({Ts, kActionDim});
        Tensor dV({Ts, 1});
        Real* dls = A(ls_name).ptr();
        const Real invN = 1.0 / static_cast<Real>(N);
        for (int t = 0; t < Tc; ++t) {
          const std::size_t gt = static_cast<std::size_t>(c.t0 + t);
          const Real* a = R.act.row(gt);
          const Real* m = MU.row(static_cast<std::size_t>(t));
          const Real lp_old = R.logp[gt];
          const Real adv = G.adv[gt];
          const Real lp_new =
              netcore::gaussian_logp(a, m, logstd.ptr(), kActionDim);
          mb_pi += ppo_surrogate(lp_new, lp_old, adv, pc.clip) * invN;
          const Real coef =
              ppo_surrogate_dlogp(lp_new, lp_old, adv, pc.clip) * invN;
          netcore::gaussian_logp_backward(a, m, logstd.ptr(), kActionDim, coef,
                                          dMU.row(static_cast<std::size_t>(t)),
                                          dls);
          const Real ratio = std::exp(lp_new - lp_old);
          sum_kl += lp_old - lp_new;
          sum_clip += std::fabs(ratio - 1) > pc.clip ? 1.0 : 0.0;
          ++n_samples;

          const Real vdiff = V(static_cast<std::size_t>(t), 0) - G.ret[gt];
          mb_v += 0.5 * vdiff * vdiff * invN;
          dV(static_cast<std::size_t>(t), 0) = pc.vf_coef * vdiff * invN;
        }

        // --- mirror branch ---
        if (mirror_on) {
          Tensor PCm({Ts, ObsVec::kDim});
          for (int t = 0; t < Tc; ++t)
            mirror_obs(PC.row(static_cast<std::size_t>(t)),
                       PCm.row(static_cast<std::size_t>(t)));
          Tensor Xm, A0m, Em, Pm, HMm;
          if (teach) {
            HMm = Tensor({Ts, HeightMapObs::kSize});
            for (int t = 0; t < Tc; ++t) {
              const Real* src = HM.row(static_cast<std::size_t>(t));
              Real* dst = HMm.row(static_cast<std::size_t>(t));
              for (int i = 0; i < HeightMapObs::kSize; ++i)
                dst[i] = src[perm[static_cast<std::size_t>(i)]];
            }
            netcore::dense_forward(*fc0w, *fc0b, HMm, A0m, Act::Relu);
            netcore::dense_forward(*fc1w, *fc1b, A0m, Em, Act::Relu);
            netcore::dense_forward(*pcw, *pcb, PCm, Pm, Act::Linear);
            Xm = Tensor({Ts, static_cast<std::size_t>(kDsInput)});
            for (int t = 0; t < Tc; ++t) {
              Real* x = Xm.row(static_cast<std::size_t>(t));
              std::memcpy(x, Pm.row(static_cast<std::size_t>(t)),
                          sizeof(Real) * kPcEnc);
              std::memcpy(x + kPcEnc, Em.row(static_cast<std::size_t>(t)),
                          sizeof(Real) * kHmEmbed);
              std::memcpy(x + kPcEnc + kHmEmbed,
                          R.base_m.row(static_cast<std::size_t>(c.t0 + t)),
                          sizeof(Real) * kActionDim);
            }
          } else {
            Xm = PCm;
          }
          LstmCache mc0, mc1;
          netcore::lstm_forward(l0, Xm, vec_tensor(h_act.h0),
                                vec_tensor(h_act.c0), mc0);
          netcore::lstm_forward(l1, mc0.h, vec_tensor(h_act.h1),
                                vec_tensor(h_act.c1), mc1);
          Tensor DIFFm;
          netcore::dense_forward(headw, headb, mc1.h, DIFFm, Act::Linear);
          Tensor MUm = DIFFm;
          if (teach)
            for (int t = 0; t < Tc; ++t) {
              Real* m = MUm.row(static_cast<std::size_t>(t));
              const Real* b =
                  R.base_m.row(static_cast<std::size_t>(c.t0 + t));
              for (int i = 0; i < kActionDim; ++i) m[i] += b[i];
            }

          Tensor dMUm({Ts, kActionDim});
          for (int t = 0; t < Tc; ++t) {
            Real mm[kActionDim];
            mirror_action(MU.row(static_cast<std::size_t>(t)), mm);
            Real* dm = dMUm.row(static_cast<std::size_t>(t));
            Real gback[kActionDim];
            const Real* mu_m = MUm.row(static_cast<std::size_t>(t));
            for (int i = 0; i < kActionDim; ++i) {
              const Real d = mu_m[i] - mm[i];
              mb_mir += pc.mirror_coef * d * d * invN;
              dm[i] = 2 * pc.mirror_coef * d * invN;
              gback[i] = -dm[i];
            }
            Real gmain[kActionDim];
            mirror_action(gback, gmain);
            Real* dmu = dMU.row(static_cast<std::size_t>(t));
            for (int i = 0; i < kActionDim; ++i) dmu[i] += gmain[i];
          }

          // backward through the mirrored branch
          Tensor dH1m({Ts, static_cast<std::size_t>(H)});
          netcore::dense_backward(headw, mc1.h, DIFFm, dMUm,
                                  A(ap + "head.w"), A(ap + "head.b"), &dH1m,
                                  Act::Linear);
          Tensor dH0m({Ts, static_cast<std::size_t>(H)});
          netcore::lstm_backward(l1, mc0.h, mc1, dH1m, gl1, &dH0m);
          if (teach) {
            Tensor dXm({Ts, static_cast<std::size_t>(kDsInput)});
            netcore::lstm_backward(l0, Xm, mc0, dH0m, gl0, &dXm);
            Tensor dPm({Ts, static_cast<std::size_t>(kPcEnc)});
            Tensor dEm({Ts, static_cast<std::size_t>(kHmEmbed)});
            for (int t = 0; t < Tc; ++t) {
              const Real* x = dXm.row(static_cast<std::size_t>(t));
              std::memcpy(dPm.row(static_cast<std::size_t>(t)), x,
                          sizeof(Real) * kPcEnc);
              std::memcpy(dEm.row(static_cast<std::size_t>(t)), x + kPcEnc,
                          sizeof(Real) * kHmEmbed);
            }
            netcore::dense_backward(*pcw, PCm, Pm, dPm, A("pc_enc.w"),
                                    A("pc_enc.b"), nullptr, Act::Linear);
            Tensor dA0m({Ts, 256});
            netcore::dense_backward(*fc1w, A0m, Em, dEm, A("hm.fc1.w"),
                                    A("hm.fc1.b"), &dA0m, Act::Relu);
            netcore::dense_backward(*fc0w, HMm, A0m, dA0m, A("hm.fc0.w"),
                                    A("hm.fc0.b"), nullptr, Act::Relu);
          } else {
            netcore::lstm_backward(l0, Xm, mc0, dH0m, gl0, nullptr);
          }
        }

        // --- main backward: actor, then critic, then the shared embedding ---
        Tensor dH1({Ts, static_cast<std::size_t>(H)});
        netcore::dense_backward(headw, cc1.h, DIFF, dMU, A(ap + "head.w"),
                                A(ap + "head.b"), &dH1, Act::Linear);
        Tensor dH0({Ts, static_cast<std::size_t>(H)});
        netcore::lstm_backward(l1, cc0.h, cc1, dH1, gl1, &dH0);
        Tensor dE;
        if (teach) {
          Tensor dX({Ts, static_cast<std::size_t>(kDsInput)});
          netcore::lstm_backward(l0, X, cc0, dH0, gl0, &dX);
          Tensor dP({Ts, static_cast<std::size_t>(kPcEnc)});
          dE = Tensor({Ts, static_cast<std::size_t>(kHmEmbed)});
          for (int t = 0; t < Tc; ++t) {
            const Real* x = dX.row(static_cast<std::size_t>(t));
            std::memcpy(dP.row(static_cast<std::size_t>(t)), x,
                        sizeof(Real) * kPcEnc);
            std::memcpy(dE.row(static_cast<std::size_t>(t)), x + kPcEnc,
                        sizeof(Real) * kHmEmbed);
          }
          netcore::dense_backward(*pcw, PC, P, dP, A("pc_enc.w"),
                                  A("pc_enc.b"), nullptr, Act::Linear);
        } else {
          netcore::lstm_backward(l0, X, cc0, dH0, gl0, nullptr);
        }

        Tensor dHv1({Ts, static_cast<std::size_t>(H)});
        netcore::dense_backward(vheadw, vc1.h, V, dV, C("vf.head.w"),
                                C("vf.head.b"), &dHv1, Act::Linear);
        Tensor dHv0({Ts, static_cast<std::size_t>(H)});
        netcore::lstm_backward(v1, vc0.h, vc1, dHv1, gv1, &dHv0);
        Tensor dXv({Ts, XV.dim(1)});
        netcore::lstm_backward(v0, XV, vc0, dHv0, gv0, &dXv);
        Tensor dENC({Ts, 64});
        for (int t = 0; t < Tc; ++t)
          std::memcpy(dENC.row(static_cast<std::size_t>(t)),
                      dXv.row(static_cast<std::size_t>(t)), sizeof(Real) * 64);
        netcore::dense_backward(vencw, EX, ENC, dENC, C("vf.enc.w"),
                                C("vf.enc.b"), nullptr, Act::Relu);
        if (teach) {
          // value gradients flow into the shared terrain embedding
          for (int t = 0; t < Tc; ++t) {
            const Real* xv = dXv.row(static_cast<std::size_t>(t)) + 64;
            Real* e = dE.row(static_cast<std::size_t>(t));
            for (int i = 0; i < kHmEmbed; ++i) e[i] += xv[i];
          }
          Tensor dA0({Ts, 256});
          netcore::dense_backward(*fc1w, A0, E, dE, A("hm.fc1.w"),
                                  A("hm.fc1.b"), &dA0, Act::Relu);
          netcore::dense_backward(*fc0w, HM, A0, dA0, A("hm.fc0.w"),
                                  A("hm.fc0.b"), nullptr, Act::Relu);
        }
      }

      // entropy bonus: H is state-independent, so it contributes one constant
      // gradient per log-std entry
      {
        Real* dls = A(ls_name).ptr();
        for (int i = 0; i < kActionDim; ++i) dls[i] -= pc.ent_coef;
      }

      const Real gn = netcore::clip_grad_norm(ga, trainable_,
                                              pc.max_grad_norm);
      netcore::clip_grad_norm(gc, adam_critic_.trainable(), pc.max_grad_norm);
      netcore::AdamConfig ac;
      ac.lr = pc.lr;
      adam_actor_.step(actor_, ga, ac);
      adam_critic_.step(critic_, gc, ac);

      sum_pi += mb_pi;
      sum_v += mb_v;
      sum_mir += mb_mir;
      sum_gn += gn;
      ++mb_count;
    }
  }

  for (std::size_t i = 0; i < actor_.size(); ++i)
    OL_REQUIRE(actor_.tensor(i).all_finite(),
               "ppo_update: non-finite parameter in " + actor_.name(i));

  st.loss_pi = sum_pi / mb_count;
  st.loss_v = sum_v / mb_count;
  st.loss_mirror = sum_mir / mb_count;
  st.grad_norm = sum_gn / mb_count;
  st.entropy = netcore::gaussian_entropy(logstd.ptr(), kActionDim);
  st.approx_kl = sum_kl / static_cast<Real>(n_samples);
  st.clip_frac = sum_clip / static_cast<Real>(n_samples);
}

IterStats PpoTrainer::iterate() {
  std::vector<Rollout> batch = collect();

  IterStats st;
  std::size_t steps = 0;
  std::vector<Real> returns;
  Real len_sum = 0, succ = 0;
  for (const Rollout& r : batch) {
    steps += static_cast<std::size_t>(r.T);
    if (!r.ended) continue;
    returns.push_back(r.ep_return);
    len_sum += r.T;
    succ += r.term == TerminationReason::None ? 1.0 : 0.0;
  }
  samples_ += steps;
  st.samples = static_cast<Real>(steps);
  st.episodes = static_cast<Real>(returns.size());
  if (!returns.empty()) {
    Real m = 0;
    for (Real v : returns) m += v;
    m /= static_cast<Real>(returns.size());
    Real var = 0;
    for (Real v : returns) var += (v - m) * (v - m);
    st.ret_mean = m;
    st.ret_std = std::sqrt(var / static_cast<Real>(returns.size()));
    st.ep_len = len_sum / static_cast<Real>(returns.size());
    st.success = succ / static_cast<Real>(returns.size());
  }

  update(batch, st);
  ++iter_;
  history_.push_back(st);
  return st;
}

std::vector<std::string> PpoTrainer::log_columns() {
  return {"iter",    "samples",  "ret_mean",    "ret_std",   "ep_len",
          "success", "loss_pi",  "loss_v",      "entropy",   "loss_mirror",
          "approx_kl", "clip_frac", "grad_norm"};
}

std::vector<Real> PpoTrainer::log_row(int iter, std::uint64_t samples,
                                      const IterStats& st) {
  return {static_cast<Real>(iter),
          static_cast<Real>(samples),
          st.ret_mean,
          st.ret_std,
          st.ep_len,
          st.success,
          st.loss_pi,
          st.loss_v,
          st.entropy,
          st.loss_mirror,
          st.approx_kl,
          st.clip_frac,
          st.grad_norm};
}

void PpoTrainer::run(std::ostream& log, const std::string& checkpoint_dir) {
  logio::TableWriter table(
      log, "train",
      {{"arch", actor_.arch_tag},
       {"config_hash", config_hash_hex(cfg_)},
       {"init_seed", std::to_string(actor_.init_seed)}},
      log_columns());
  while (iter_ < cfg_.ppo.iterations) {
    const IterStats st = iterate();
    table.row(log_row(iter_, samples_, st));
    if (!checkpoint_dir.empty() && cfg_.ppo.checkpoint_every > 0 &&
        iter_ % cfg_.ppo.checkpoint_every == 0)
      save_checkpoint(checkpoint_dir + "/ckpt-" + std::to_string(iter_) +
                      ".bin");
  }
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

void PpoTrainer::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("checkpoint: cannot write " + path);
  const char magic[4] = {'O', 'L', 'C', 'K'};
  os.write(magic, 4);
  const std::uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint32_t arch = arm_.arch == ActorArch::Teacher ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&arch), sizeof arch);
  const std::int64_t it = iter_;
  os.write(reinterpret_cast<const char*>(&it), sizeof it);
  os.write(reinterpret_cast<const char*>(&samples_), sizeof samples_);
  write_string(os, learner_rng_.save_state());
  const std::uint64_t nw = worker_rngs_.size();
  os.write(reinterpret_cast<const char*>(&nw), sizeof nw);
  for (const Rng& r : worker_rngs_) write_string(os, r.save_state());
  actor_.write(os);
  critic_.write(os);
  adam_actor_.write(os);
  adam_critic_.write(os);
  OL_REQUIRE(os.good(), "checkpoint: write failed for " + path);
}

void PpoTrainer::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  OL_REQUIRE(is.good() && std::memcmp(magic, "OLCK", 4) == 0,
             "checkpoint: bad magic in " + path);
  std::uint32_t version = 0, arch = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  OL_REQUIRE(version == 1, "checkpoint: unsupported version");
  is.read(reinterpret_cast<char*>(&arch), sizeof arch);
  OL_REQUIRE((arch == 1) == (arm_.arch == ActorArch::Teacher),
             "checkpoint: architecture mismatch");
  std::int64_t it = 0;
  is.read(reinterpret_cast<char*>(&it), sizeof it);
  is.read(reinterpret_cast<char*>(&samples_), sizeof samples_);
  iter_ = static_cast<int>(it);
  learner_rng_.load_state(read_string(is));
  std::uint64_t nw = 0;
  is.read(reinterpret_cast<char*>(&nw), sizeof nw);
  OL_REQUIRE(nw == worker_rngs_.size(), "checkpoint: worker count mismatch");
  for (Rng& r : worker_rngs_) r.load_state(read_string(is));
  const std::string atag = actor_.arch_tag, ctag = critic_.arch_tag;
  actor_ = ParameterStore::read(is, atag);
  critic_ = ParameterStore::read(is, ctag);
  adam_actor_.read(is, actor_);
  adam_critic_.read(is, critic_);
  OL_REQUIRE(is.good(), "checkpoint: truncated file " + path);
}

// ---------------------------------------------------------------------------
// Standard arms
// ---------------------------------------------------------------------------

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return splitmix64(s);
}

}  // namespace

PpoTrainer make_blind_trainer(const RunConfig& cfg, std::uint64_t seed) {
  RunConfig c = cfg;
  c.ppo.iterations = cfg.blind.iterations;
  TrainArm arm;
  arm.arch = ActorArch::Blind;
  arm.terrain_probs = {cfg.blind.flat_prob, 1 - cfg.blind.flat_prob, 0, 0, 0};
  arm.perturbations = cfg.blind.perturbations;
  return PpoTrainer(c, arm, init_blind_params(derive(seed, 1)),
                    init_critic_params(derive(seed, 2), false),
                    derive(seed, 3));
}

PpoTrainer make_blind_terrain_trainer(const RunConfig& cfg,
                                      std::uint64_t seed) {
  RunConfig c = cfg;
  c.ppo.iterations = cfg.teacher.iterations;
  TrainArm arm;
  arm.arch = ActorArch::Blind;
  arm.terrain_probs = kTerrainKindProbs;
  return PpoTrainer(c, arm, init_blind_params(derive(seed, 1)),
                    init_critic_params(derive(seed, 2), false),
                    derive(seed, 3));
}

PpoTrainer make_teacher_trainer(const RunConfig& cfg,
                                const netcore::ParameterStore* blind,
                                std::uint64_t seed) {
  RunConfig c = cfg;
  c.ppo.iterations = cfg.teacher.iterations;
  TrainArm arm;
  arm.arch = ActorArch::Teacher;
  arm.terrain_probs = kTerrainKindProbs;
  return PpoTrainer(c, arm, init_teacher_params(derive(seed, 4), blind),
                    init_critic_params(derive(seed, 5), true),
                    derive(seed, 6));
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

Real probe_tracking_vx(const netcore::ParameterStore& blind,
                       const RunConfig& cfg, Real vx_cmd, int episodes,
                       std::uint64_t seed) {
  TerrainSpec spec;
  spec.kind = TerrainKind::Flat;
  spec.seed = 1;
  const HeightField field = generate_terrain(spec, cfg.terrain);
  const BlindNet net(&blind);
  Command cmd;
  cmd.vx = vx_cmd;
  cmd.height = 0.8;
  const DomainRandomization nominal{};
  const Rng root(seed);
  Real sum = 0;
  std::size_t n = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = root.spawn(static_cast<std::uint64_t>(e));
    RobotState s = reset_state(field, cmd, cfg.env, rng);
    LstmPair hs;
    hs.reset(kBlindHidden);
    Real obs[ObsVec::kDim];
    Real mean[kActionDim];
    for (int t = 0; t < cfg.env.episode_ticks; ++t) {
      build_obs(s, cmd, obs);
      net.step(obs, hs, mean);
      step_env(s, ActionVector::from_ptr(mean), cmd, field, nominal, cfg.env);
      if (check_termination(s, field, cmd, cfg.env) !=
          TerminationReason::None)
        break;
      sum += s.vx;
      ++n;
    }
  }
  return n ? sum / static_cast<Real>(n) : 0.0;
}

long long samples_to_threshold(std::span<const Real> samples,
                               std::span<const Real> returns, Real threshold,
                               int smooth_window) {
  OL_REQUIRE(samples.size() == returns.size(),
             "samples_to_threshold: length mismatch");
  OL_REQUIRE(smooth_window > 0, "samples_to_threshold: window");
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const std::size_t lo =
        i + 1 >= static_cast<std::size_t>(smooth_window)
            ? i + 1 - static_cast<std::size_t>(smooth_window)
            : 0;
    Real m = 0;
    for (std::size_t j = lo; j <= i; ++j) m += returns[j];
    m /= static_cast<Real>(i - lo + 1);
    if (m >= threshold) return static_cast<long long>(samples[i]);
  }
  return -1;
}

}  // namespace omniloco
