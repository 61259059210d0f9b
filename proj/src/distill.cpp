#include "omniloco/distill.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "omniloco/evalsuite.hpp"
#include "omniloco/logio.hpp"
#include "omniloco/netcore.hpp"
#include "omniloco/parallel.hpp"
#include "omniloco/perception.hpp"
#include "omniloco/simworld.hpp"

namespace omniloco {

using netcore::Act;
using netcore::LstmCache;
using netcore::LstmGradView;
using netcore::LstmView;
using netcore::ParameterStore;

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return splitmix64(s);
}

Tensor copy_rows(const Tensor& src, int t0, int len) {
  Tensor out({static_cast<std::size_t>(len), src.dim(1)});
  std::memcpy(out.ptr(), src.row(static_cast<std::size_t>(t0)),
              sizeof(Real) * out.numel());
  return out;
}

LstmView lstm_view(const ParameterStore& p, const std::string& name) {
  return {&p.get(name + ".w_ih"), &p.get(name + ".w_hh"), &p.get(name + ".b")};
}

Tensor vec_tensor(const std::vector<Real>& v) {
  Tensor t({v.size()});
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

void pack_depth(const DepthQuad& q, float* row) {
  constexpr int kPix = DepthImage::kRes * DepthImage::kRes;
  for (int cam = 0; cam < 4; ++cam)
    for (int i = 0; i < kPix; ++i)
      row[cam * kPix + i] = static_cast<float>(q[cam].d[i]);
}

DepthImage unpack_image(const float* row, int cam) {
  constexpr int kPix = DepthImage::kRes * DepthImage::kRes;
  DepthImage img;
  for (int i = 0; i < kPix; ++i)
    img.d[i] = static_cast<Real>(row[cam * kPix + i]);
  return img;
}

DepthQuad unpack_quad(const float* row) {
  DepthQuad q;
  for (int cam = 0; cam < 4; ++cam) q[cam] = unpack_image(row, cam);
  return q;
}

// d relu(y) / d pre-activation, using the post-activation values.
void mask_relu(const Tensor& post, Tensor& grad) {
  for (std::size_t i = 0; i < grad.numel(); ++i)
    if (post(i) <= 0) grad(i) = 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Collection
// ---------------------------------------------------------------------------

DistillEpisode collect_episode(const ParameterStore& student,
                               const ParameterStore& teacher,
                               const RunConfig& cfg, Rng rng,
                               RenderCounter* counter) {
  const TerrainKind kind = static_cast<TerrainKind>(
      rng.categorical(std::span<const Real>(kTerrainKindProbs)));
  const TerrainSpec spec =
      sample_terrain_spec(kind, EvalTier::Train, cfg.terrain, rng);
  const HeightField field = generate_terrain(spec, cfg.terrain);
  const DomainRandomization dr = cfg.dr.enabled
                                     ? sample_domain_randomization(cfg.dr, rng)
                                     : DomainRandomization{};
  Env env(&field, &cfg.env);
  env.reset(dr, rng);

  const StudentNet snet(&student);
  const TeacherNet tnet(&teacher);
  OL_REQUIRE(snet.has_base() == tnet.has_base(),
             "collect_episode: student/teacher base mismatch");
  const bool has_base = tnet.has_base();
  std::unique_ptr<BlindNet> blind;
  if (has_base) blind = std::make_unique<BlindNet>(&student);

  LstmPair bs, ds_s, ds_t;
  bs.reset(kBlindHidden);
  ds_s.reset(kDsHidden);
  ds_t.reset(kDsHidden);

  const int cap = cfg.env.episode_ticks;
  const std::size_t capz = static_cast<std::size_t>(cap);
  DistillEpisode ep;
  ep.kind = kind;
  ep.pc = Tensor({capz, ObsVec::kDim});
  ep.hm = Tensor({capz, kQuadrantConcatSize});
  ep.embed = Tensor({capz, kHmEmbed});
  ep.base = Tensor({capz, kActionDim});
  ep.mean = Tensor({capz, kActionDim});
  ep.depth.assign(capz * DistillEpisode::kDepthRow, 0.0f);

  PolicyStepOut po_s, po_t;
  std::array<Real, kHmEmbed> embed_s;
  int t = 0;
  while (!env.done()) {
    const RobotState& s = env.state();
    Real* obs = ep.pc.row(static_cast<std::size_t>(t));
    build_obs(s, env.command(), obs);
    if (dr.encoder_noise > 0) apply_encoder_noise(obs, dr.encoder_noise, rng);

    const HeightMapObs raw = extract_heightmap(field, s.x, s.y, s.z, s.yaw);
    concat_quadrants(raw, ep.hm.row(static_cast<std::size_t>(t)));
    tnet.embed_only(ep.hm.row(static_cast<std::size_t>(t)),
                    ep.embed.row(static_cast<std::size_t>(t)));

    const DepthQuad depth =
        render_depth(field, s.x, s.y, s.z, s.yaw, cfg.rig, counter);
    pack_depth(depth, ep.depth_row(t));

    Real* base = ep.base.row(static_cast<std::size_t>(t));
    if (has_base)
      blind->step(obs, bs, base);
    else
      std::fill(base, base + kActionDim, Real(0));

    snet.encode(depth, embed_s.data());
    snet.step_from(obs, embed_s.data(), base, ds_s, po_s);
    tnet.step_from(obs, ep.embed.row(static_cast<std::size_t>(t)), base, ds_t,
                   po_t);
    std::copy(po_t.mean.begin(), po_t.mean.end(),
              ep.mean.row(static_cast<std::size_t>(t)));

    const StepEvents ev = env.step(ActionVector::from_array(po_s.mean));
    OL_REQUIRE(!ev.fault, "collect_episode: simulation fault");
    ++t;
  }

  ep.T = t;
  if (t < cap) {
    ep.pc = copy_rows(ep.pc, 0, t);
    ep.hm = copy_rows(ep.hm, 0, t);
    ep.embed = copy_rows(ep.embed, 0, t);
    ep.base = copy_rows(ep.base, 0, t);
    ep.mean = copy_rows(ep.mean, 0, t);
    ep.depth.resize(static_cast<std::size_t>(t) * DistillEpisode::kDepthRow);
  }
  return ep;
}

void dagger_collect(DistillBuffer& buf, const ParameterStore& student,
                    const ParameterStore& teacher, const RunConfig& cfg,
                    const Rng& root, std::uint64_t stream0, int n_episodes) {
  const std::size_t first = buf.episodes.size();
  buf.episodes.resize(first + static_cast<std::size_t>(n_episodes));
  std::vector<RenderCounter> counters(static_cast<std::size_t>(n_episodes));
  parallel::for_each_index(
      static_cast<std::size_t>(n_episodes), [&](std::size_t i) {
        buf.episodes[first + i] = collect_episode(
            student, teacher, cfg, root.spawn(stream0 + i), &counters[i]);
      });
  for (std::size_t i = 0; i < counters.size(); ++i) {
    const DistillEpisode& ep = buf.episodes[first + i];
    OL_REQUIRE(counters[i].frames ==
                   4 * static_cast<std::uint64_t>(ep.T),
               "dagger_collect: render accounting");
    buf.render_count += counters[i].frames;
    buf.pair_count += static_cast<std::uint64_t>(ep.T);
    buf.env_steps += static_cast<std::uint64_t>(ep.T);
  }
}

// ---------------------------------------------------------------------------
// Command injection
// ---------------------------------------------------------------------------

DistillEpisode::Variant make_variant(const DistillEpisode& ep,
                                     const ParameterStore& teacher,
                                     const Command* cmd) {
  const TeacherNet tnet(&teacher);
  const bool has_base = tnet.has_base();
  std::unique_ptr<BlindNet> blind;
  if (has_base) blind = std::make_unique<BlindNet>(&teacher);

  DistillEpisode::Variant v;
  if (cmd) v.cmd = *cmd;
  const std::size_t Tz = static_cast<std::size_t>(ep.T);
  v.base = Tensor({Tz, kActionDim});
  v.mean = Tensor({Tz, kActionDim});

  LstmPair bs, ds;
  bs.reset(kBlindHidden);
  ds.reset(kDsHidden);
  PolicyStepOut po;
  Real obs[ObsVec::kDim];
  for (int t = 0; t < ep.T; ++t) {
    std::memcpy(obs, ep.pc.row(static_cast<std::size_t>(t)),
                sizeof(Real) * ObsVec::kDim);
    if (cmd) {
      obs[ObsVec::kCmdVx] = cmd->vx;
      obs[ObsVec::kCmdVy] = cmd->vy;
      obs[ObsVec::kCmdYaw] = cmd->yaw_rate;
    }
    Real* base = v.base.row(static_cast<std::size_t>(t));
    if (has_base)
      blind->step(obs, bs, base);
    else
      std::fill(base, base + kActionDim, Real(0));
    tnet.step_from(obs, ep.embed.row(static_cast<std::size_t>(t)), base, ds,
                   po);
    std::copy(po.mean.begin(), po.mean.end(),
              v.mean.row(static_cast<std::size_t>(t)));
  }
  return v;
}

void inject_commands(DistillBuffer& buf, std::size_t first_episode,
                     const InjectionConfig& spec, const ParameterStore& teacher,
                     Rng& rng) {
  for (std::size_t e = first_episode; e < buf.episodes.size(); ++e) {
    DistillEpisode& ep = buf.episodes[e];
    for (int k = 0; k < spec.k; ++k) {
      Command c;
      c.vx = rng.uniform(spec.vx.lo, spec.vx.hi);
      c.vy = rng.uniform(spec.vy.lo, spec.vy.hi);
      c.yaw_rate = rng.uniform(spec.yaw_rate.lo, spec.yaw_rate.hi);
      OL_REQUIRE(c.vx >= spec.vx.lo && c.vx <= spec.vx.hi &&
                     c.vy >= spec.vy.lo && c.vy <= spec.vy.hi &&
                     c.yaw_rate >= spec.yaw_rate.lo &&
                     c.yaw_rate <= spec.yaw_rate.hi,
                 "inject_commands: draw out of range");
      ep.variants.push_back(make_variant(ep, teacher, &c));
      buf.pair_count += static_cast<std::uint64_t>(ep.T);
    }
  }
}

// ---------------------------------------------------------------------------
// Buffer files
// ---------------------------------------------------------------------------

namespace {

constexpr char kBufMagic[4] = {'O', 'L', 'D', 'B'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  OL_REQUIRE(is.good(), "buffer file: truncated");
  return v;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put(os, static_cast<std::uint64_t>(t.numel()));
  os.write(reinterpret_cast<const char*>(t.ptr()),
           static_cast<std::streamsize>(sizeof(Real) * t.numel()));
}

Tensor take_tensor(std::istream& is, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  const auto n = take<std::uint64_t>(is);
  OL_REQUIRE(n == t.numel(), "buffer file: tensor size mismatch");
  is.read(reinterpret_cast<char*>(t.ptr()),
          static_cast<std::streamsize>(sizeof(Real) * t.numel()));
  OL_REQUIRE(is.good(), "buffer file: truncated tensor");
  return t;
}

}  // namespace

void save_buffer(const DistillBuffer& buf, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  OL_REQUIRE(os.good(), "save_buffer: cannot open " + path);
  os.write(kBufMagic, 4);
  put(os, std::uint32_t{1});
  put(os, buf.render_count);
  put(os, buf.pair_count);
  put(os, buf.env_steps);
  put(os, static_cast<std::uint32_t>(buf.episodes.size()));
  for (const DistillEpisode& ep : buf.episodes) {
    put(os, static_cast<std::int32_t>(ep.T));
    put(os, static_cast<std::int32_t>(ep.kind));
    put_tensor(os, ep.pc);
    put_tensor(os, ep.hm);
    put_tensor(os, ep.embed);
    put_tensor(os, ep.base);
    put_tensor(os, ep.mean);
    put(os, static_cast<std::uint64_t>(ep.depth.size()));
    os.write(reinterpret_cast<const char*>(ep.depth.data()),
             static_cast<std::streamsize>(sizeof(float) * ep.depth.size()));
    put(os, static_cast<std::uint32_t>(ep.variants.size()));
    for (const auto& v : ep.variants) {
      put(os, v.cmd.vx);
      put(os, v.cmd.vy);
      put(os, v.cmd.yaw_rate);
      put(os, v.cmd.height);
      put_tensor(os, v.base);
      put_tensor(os, v.mean);
    }
  }
  OL_REQUIRE(os.good(), "save_buffer: write failed");
}

DistillBuffer load_buffer(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  OL_REQUIRE(is.good(), "load_buffer: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  OL_REQUIRE(is.good() && std::memcmp(magic, kBufMagic, 4) == 0,
             "load_buffer: bad magic");
  OL_REQUIRE(take<std::uint32_t>(is) == 1, "load_buffer: bad version");
  DistillBuffer buf;
  buf.render_count = take<std::uint64_t>(is);
  buf.pair_count = take<std::uint64_t>(is);
  buf.env_steps = take<std::uint64_t>(is);
  const auto n = take<std::uint32_t>(is);
  buf.episodes.resize(n);
  for (DistillEpisode& ep : buf.episodes) {
    ep.T = take<std::int32_t>(is);
    ep.kind = static_cast<TerrainKind>(take<std::int32_t>(is));
    const std::size_t Tz = static_cast<std::size_t>(ep.T);
    ep.pc = take_tensor(is, {Tz, ObsVec::kDim});
    ep.hm = take_tensor(is, {Tz, kQuadrantConcatSize});
    ep.embed = take_tensor(is, {Tz, kHmEmbed});
    ep.base = take_tensor(is, {Tz, kActionDim});
    ep.mean = take_tensor(is, {Tz, kActionDim});
    const auto dn = take<std::uint64_t>(is);
    OL_REQUIRE(dn == Tz * DistillEpisode::kDepthRow,
               "load_buffer: depth size mismatch");
    ep.depth.resize(dn);
    is.read(reinterpret_cast<char*>(ep.depth.data()),
            static_cast<std::streamsize>(sizeof(float) * dn));
    OL_REQUIRE(is.good(), "load_buffer: truncated depth");
    const auto nv = take<std::uint32_t>(is);
    ep.variants.resize(nv);
    for (auto& v : ep.variants) {
      v.cmd.vx = take<Real>(is);
      v.cmd.vy = take<Real>(is);
      v.cmd.yaw_rate = take<Real>(is);
      v.cmd.height = take<Real>(is);
      v.base = take_tensor(is, {Tz, kActionDim});
      v.mean = take_tensor(is, {Tz, kActionDim});
    }
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Distiller
// ---------------------------------------------------------------------------

Distiller::Distiller(const RunConfig& cfg, const ParameterStore* teacher,
                     std::uint64_t seed)
    : cfg_(cfg),
      seed_(seed),
      teacher_(*teacher),
      student_(init_student_params(derive(seed, 8), teacher_)),
      trainable_(netcore::entries_matching(
          student_,
          [](const std::string& n) { return n.rfind("blind.", 0) != 0; })),
      adam_(student_, trainable_),
      collect_root_(Rng(seed).spawn(10)),
      inject_rng_(Rng(seed).spawn(11)),
      train_rng_(Rng(seed).spawn(12)) {
  OL_REQUIRE(cfg_.distill.bptt_window > 0, "Distiller: bptt window");
  build_heldout();
}

void Distiller::build_heldout() {
  const DistillConfig& dc = cfg_.distill;
  const int per = dc.heldout_per_tier;
  const int ticks = std::min(dc.heldout_ticks, cfg_.env.episode_ticks);
  OL_REQUIRE(per > 0 && ticks > 0, "Distiller: heldout size");
  heldout_.resize(static_cast<std::size_t>(per) * kReportTiers);

  const TeacherNet tnet(&teacher_);
  const bool has_base = tnet.has_base();
  const Rng root(derive(seed_, 9));

  parallel::for_each_index(heldout_.size(), [&](std::size_t idx) {
    const int ti = static_cast<int>(idx) / per;
    const int i = static_cast<int>(idx) % per;
    Rng rng = root.spawn(static_cast<std::uint64_t>(ti) * 100000 +
                         static_cast<std::uint64_t>(i));
    const TerrainSpec spec = tier_terrain_spec(static_cast<ReportTier>(ti), i,
                                               cfg_.terrain, rng);
    const HeightField field = generate_terrain(spec, cfg_.terrain);
    Env env(&field, &cfg_.env);
    env.reset(DomainRandomization{}, rng);

    std::unique_ptr<BlindNet> blind;
    if (has_base) blind = std::make_unique<BlindNet>(&teacher_);
    LstmPair bs, ds;
    bs.reset(kBlindHidden);
    ds.reset(kDsHidden);

    DistillEpisode ep;
    ep.kind = spec.kind;
    const std::size_t capz = static_cast<std::size_t>(ticks);
    ep.pc = Tensor({capz, ObsVec::kDim});
    ep.embed = Tensor({capz, kHmEmbed});
    ep.base = Tensor({capz, kActionDim});
    ep.mean = Tensor({capz, kActionDim});
    ep.depth.assign(capz * DistillEpisode::kDepthRow, 0.0f);

    Real cat[kQuadrantConcatSize];
    PolicyStepOut po;
    int t = 0;
    while (!env.done() && t < ticks) {
      const RobotState& s = env.state();
      Real* obs = ep.pc.row(static_cast<std::size_t>(t));
      build_obs(s, env.command(), obs);
      const HeightMapObs raw = extract_heightmap(field, s.x, s.y, s.z, s.yaw);
      concat_quadrants(raw, cat);
      tnet.embed_only(cat, ep.embed.row(static_cast<std::size_t>(t)));
      // Held-out frames are rendered once here and reused every round; they
      // are not part of the training render budget.
      const DepthQuad depth =
          render_depth(field, s.x, s.y, s.z, s.yaw, cfg_.rig, nullptr);
      pack_depth(depth, ep.depth_row(t));
      Real* base = ep.base.row(static_cast<std::size_t>(t));
      if (has_base)
        blind->step(obs, bs, base);
      else
        std::fill(base, base + kActionDim, Real(0));
      tnet.step_from(obs, ep.embed.row(static_cast<std::size_t>(t)), base, ds,
                     po);
      std::copy(po.mean.begin(), po.mean.end(),
                ep.mean.row(static_cast<std::size_t>(t)));
      env.step(ActionVector::from_array(po.mean));
      ++t;
    }
    ep.T = t;
    if (t < ticks) {
      ep.pc = copy_rows(ep.pc, 0, t);
      ep.embed = copy_rows(ep.embed, 0, t);
      ep.base = copy_rows(ep.base, 0, t);
      ep.mean = copy_rows(ep.mean, 0, t);
      ep.depth.resize(static_cast<std::size_t>(t) *
                      DistillEpisode::kDepthRow);
    }
    heldout_[idx] = std::move(ep);
  });
}

std::array<Real, 2> Distiller::heldout_mse() const {
  const StudentNet snet(&student_);
  std::vector<std::array<Real, 2>> err(heldout_.size(), {0, 0});
  std::vector<std::size_t> steps(heldout_.size(), 0);
  parallel::for_each_index(heldout_.size(), [&](std::size_t idx) {
    const DistillEpisode& ep = heldout_[idx];
    LstmPair ds;
    ds.reset(kDsHidden);
    PolicyStepOut po;
    std::array<Real, kHmEmbed> es;
    Real ea = 0, ee = 0;
    for (int t = 0; t < ep.T; ++t) {
      const DepthQuad q = unpack_quad(ep.depth_row(t));
      snet.encode(q, es.data());
      snet.step_from(ep.pc.row(static_cast<std::size_t>(t)), es.data(),
                     ep.base.row(static_cast<std::size_t>(t)), ds, po);
      const Real* lm = ep.mean.row(static_cast<std::size_t>(t));
      for (int i = 0; i < kActionDim; ++i) {
        const Real d = po.mean[i] - lm[i];
        ea += d * d;
      }
      const Real* le = ep.embed.row(static_cast<std::size_t>(t));
      for (int i = 0; i < kHmEmbed; ++i) {
        const Real d = es[i] - le[i];
        ee += d * d;
      }
    }
    err[idx] = {ea, ee};
    steps[idx] = static_cast<std::size_t>(ep.T);
  });
  Real sa = 0, se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    sa += err[i][0];
    se += err[i][1];
    n += steps[i];
  }
  OL_REQUIRE(n > 0, "heldout_mse: empty held-out set");
  return {sa / static_cast<Real>(n * kActionDim),
          se / static_cast<Real>(n * kHmEmbed)};
}

void Distiller::train_episode(const DistillEpisode& ep, Real* sum_kl,
                              Real* sum_embed, std::size_t* n_windows) {
  const DistillConfig& dc = cfg_.distill;
  const int W = dc.bptt_window;
  const int T = ep.T;
  if (T == 0) return;
  constexpr int kPix = DepthImage::kRes * DepthImage::kRes;

  // Sequences this pass: the original labels plus a fresh draw of variants.
  struct Seq {
    const Tensor* base;
    const Tensor* mean;
    const Command* cmd;  // null = original commands
  };
  std::vector<Seq> seqs;
  seqs.push_back({&ep.base, &ep.mean, nullptr});
  if (!ep.variants.empty() && dc.variants_per_pass > 1) {
    std::vector<std::size_t> vi(ep.variants.size());
    std::iota(vi.begin(), vi.end(), std::size_t{0});
    const std::size_t nv = std::min<std::size_t>(
        static_cast<std::size_t>(dc.variants_per_pass - 1), vi.size());
    for (std::size_t i = 0; i < nv; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(train_rng_.uniform_int(
                  0, static_cast<int>(vi.size() - i) - 1));
      std::swap(vi[i], vi[j]);
      const auto& v = ep.variants[vi[i]];
      seqs.push_back({&v.base, &v.mean, &v.cmd});
    }
  }
  const std::size_t ns = seqs.size();

  // Parameter and gradient views.
  const Tensor& pcw = student_.get("pc_enc.w");
  const Tensor& pcb = student_.get("pc_enc.b");
  const LstmView l0 = lstm_view(student_, "ds.lstm0");
  const LstmView l1 = lstm_view(student_, "ds.lstm1");
  const Tensor& headw = student_.get("ds.head.w");
  const Tensor& headb = student_.get("ds.head.b");
  const Tensor& ls_s = student_.get("log_std");
  const Tensor& ls_t = teacher_.get("log_std");
  const Tensor& c1w = student_.get("cnn.c1.w");
  const Tensor& c1b = student_.get("cnn.c1.b");
  const Tensor& c2w = student_.get("cnn.c2.w");
  const Tensor& c2b = student_.get("cnn.c2.b");
  const Tensor& c3w = student_.get("cnn.c3.w");
  const Tensor& c3b = student_.get("cnn.c3.b");
  const Tensor& prw = student_.get("cnn.proj.w");
  const Tensor& prb = student_.get("cnn.proj.b");
  const Tensor& fcw = student_.get("cnn.fc.w");
  const Tensor& fcb = student_.get("cnn.fc.b");
  const Tensor& fusew = student_.get("fuse.w");
  const Tensor& fuseb = student_.get("fuse.b");

  netcore::GradStore g(student_);
  auto G = [&](const std::string& n) -> Tensor& {
    return g.of(student_.index_of(n));
  };
  const LstmGradView gl0{&G("ds.lstm0.w_ih"), &G("ds.lstm0.w_hh"),
                         &G("ds.lstm0.b")};
  const LstmGradView gl1{&G("ds.lstm1.w_ih"), &G("ds.lstm1.w_hh"),
                         &G("ds.lstm1.b")};

  const netcore::AdamConfig acfg{dc.lr, 0.9, 0.999, 1e-8};
  const bool aug_on = dc.augment.noise_std > 0 ||
                      dc.augment.dropout_rate > 0 ||
                      dc.augment.max_shift_px > 0;

  // Hidden-state carry per sequence, advanced window by window.
  std::vector<LstmPair> carry(ns);
  for (auto& c : carry) c.reset(kDsHidden);

  for (int t0 = 0; t0 < T; t0 += W) {
    const int len = std::min(W, T - t0);
    const std::size_t lz = static_cast<std::size_t>(len);
    g.zero();

    // --- vision forward, shared by every sequence ---
    std::vector<Tensor> IN(lz * 4), Z1(lz * 4), Z2(lz * 4), Z3(lz * 4);
    Tensor Xfc({lz * 4, 512});
    for (int t = 0; t < len; ++t)
      for (int cam = 0; cam < 4; ++cam) {
        DepthImage img = unpack_image(ep.depth_row(t0 + t), cam);
        if (aug_on) augment_depth(img, dc.augment, cfg_.rig, train_rng_);
        const std::size_t r = static_cast<std::size_t>(t) * 4 +
                              static_cast<std::size_t>(cam);
        IN[r] = Tensor({1, DepthImage::kRes, DepthImage::kRes});
        for (int i = 0; i < kPix; ++i)
          IN[r](static_cast<std::size_t>(i)) = normalize_depth(img.d[i]);
        netcore::conv2d_forward(IN[r], c1w, c1b, Z1[r], 2, 1);
        netcore::act_forward(Act::Relu, Z1[r]);
        netcore::conv2d_forward(Z1[r], c2w, c2b, Z2[r], 2, 1);
        netcore::act_forward(Act::Relu, Z2[r]);
        Tensor zp;
        netcore::conv2d_forward(Z2[r], c3w, c3b, Z3[r], 2, 1);
        netcore::conv2d_forward(Z2[r], prw, prb, zp, 2, 0);
        for (std::size_t i = 0; i < Z3[r].numel(); ++i) Z3[r](i) += zp(i);
        netcore::act_forward(Act::Relu, Z3[r]);
        std::memcpy(Xfc.row(r), Z3[r].ptr(), sizeof(Real) * 512);
      }
    Tensor Yfc;
    netcore::dense_forward(fcw, fcb, Xfc, Yfc, Act::Relu);
    std::array<Tensor, 4> Xcam, Ycam;
    Tensor CAT({lz, 4 * kCamFeat});
    for (int cam = 0; cam < 4; ++cam) {
      Xcam[cam] = Tensor({lz, kCnnFc});
      for (int t = 0; t < len; ++t)
        std::memcpy(Xcam[cam].row(static_cast<std::size_t>(t)),
                    Yfc.row(static_cast<std::size_t>(t) * 4 +
                            static_cast<std::size_t>(cam)),
                    sizeof(Real) * kCnnFc);
      const std::string cn = "cam" + std::to_string(cam);
      netcore::dense_forward(student_.get(cn + ".w"), student_.get(cn + ".b"),
                             Xcam[cam], Ycam[cam], Act::Relu);
      for (int t = 0; t < len; ++t)
        std::memcpy(CAT.row(static_cast<std::size_t>(t)) + cam * kCamFeat,
                    Ycam[cam].row(static_cast<std::size_t>(t)),
                    sizeof(Real) * kCamFeat);
    }
    Tensor EMB;
    netcore::dense_forward(fusew, fuseb, CAT, EMB, Act::Relu);

    // --- recurrent forward per sequence ---
    std::vector<Tensor> PCs(ns), Ps(ns), Xs(ns), DIFFs(ns), MUs(ns);
    std::vector<LstmCache> cc0(ns), cc1(ns);
    for (std::size_t si = 0; si < ns; ++si) {
      PCs[si] = copy_rows(ep.pc, t0, len);
      if (seqs[si].cmd)
        for (int t = 0; t < len; ++t) {
          Real* row = PCs[si].row(static_cast<std::size_t>(t));
          row[ObsVec::kCmdVx] = seqs[si].cmd->vx;
          row[ObsVec::kCmdVy] = seqs[si].cmd->vy;
          row[ObsVec::kCmdYaw] = seqs[si].cmd->yaw_rate;
        }
      netcore::dense_forward(pcw, pcb, PCs[si], Ps[si], Act::Linear);
      Xs[si] = Tensor({lz, static_cast<std::size_t>(kDsInput)});
      for (int t = 0; t < len; ++t) {
        Real* x = Xs[si].row(static_cast<std::size_t>(t));
        std::memcpy(x, Ps[si].row(static_cast<std::size_t>(t)),
                    sizeof(Real) * kPcEnc);
        std::memcpy(x + kPcEnc, EMB.row(static_cast<std::size_t>(t)),
                    sizeof(Real) * kHmEmbed);
        std::memcpy(x + kPcEnc + kHmEmbed,
                    seqs[si].base->row(static_cast<std::size_t>(t0 + t)),
                    sizeof(Real) * kActionDim);
      }
      netcore::lstm_forward(l0, Xs[si], vec_tensor(carry[si].h0),
                            vec_tensor(carry[si].c0), cc0[si]);
      netcore::lstm_forward(l1, cc0[si].h, vec_tensor(carry[si].h1),
                            vec_tensor(carry[si].c1), cc1[si]);
      netcore::dense_forward(headw, headb, cc1[si].h, DIFFs[si], Act::Linear);
      MUs[si] = DIFFs[si];
      for (int t = 0; t < len; ++t) {
        Real* m = MUs[si].row(static_cast<std::size_t>(t));
        const Real* b = seqs[si].base->row(static_cast<std::size_t>(t0 + t));
        for (int i = 0; i < kActionDim; ++i) m[i] += b[i];
      }
    }

    // --- losses ---
    const Real nkl = static_cast<Real>(lz * ns);
    Tensor dEMB({lz, static_cast<std::size_t>(kHmEmbed)});
    Tensor& dls = G("log_std");
    std::vector<Tensor> dMU(ns);
    Real w_kl = 0;
    for (std::size_t si = 0; si < ns; ++si) {
      dMU[si] = Tensor({lz, static_cast<std::size_t>(kActionDim)});
      for (int t = 0; t < len; ++t) {
        const Real* mp =
            seqs[si].mean->row(static_cast<std::size_t>(t0 + t));
        const Real* mq = MUs[si].row(static_cast<std::size_t>(t));
        w_kl += netcore::gaussian_kl(mp, ls_t.ptr(), mq, ls_s.ptr(),
                                     kActionDim);
        netcore::gaussian_kl_backward_q(
            mp, ls_t.ptr(), mq, ls_s.ptr(), kActionDim, 1.0 / nkl,
            dMU[si].row(static_cast<std::size_t>(t)), dls.ptr());
      }
    }
    Real w_emb = 0;
    if (dc.w_embed > 0) {
      const Real ne = static_cast<Real>(lz) * kHmEmbed;
      for (int t = 0; t < len; ++t) {
        const Real* e = EMB.row(static_cast<std::size_t>(t));
        const Real* le = ep.embed.row(static_cast<std::size_t>(t0 + t));
        Real* de = dEMB.row(static_cast<std::size_t>(t));
        for (int i = 0; i < kHmEmbed; ++i) {
          const Real d = e[i] - le[i];
          w_emb += d * d / ne;
          de[i] += 2.0 * dc.w_embed * d / ne;
        }
      }
    }
    *sum_kl += w_kl / nkl;
    *sum_embed += w_emb;
    ++*n_windows;

    // --- recurrent backward per sequence ---
    for (std::size_t si = 0; si < ns; ++si) {
      Tensor dH1({lz, static_cast<std::size_t>(kDsHidden)});
      netcore::dense_backward(headw, cc1[si].h, DIFFs[si], dMU[si],
                              G("ds.head.w"), G("ds.head.b"), &dH1,
                              Act::Linear);
      Tensor dH0({lz, static_cast<std::size_t>(kDsHidden)});
      netcore::lstm_backward(l1, cc0[si].h, cc1[si], dH1, gl1, &dH0);
      Tensor dX({lz, static_cast<std::size_t>(kDsInput)});
      netcore::lstm_backward(l0, Xs[si], cc0[si], dH0, gl0, &dX);
      Tensor dP({lz, static_cast<std::size_t>(kPcEnc)});
      for (int t = 0; t < len; ++t) {
        const Real* x = dX.row(static_cast<std::size_t>(t));
        std::memcpy(dP.row(static_cast<std::size_t>(t)), x,
                    sizeof(Real) * kPcEnc);
        Real* de = dEMB.row(static_cast<std::size_t>(t));
        for (int i = 0; i < kHmEmbed; ++i) de[i] += x[kPcEnc + i];
      }
      netcore::dense_backward(pcw, PCs[si], Ps[si], dP, G("pc_enc.w"),
                              G("pc_enc.b"), nullptr, Act::Linear);
      // advance the carried hidden state (detached across windows)
      const std::size_t last = lz - 1;
      std::copy(cc0[si].h.row(last), cc0[si].h.row(last) + kDsHidden,
                carry[si].h0.begin());
      std::copy(cc0[si].c.row(last), cc0[si].c.row(last) + kDsHidden,
                carry[si].c0.begin());
      std::copy(cc1[si].h.row(last), cc1[si].h.row(last) + kDsHidden,
                carry[si].h1.begin());
      std::copy(cc1[si].c.row(last), cc1[si].c.row(last) + kDsHidden,
                carry[si].c1.begin());
    }

    // --- vision backward ---
    Tensor dCAT({lz, 4 * kCamFeat});
    netcore::dense_backward(fusew, CAT, EMB, dEMB, G("fuse.w"), G("fuse.b"),
                            &dCAT, Act::Relu);
    Tensor dYfc({lz * 4, static_cast<std::size_t>(kCnnFc)});
    for (int cam = 0; cam < 4; ++cam) {
      Tensor dYc({lz, static_cast<std::size_t>(kCamFeat)});
      for (int t = 0; t < len; ++t)
        std::memcpy(dYc.row(static_cast<std::size_t>(t)),
                    dCAT.row(static_cast<std::size_t>(t)) + cam * kCamFeat,
                    sizeof(Real) * kCamFeat);
      const std::string cn = "cam" + std::to_string(cam);
      Tensor dXc({lz, static_cast<std::size_t>(kCnnFc)});
      netcore::dense_backward(student_.get(cn + ".w"), Xcam[cam], Ycam[cam],
                              dYc, G(cn + ".w"), G(cn + ".b"), &dXc,
                              Act::Relu);
      for (int t = 0; t < len; ++t)
        std::memcpy(dYfc.row(static_cast<std::size_t>(t) * 4 +
                             static_cast<std::size_t>(cam)),
                    dXc.row(static_cast<std::size_t>(t)),
                    sizeof(Real) * kCnnFc);
    }
    Tensor dXfc({lz * 4, 512});
    netcore::dense_backward(fcw, Xfc, Yfc, dYfc, G("cnn.fc.w"), G("cnn.fc.b"),
                            &dXfc, Act::Relu);
    for (std::size_t r = 0; r < lz * 4; ++r) {
      Tensor dZ3({32, 4, 4});
      std::memcpy(dZ3.ptr(), dXfc.row(r), sizeof(Real) * 512);
      mask_relu(Z3[r], dZ3);
      Tensor dZ2({16, 8, 8});
      netcore::conv2d_backward(Z2[r], c3w, dZ3, G("cnn.c3.w"), G("cnn.c3.b"),
                               &dZ2, 2, 1);
      netcore::conv2d_backward(Z2[r], prw, dZ3, G("cnn.proj.w"),
                               G("cnn.proj.b"), &dZ2, 2, 0);
      mask_relu(Z2[r], dZ2);
      Tensor dZ1({8, 16, 16});
      netcore::conv2d_backward(Z1[r], c2w, dZ2, G("cnn.c2.w"), G("cnn.c2.b"),
                               &dZ1, 2, 1);
      mask_relu(Z1[r], dZ1);
      netcore::conv2d_backward(IN[r], c1w, dZ1, G("cnn.c1.w"), G("cnn.c1.b"),
                               nullptr, 2, 1);
    }

    netcore::clip_grad_norm(g, trainable_, dc.max_grad_norm);
    adam_.step(student_, g, acfg);
  }

  for (std::size_t i : trainable_)
    OL_REQUIRE(student_.tensor(i).all_finite(),
               "distill: non-finite parameter '" + student_.name(i) +
                   "' after round " + std::to_string(round_));
}

DistillStats Distiller::round() {
  const DistillConfig& dc = cfg_.distill;
  DistillStats st;
  st.round = round_;

  const std::size_t first = buf_.episodes.size();
  dagger_collect(buf_, student_, teacher_, cfg_, collect_root_,
                 static_cast<std::uint64_t>(round_) * 10000,
                 dc.episodes_per_round);
  if (dc.use_injection && dc.inject.k > 0)
    inject_commands(buf_, first, dc.inject, teacher_, inject_rng_);

  Real sum_kl = 0, sum_embed = 0;
  std::size_t n_windows = 0;
  for (int epoch = 0; epoch < dc.epochs; ++epoch) {
    // Every pass sees this round's episodes plus a fresh sample of older
    // ones, so the aggregated buffer keeps contributing without the pass
    // cost growing with it.
    std::vector<std::size_t> order;
    for (std::size_t e = first; e < buf_.episodes.size(); ++e)
      order.push_back(e);
    if (first > 0) {
      std::vector<std::size_t> old(first);
      std::iota(old.begin(), old.end(), std::size_t{0});
      const std::size_t nr =
          std::min<std::size_t>(static_cast<std::size_t>(dc.replay_episodes),
                                old.size());
      for (std::size_t i = 0; i < nr; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(train_rng_.uniform_int(
                    0, static_cast<int>(old.size() - i) - 1));
        std::swap(old[i], old[j]);
        order.push_back(old[i]);
      }
    }
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          train_rng_.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t e : order)
      train_episode(buf_.episodes[e], &sum_kl, &sum_embed, &n_windows);
  }
  if (n_windows > 0) {
    st.loss_kl = sum_kl / static_cast<Real>(n_windows);
    st.loss_embed = sum_embed / static_cast<Real>(n_windows);
  }

  const std::array<Real, 2> mse = heldout_mse();
  st.heldout_mse = mse[0];
  st.heldout_embed_mse = mse[1];
  st.env_steps = buf_.env_steps;
  st.render_count = buf_.render_count;
  st.pair_count = buf_.pair_count;
  ++round_;
  history_.push_back(st);
  return st;
}

std::vector<std::string> Distiller::log_columns() {
  return {"round",   "env_steps",   "render_count",
          "pair_count", "loss_kl",  "loss_embed",
          "heldout_mse", "heldout_embed_mse"};
}

DistillResult Distiller::run(std::ostream& log) {
  logio::TableWriter w(
      log, "distill",
      {{"config", config_hash_hex(cfg_)},
       {"seed", std::to_string(seed_)},
       {"teacher", teacher_.arch_tag},
       {"use_injection",
        cfg_.distill.use_injection && cfg_.distill.inject.k > 0 ? "1" : "0"}},
      log_columns());
  DistillResult res;
  while (round_ < cfg_.distill.rounds) {
    const DistillStats st = round();
    w.row(std::array<Real, 8>{
        static_cast<Real>(st.round), static_cast<Real>(st.env_steps),
        static_cast<Real>(st.render_count), static_cast<Real>(st.pair_count),
        st.loss_kl, st.loss_embed, st.heldout_mse, st.heldout_embed_mse});
    if (st.heldout_mse <= cfg_.distill.mse_threshold) break;
  }
  res.rounds = round_;
  res.frames_to_threshold =
      frames_to_threshold(history_, cfg_.distill.mse_threshold);
  res.converged = res.frames_to_threshold > 0;
  res.history = history_;
  return res;
}

std::uint64_t frames_to_threshold(const std::vector<DistillStats>& history,
                                  Real threshold) {
  for (const DistillStats& st : history)
    if (st.heldout_mse <= threshold) return st.render_count;
  return 0;
}

}  // namespace omniloco
