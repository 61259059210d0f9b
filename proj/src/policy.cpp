#include "omniloco/policy.hpp"

#include <cmath>
#include <cstring>

namespace omniloco {

using netcore::Act;
using netcore::ParameterStore;

// ---------------------------------------------------------------------------
// Observation building & mirror maps
// ---------------------------------------------------------------------------

void build_obs(const RobotState& s, const Command& cmd, Real* o) {
  o[0] = s.z - s.support_z;
  o[1] = s.vx;
  o[2] = s.vy;
  o[3] = s.yaw_rate;
  o[4] = std::sin(kTwoPi * s.phase);
  o[5] = std::cos(kTwoPi * s.phase);
  o[6] = s.stance == Foot::Left ? 1.0 : -1.0;
  const Real c = std::cos(s.yaw), sn = std::sin(s.yaw);
  for (int f = 0; f < 2; ++f) {
    const Vec3& fp = s.foot[f];
    const Real dx = fp.x - s.x, dy = fp.y - s.y;
    Real* slot = o + 7 + 3 * f;  // left foot first
    slot[0] = c * dx + sn * dy;
    slot[1] = -sn * dx + c * dy;
    slot[2] = fp.z - s.z;
  }
  o[13] = cmd.vx;
  o[14] = cmd.vy;
  o[15] = cmd.yaw_rate;
  o[16] = cmd.height;
}

void apply_encoder_noise(Real* obs, Real bound, Rng& rng) {
  if (bound <= 0) return;
  for (int i = 0; i < 13; ++i) obs[i] += rng.uniform(-bound, bound);
}

void mirror_obs(const Real* in, Real* out) {
  out[0] = in[0];
  out[1] = in[1];
  out[2] = -in[2];
  out[3] = -in[3];
  out[4] = in[4];
  out[5] = in[5];
  out[6] = -in[6];
  // feet swap with y negation: the mirrored left foot is the old right foot
  out[7] = in[10];
  out[8] = -in[11];
  out[9] = in[12];
  out[10] = in[7];
  out[11] = -in[8];
  out[12] = in[9];
  out[13] = in[13];
  out[14] = -in[14];
  out[15] = -in[15];
  out[16] = in[16];
}

void mirror_action(const Real* in, Real* out) {
  out[0] = in[0];
  out[1] = -in[1];
  out[2] = -in[2];
  out[3] = in[3];
  out[4] = in[4];
  out[5] = -in[5];
}

namespace {

// concat layout: front (ix 40..59, iy 0..39), left (ix 20..39, iy 20..39),
// back (ix 0..19, iy 0..39), right (ix 20..39, iy 0..19)
int concat_index(int ix, int iy) {
  if (ix >= 40) return (ix - 40) * 40 + iy;
  if (ix < 20) return 1200 + ix * 40 + iy;
  if (iy >= 20) return 800 + (ix - 20) * 20 + (iy - 20);
  return 2000 + (ix - 20) * 20 + iy;
}

std::array<int, HeightMapObs::kSize> build_mirror_perm() {
  std::array<int, HeightMapObs::kSize> perm{};
  for (int ix = 0; ix < HeightMapObs::kCellsX; ++ix)
    for (int iy = 0; iy < HeightMapObs::kCellsY; ++iy)
      perm[concat_index(ix, iy)] =
          concat_index(ix, HeightMapObs::kCellsY - 1 - iy);
  return perm;
}

}  // namespace

const std::array<int, HeightMapObs::kSize>& mirror_hm_permutation() {
  static const auto perm = build_mirror_perm();
  return perm;
}

namespace {

// Downward rangefinder: distance from a probe point to the terrain below it.
Real range_down(const HeightField& field, Real x, Real y, Real z) {
  return clamp(z - field.height_at(x, y), 0.0, 2.0);
}

}  // namespace

void build_extras(const RobotState& s, const Command& cmd,
                  const HeightField& field, const EnvConfig& cfg, Real* e) {
  build_obs(s, cmd, e);  // clean proprio + command, entries 0..16
  e[17] = s.z;           // base height, world frame
  // foot positions, world frame
  int k = 18;
  for (int f = 0; f < 2; ++f) {
    e[k++] = s.foot[f].x;
    e[k++] = s.foot[f].y;
    e[k++] = s.foot[f].z;
  }
  // 0.5 m square height map around each foot: 10x10 cells at 5 cm,
  // yaw-aligned, heights relative to the base.  k = 24..223.
  const Real c = std::cos(s.yaw), sn = std::sin(s.yaw);
  for (int f = 0; f < 2; ++f)
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        const Real bx = (i - 4.5) * 0.05, by = (j - 4.5) * 0.05;
        const Real wx = s.foot[f].x + c * bx - sn * by;
        const Real wy = s.foot[f].y + sn * bx + c * by;
        e[k++] = field.height_at(wx, wy) - s.z;
      }
  // Eight rangefinders: front / outer side / rear of each foot, plus one at
  // each conrod midpoint (halfway up from foot toward the hip).
  const Real r = cfg.rangefinder_offset;
  for (int f = 0; f < 2; ++f) {
    const Vec3& ft = s.foot[f];
    const Real side = f == 0 ? 1.0 : -1.0;  // outward: left foot +y
    e[k++] = range_down(field, ft.x + c * r, ft.y + sn * r, ft.z + 0.05);
    e[k++] = range_down(field, ft.x - sn * side * r, ft.y + c * side * r,
                        ft.z + 0.05);
    e[k++] = range_down(field, ft.x - c * r, ft.y - sn * r, ft.z + 0.05);
  }
  for (int f = 0; f < 2; ++f) {
    const Vec3& ft = s.foot[f];
    const Real side = f == 0 ? 1.0 : -1.0;
    const Real hx = s.x - sn * side * cfg.hip_lateral;
    const Real hy = s.y + c * side * cfg.hip_lateral;
    const Real hz = s.z - cfg.hip_drop;
    e[k++] = range_down(field, 0.5 * (ft.x + hx), 0.5 * (ft.y + hy),
                        0.5 * (ft.z + hz));
  }
  OL_REQUIRE(k == ExtrasVec::kDim, "build_extras: layout size");
}

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

namespace {

void add_dense(ParameterStore& p, const std::string& name, std::size_t out,
               std::size_t in, Rng& rng, Real gain = 1.0) {
  Tensor& w = p.add(name + ".w", {out, in});
  Tensor& b = p.add(name + ".b", {out});
  netcore::init_dense(w, b, rng, gain);
}

void add_lstm(ParameterStore& p, const std::string& name, std::size_t hidden,
              std::size_t in, Rng& rng) {
  Tensor& w_ih = p.add(name + ".w_ih", {4 * hidden, in});
  Tensor& w_hh = p.add(name + ".w_hh", {4 * hidden, hidden});
  Tensor& b = p.add(name + ".b", {4 * hidden});
  netcore::init_lstm(w_ih, w_hh, b, rng);
}

void copy_entries(ParameterStore& dst, const ParameterStore& src,
                  const std::string& prefix) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::string& n = src.name(i);
    if (n.rfind(prefix, 0) == 0) {
      Tensor& t = dst.add(n, src.tensor(i).shape);
      t.data = src.tensor(i).data;
    }
  }
}

constexpr Real kLogStdInit = -1.3862943611198906;  // log 0.25
constexpr Real kHeadGain = 0.01;

}  // namespace

ParameterStore init_blind_params(std::uint64_t seed) {
  ParameterStore p;
  p.arch_tag = kTagBlind;
  p.init_seed = seed;
  Rng rng(seed);
  add_lstm(p, "blind.lstm0", kBlindHidden, ObsVec::kDim, rng);
  add_lstm(p, "blind.lstm1", kBlindHidden, kBlindHidden, rng);
  add_dense(p, "blind.head", kActionDim, kBlindHidden, rng, kHeadGain);
  p.add("blind.log_std", {kActionDim}).fill(kLogStdInit);
  return p;
}

ParameterStore init_teacher_params(std::uint64_t seed,
                                   const ParameterStore* blind) {
  ParameterStore p;
  p.arch_tag = blind ? kTagTeacher : kTagTeacherNoBase;
  p.init_seed = seed;
  Rng rng(seed);
  add_dense(p, "hm.fc0", 256, HeightMapObs::kSize, rng);
  add_dense(p, "hm.fc1", kHmEmbed, 256, rng);
  add_dense(p, "pc_enc", kPcEnc, ObsVec::kDim, rng);
  add_lstm(p, "ds.lstm0", kDsHidden, kDsInput, rng);
  add_lstm(p, "ds.lstm1", kDsHidden, kDsHidden, rng);
  add_dense(p, "ds.head", kActionDim, kDsHidden, rng, kHeadGain);
  p.add("log_std", {kActionDim}).fill(kLogStdInit);
  if (blind) {
    OL_REQUIRE(blind->arch_tag == kTagBlind,
               "init_teacher_params: base policy has wrong tag");
    copy_entries(p, *blind, "blind.");
  }
  return p;
}

ParameterStore init_student_params(std::uint64_t seed,
                                   const ParameterStore& teacher) {
  ParameterStore p;
  p.arch_tag = kTagStudent;
  p.init_seed = seed;
  Rng rng(seed);
  // vision encoder (fresh)
  {
    Tensor& w = p.add("cnn.c1.w", {8, 1, 3, 3});
    Tensor& b = p.add("cnn.c1.b", {8});
    netcore::init_dense(w, b, rng);  // fan sizes from the leading dims
  }
  {
    Tensor& w = p.add("cnn.c2.w", {16, 8, 3, 3});
    Tensor& b = p.add("cnn.c2.b", {16});
    netcore::init_dense(w, b, rng);
  }
  {
    Tensor& w = p.add("cnn.c3.w", {32, 16, 3, 3});
    Tensor& b = p.add("cnn.c3.b", {32});
    netcore::init_dense(w, b, rng);
  }
  {
    Tensor& w = p.add("cnn.proj.w", {32, 16, 1, 1});
    Tensor& b = p.add("cnn.proj.b", {32});
    netcore::init_dense(w, b, rng);
  }
  add_dense(p, "cnn.fc", kCnnFc, 512, rng);
  for (int cam = 0; cam < 4; ++cam)
    add_dense(p, "cam" + std::to_string(cam), kCamFeat, kCnnFc, rng);
  add_dense(p, "fuse", kHmEmbed, 4 * kCamFeat, rng);
  // downstream copied from the teacher
  copy_entries(p, teacher, "pc_enc");
  copy_entries(p, teacher, "ds.");
  copy_entries(p, teacher, "log_std");
  copy_entries(p, teacher, "blind.");
  return p;
}

ParameterStore init_critic_params(std::uint64_t seed, bool with_terrain_embed) {
  ParameterStore p;
  p.arch_tag = with_terrain_embed ? kTagCriticTeacher : kTagCriticBlind;
  p.init_seed = seed;
  Rng rng(seed);
  const std::size_t H = with_terrain_embed ? kDsHidden : kBlindHidden;
  const std::size_t in = with_terrain_embed
                             ? static_cast<std::size_t>(64 + kHmEmbed)
                             : static_cast<std::size_t>(64);
  add_dense(p, "vf.enc", 64, ExtrasVec::kDim, rng);
  add_lstm(p, "vf.lstm0", H, in, rng);
  add_lstm(p, "vf.lstm1", H, H, rng);
  add_dense(p, "vf.head", 1, H, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Step-wise nets
// ---------------------------------------------------------------------------

namespace {

netcore::LstmView lstm_view(const ParameterStore& p, const std::string& name) {
  return {&p.get(name + ".w_ih"), &p.get(name + ".w_hh"), &p.get(name + ".b")};
}

}  // namespace

BlindNet::BlindNet(const ParameterStore* p, const std::string& prefix)
    : l0_(lstm_view(*p, prefix + "lstm0")),
      l1_(lstm_view(*p, prefix + "lstm1")),
      head_w_(&p->get(prefix + "head.w")),
      head_b_(&p->get(prefix + "head.b")),
      log_std_(&p->get(prefix + "log_std")) {}

void BlindNet::step(const Real* obs, LstmPair& s, Real* mean) const {
  std::array<Real, 4 * kBlindHidden> gates;
  netcore::lstm_step(l0_, obs, s.h0.data(), s.c0.data(), gates.data());
  netcore::lstm_step(l1_, s.h0.data(), s.h1.data(), s.c1.data(), gates.data());
  netcore::dense_step(*head_w_, *head_b_, s.h1.data(), mean, Act::Linear);
}

TeacherNet::TeacherNet(const ParameterStore* p)
    : fc0_w_(&p->get("hm.fc0.w")),
      fc0_b_(&p->get("hm.fc0.b")),
      fc1_w_(&p->get("hm.fc1.w")),
      fc1_b_(&p->get("hm.fc1.b")),
      pc_w_(&p->get("pc_enc.w")),
      pc_b_(&p->get("pc_enc.b")),
      l0_(lstm_view(*p, "ds.lstm0")),
      l1_(lstm_view(*p, "ds.lstm1")),
      head_w_(&p->get("ds.head.w")),
      head_b_(&p->get("ds.head.b")),
      log_std_(&p->get("log_std")) {
  has_base_ = p->has("blind.lstm0.w_ih");
  if (has_base_) blind_owned_ = std::make_unique<BlindNet>(p);
}

void TeacherNet::embed_only(const Real* hm, Real* embed) const {
  std::array<Real, 256> mid;
  netcore::dense_step(*fc0_w_, *fc0_b_, hm, mid.data(), Act::Relu);
  netcore::dense_step(*fc1_w_, *fc1_b_, mid.data(), embed, Act::Relu);
}

void TeacherNet::step(const Real* obs, const Real* hm, LstmPair& blind_s,
                      LstmPair& ds_s, PolicyStepOut& out) const {
  embed_only(hm, out.embed.data());
  if (has_base_)
    blind_owned_->step(obs, blind_s, out.base.data());
  else
    out.base.fill(0);
  step_from(obs, out.embed.data(), out.base.data(), ds_s, out);
}

void TeacherNet::step_from(const Real* obs, const Real* embed,
                           const Real* base, LstmPair& ds_s,
                           PolicyStepOut& out) const {
  std::copy(embed, embed + kHmEmbed, out.embed.begin());
  std::copy(base, base + kActionDim, out.base.begin());
  std::array<Real, kDsInput> x;
  netcore::dense_step(*pc_w_, *pc_b_, obs, x.data(), Act::Linear);
  std::copy(embed, embed + kHmEmbed, x.begin() + kPcEnc);
  std::copy(base, base + kActionDim, x.begin() + kPcEnc + kHmEmbed);
  std::array<Real, 4 * kDsHidden> gates;
  netcore::lstm_step(l0_, x.data(), ds_s.h0.data(), ds_s.c0.data(),
                     gates.data());
  netcore::lstm_step(l1_, ds_s.h0.data(), ds_s.h1.data(), ds_s.c1.data(),
                     gates.data());
  netcore::dense_step(*head_w_, *head_b_, ds_s.h1.data(), out.diff.data(),
                      Act::Linear);
  for (int i = 0; i < kActionDim; ++i) out.mean[i] = out.base[i] + out.diff[i];
}

StudentNet::StudentNet(const ParameterStore* p)
    : p_(p),
      pc_w_(&p->get("pc_enc.w")),
      pc_b_(&p->get("pc_enc.b")),
      l0_(lstm_view(*p, "ds.lstm0")),
      l1_(lstm_view(*p, "ds.lstm1")),
      head_w_(&p->get("ds.head.w")),
      head_b_(&p->get("ds.head.b")),
      log_std_(&p->get("log_std")) {
  has_base_ = p->has("blind.lstm0.w_ih");
  if (has_base_) blind_owned_ = std::make_unique<BlindNet>(p);
}

void StudentNet::encode(const DepthQuad& depth, Real* embed) const {
  std::array<Real, 4 * kCamFeat> cat;
  Tensor in({1, DepthImage::kRes, DepthImage::kRes});
  Tensor z1, z2, z3, zp;
  for (int cam = 0; cam < 4; ++cam) {
    for (int i = 0; i < DepthImage::kRes * DepthImage::kRes; ++i)
      in(static_cast<std::size_t>(i)) = normalize_depth(depth[cam].d[i]);
    netcore::conv2d_forward(in, p_->get("cnn.c1.w"), p_->get("cnn.c1.b"), z1,
                            2, 1);
    netcore::act_forward(Act::Relu, z1);
    netcore::conv2d_forward(z1, p_->get("cnn.c2.w"), p_->get("cnn.c2.b"), z2,
                            2, 1);
    netcore::act_forward(Act::Relu, z2);
    netcore::conv2d_forward(z2, p_->get("cnn.c3.w"), p_->get("cnn.c3.b"), z3,
                            2, 1);
    netcore::conv2d_forward(z2, p_->get("cnn.proj.w"), p_->get("cnn.proj.b"),
                            zp, 2, 0);
    for (std::size_t i = 0; i < z3.numel(); ++i) z3(i) += zp(i);
    netcore::act_forward(Act::Relu, z3);
    std::array<Real, kCnnFc> feat;
    netcore::dense_step(p_->get("cnn.fc.w"), p_->get("cnn.fc.b"), z3.ptr(),
                        feat.data(), Act::Relu);
    const std::string cam_name = "cam" + std::to_string(cam);
    netcore::dense_step(p_->get(cam_name + ".w"), p_->get(cam_name + ".b"),
                        feat.data(), cat.data() + cam * kCamFeat, Act::Relu);
  }
  netcore::dense_step(p_->get("fuse.w"), p_->get("fuse.b"), cat.data(), embed,
                      Act::Relu);
}

void StudentNet::step(const Real* obs, const DepthQuad& depth,
                      LstmPair& blind_s, LstmPair& ds_s,
                      PolicyStepOut& out) const {
  encode(depth, out.embed.data());
  if (has_base_)
    blind_owned_->step(obs, blind_s, out.base.data());
  else
    out.base.fill(0);
  step_from(obs, out.embed.data(), out.base.data(), ds_s, out);
}

void StudentNet::step_from(const Real* obs, const Real* embed,
                           const Real* base, LstmPair& ds_s,
                           PolicyStepOut& out) const {
  std::copy(embed, embed + kHmEmbed, out.embed.begin());
  std::copy(base, base + kActionDim, out.base.begin());
  std::array<Real, kDsInput> x;
  netcore::dense_step(*pc_w_, *pc_b_, obs, x.data(), Act::Linear);
  std::copy(embed, embed + kHmEmbed, x.begin() + kPcEnc);
  std::copy(base, base + kActionDim, x.begin() + kPcEnc + kHmEmbed);
  std::array<Real, 4 * kDsHidden> gates;
  netcore::lstm_step(l0_, x.data(), ds_s.h0.data(), ds_s.c0.data(),
                     gates.data());
  netcore::lstm_step(l1_, ds_s.h0.data(), ds_s.h1.data(), ds_s.c1.data(),
                     gates.data());
  netcore::dense_step(*head_w_, *head_b_, ds_s.h1.data(), out.diff.data(),
                      Act::Linear);
  for (int i = 0; i < kActionDim; ++i) out.mean[i] = out.base[i] + out.diff[i];
}

CriticNet::CriticNet(const ParameterStore* p)
    : enc_w_(&p->get("vf.enc.w")),
      enc_b_(&p->get("vf.enc.b")),
      l0_(lstm_view(*p, "vf.lstm0")),
      l1_(lstm_view(*p, "vf.lstm1")),
      head_w_(&p->get("vf.head.w")),
      head_b_(&p->get("vf.head.b")) {
  with_embed_ = p->arch_tag == kTagCriticTeacher;
}

Real CriticNet::step(const Real* extras, const Real* hm_embed,
                     LstmPair& s) const {
  std::array<Real, 64 + kHmEmbed> x;
  netcore::dense_step(*enc_w_, *enc_b_, extras, x.data(), Act::Relu);
  if (with_embed_) {
    OL_REQUIRE(hm_embed != nullptr, "CriticNet: terrain embedding required");
    std::copy(hm_embed, hm_embed + kHmEmbed, x.begin() + 64);
  }
  std::array<Real, 4 * kDsHidden> gates;
  netcore::lstm_step(l0_, x.data(), s.h0.data(), s.c0.data(), gates.data());
  netcore::lstm_step(l1_, s.h0.data(), s.h1.data(), s.c1.data(), gates.data());
  Real v;
  netcore::dense_step(*head_w_, *head_b_, s.h1.data(), &v, Act::Linear);
  return v;
}

}  // namespace omniloco
