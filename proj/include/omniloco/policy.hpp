#pragma once

#include <array>
#include <memory>
#include <string>

#include "omniloco/netcore.hpp"
#include "omniloco/perception.hpp"
#include "omniloco/simworld.hpp"

namespace omniloco {

// ---------------------------------------------------------------------------
// Observation vectors.  Layout pinned in docs/observation_layout.md.
// ---------------------------------------------------------------------------
struct ObsVec {
  static constexpr int kDim = 17;
  // indices of the command block
  static constexpr int kCmdVx = 13, kCmdVy = 14, kCmdYaw = 15,
                       kCmdHeight = 16;
};

void build_obs(const RobotState& s, const Command& cmd, Real* out17);
// Uniform noise on the proprioceptive entries (0..12); 13 draws.
void apply_encoder_noise(Real* obs17, Real bound, Rng& rng);
void mirror_obs(const Real* in17, Real* out17);
void mirror_action(const Real* in6, Real* out6);

// Mirror permutation of the quadrant-concatenated height map:
// out[i] = in[perm[i]].
const std::array<int, HeightMapObs::kSize>& mirror_hm_permutation();

// Privileged critic inputs: the actor observation plus world-frame base
// height and foot positions, a 10x10 height map around each foot (0.5 m at
// 5 cm cells), and 8 simulated rangefinder distances (front/side/rear of
// each foot, one per conrod midpoint).  Simulation-only; never fed to the
// actor.
struct ExtrasVec {
  static constexpr int kDim = 17 + 1 + 6 + 200 + 8;  // 232
};
void build_extras(const RobotState& s, const Command& cmd,
                  const HeightField& field, const EnvConfig& cfg, Real* out);

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------
inline constexpr int kActionDim = 6;
inline constexpr int kBlindHidden = 64;
inline constexpr int kDsHidden = 128;   // downstream (terrain-aware) LSTM
inline constexpr int kHmEmbed = 128;    // terrain embedding width
inline constexpr int kPcEnc = 64;
inline constexpr int kDsInput = kPcEnc + kHmEmbed + kActionDim;  // 198
inline constexpr int kCnnFc = 64;
inline constexpr int kCamFeat = 128;

inline constexpr const char* kTagBlind = "blind-v1";
inline constexpr const char* kTagTeacher = "teacher-v1";
inline constexpr const char* kTagTeacherNoBase = "teacher-nobase-v1";
inline constexpr const char* kTagStudent = "student-v1";
inline constexpr const char* kTagCriticBlind = "critic-blind-v1";
inline constexpr const char* kTagCriticTeacher = "critic-teacher-v1";

netcore::ParameterStore init_blind_params(std::uint64_t seed);
// blind == nullptr builds the no-base ablation (differential head only).
netcore::ParameterStore init_teacher_params(
    std::uint64_t seed, const netcore::ParameterStore* blind);
// Downstream weights (pc encoder, LSTM, head, log std) and the frozen blind
// block are copied from the teacher; vision encoder is fresh.
netcore::ParameterStore init_student_params(
    std::uint64_t seed, const netcore::ParameterStore& teacher);
netcore::ParameterStore init_critic_params(std::uint64_t seed,
                                           bool with_terrain_embed);

// Two-layer LSTM hidden state.
struct LstmPair {
  std::vector<Real> h0, c0, h1, c1;
  void reset(int hidden) {
    h0.assign(hidden, 0);
    c0.assign(hidden, 0);
    h1.assign(hidden, 0);
    c1.assign(hidden, 0);
  }
};

class BlindNet {
 public:
  explicit BlindNet(const netcore::ParameterStore* p,
                    const std::string& prefix = "blind.");
  void step(const Real* obs, LstmPair& s, Real* mean6) const;
  const Real* log_std() const { return log_std_->ptr(); }

 private:
  netcore::LstmView l0_, l1_;
  const Tensor *head_w_, *head_b_, *log_std_;
};

struct PolicyStepOut {
  std::array<Real, kActionDim> mean{};
  std::array<Real, kActionDim> base{};
  std::array<Real, kActionDim> diff{};
  std::array<Real, kHmEmbed> embed{};
};

class TeacherNet {
 public:
  explicit TeacherNet(const netcore::ParameterStore* p);
  bool has_base() const { return has_base_; }
  // hm2400 is the quadrant-concatenated height map.
  void step(const Real* obs, const Real* hm2400, LstmPair& blind_s,
            LstmPair& ds_s, PolicyStepOut& out) const;
  // Variant with the embedding and base action computed elsewhere (replay
  // over stored trajectories shares one blind stream across label passes).
  void step_from(const Real* obs, const Real* embed128, const Real* base6,
                 LstmPair& ds_s, PolicyStepOut& out) const;
  // Terrain embedding alone (used when sharing it with the critic).
  void embed_only(const Real* hm2400, Real* embed128) const;
  const Real* log_std() const { return log_std_->ptr(); }

 private:
  bool has_base_ = false;
  std::unique_ptr<BlindNet> blind_owned_;
  const Tensor *fc0_w_, *fc0_b_, *fc1_w_, *fc1_b_;
  const Tensor *pc_w_, *pc_b_;
  netcore::LstmView l0_, l1_;
  const Tensor *head_w_, *head_b_, *log_std_;
};

class StudentNet {
 public:
  explicit StudentNet(const netcore::ParameterStore* p);
  bool has_base() const { return has_base_; }
  void step(const Real* obs, const DepthQuad& depth, LstmPair& blind_s,
            LstmPair& ds_s, PolicyStepOut& out) const;
  // Variant reusing a precomputed vision embedding and base action.
  void step_from(const Real* obs, const Real* embed128, const Real* base6,
                 LstmPair& ds_s, PolicyStepOut& out) const;
  // Vision pipeline alone: 4 depth images -> 128-dim embedding.
  void encode(const DepthQuad& depth, Real* embed128) const;
  const Real* log_std() const { return log_std_->ptr(); }
  const netcore::ParameterStore* params() const { return p_; }

 private:
  const netcore::ParameterStore* p_;
  bool has_base_ = false;
  std::unique_ptr<BlindNet> blind_owned_;
  const Tensor *pc_w_, *pc_b_;
  netcore::LstmView l0_, l1_;
  const Tensor *head_w_, *head_b_, *log_std_;
};

// Depth normalisation for the CNN input.
inline Real normalize_depth(Real d) { return (d - 0.2) / 3.8; }

class CriticNet {
 public:
  explicit CriticNet(const netcore::ParameterStore* p);
  bool uses_embed() const { return with_embed_; }
  Real step(const Real* extras49, const Real* hm_embed, LstmPair& s) const;

 private:
  bool with_embed_ = false;
  const Tensor *enc_w_, *enc_b_;
  netcore::LstmView l0_, l1_;
  const Tensor *head_w_, *head_b_;
};

}  // namespace omniloco
