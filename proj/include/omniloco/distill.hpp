#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "omniloco/config.hpp"
#include "omniloco/policy.hpp"
#include "omniloco/rng.hpp"
#include "omniloco/tensor.hpp"

namespace omniloco {

// ---------------------------------------------------------------------------
// Teacher -> student distillation: student-driven collection with per-step
// teacher labels, command injection over the stored sequences, and recurrent
// supervised updates.  Rendering is metered; injection multiplies the
// supervision pairs without touching the render count.
// ---------------------------------------------------------------------------

struct DistillEpisode {
  int T = 0;
  TerrainKind kind = TerrainKind::Flat;
  Tensor pc;     // [T,17] observations as the student saw them
  Tensor hm;     // [T,2400] clean privileged height maps
  Tensor embed;  // [T,128] teacher terrain embedding
  Tensor base;   // [T,6] frozen blind action over pc
  Tensor mean;   // [T,6] teacher action labels
  // Clean renders, float32, [T][camera][pixel]; augmented at training time.
  std::vector<float> depth;

  // One injected command: slots 13..15 overwritten along the whole episode
  // (height untouched), both recurrences replayed from the episode start.
  struct Variant {
    Command cmd;
    Tensor base;  // [T,6]
    Tensor mean;  // [T,6]
  };
  std::vector<Variant> variants;

  static constexpr int kDepthRow = 4 * DepthImage::kRes * DepthImage::kRes;
  const float* depth_row(int t) const {
    return depth.data() + static_cast<std::size_t>(t) * kDepthRow;
  }
  float* depth_row(int t) {
    return depth.data() + static_cast<std::size_t>(t) * kDepthRow;
  }
};

struct DistillBuffer {
  std::vector<DistillEpisode> episodes;
  std::uint64_t render_count = 0;  // depth frames rendered (4 per env step)
  std::uint64_t pair_count = 0;    // supervision pairs, steps x (1 + K)
  std::uint64_t env_steps = 0;
};

// One episode under student mean actions; the teacher labels every step from
// the clean height map while sharing the student's frozen base stream.
DistillEpisode collect_episode(const netcore::ParameterStore& student,
                               const netcore::ParameterStore& teacher,
                               const RunConfig& cfg, Rng rng,
                               RenderCounter* counter);

// Appends n episodes (streams root.spawn(stream0 + i)) and updates the
// buffer counters.
void dagger_collect(DistillBuffer& buf, const netcore::ParameterStore& student,
                    const netcore::ParameterStore& teacher,
                    const RunConfig& cfg, const Rng& root,
                    std::uint64_t stream0, int n_episodes);

// Replays the stored sequence with the command overwritten (nullptr replays
// it unchanged, which must reproduce the stored labels bit-exactly).
DistillEpisode::Variant make_variant(const DistillEpisode& ep,
                                     const netcore::ParameterStore& teacher,
                                     const Command* cmd);

// K injected command draws per episode in [first_episode, end); every draw
// is checked against the spec ranges.  pair_count grows by T x K per
// episode; render_count is untouched.
void inject_commands(DistillBuffer& buf, std::size_t first_episode,
                     const InjectionConfig& spec,
                     const netcore::ParameterStore& teacher, Rng& rng);

// Binary round-trip so buffers can be replayed offline.
void save_buffer(const DistillBuffer& buf, const std::string& path);
DistillBuffer load_buffer(const std::string& path);

struct DistillStats {
  int round = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t render_count = 0;
  std::uint64_t pair_count = 0;
  Real loss_kl = 0;
  Real loss_embed = 0;
  Real heldout_mse = 0;        // action-mean MSE on the held-out episodes
  Real heldout_embed_mse = 0;
};

struct DistillResult {
  bool converged = false;
  int rounds = 0;
  std::uint64_t frames_to_threshold = 0;  // render_count at convergence
  std::vector<DistillStats> history;
};

class Distiller {
 public:
  // The student is initialized from the teacher (fresh vision encoder,
  // copied downstream and frozen base).
  Distiller(const RunConfig& cfg, const netcore::ParameterStore* teacher,
            std::uint64_t seed);

  DistillStats round();
  // Alternates rounds until the held-out MSE threshold or cfg.rounds.
  DistillResult run(std::ostream& log);

  const netcore::ParameterStore& student() const { return student_; }
  const netcore::ParameterStore& teacher() const { return teacher_; }
  const DistillBuffer& buffer() const { return buf_; }
  int heldout_episodes() const { return static_cast<int>(heldout_.size()); }

  // {action MSE, embedding MSE} of the current student on the held-out set.
  std::array<Real, 2> heldout_mse() const;

  static std::vector<std::string> log_columns();

 private:
  void build_heldout();
  // One pass over the episode: windows in order, Adam step per window.
  // Accumulates {kl loss, embed loss, windows} into the sums.
  void train_episode(const DistillEpisode& ep, Real* sum_kl, Real* sum_embed,
                     std::size_t* n_windows);

  RunConfig cfg_;
  std::uint64_t seed_ = 0;
  netcore::ParameterStore teacher_;
  netcore::ParameterStore student_;
  std::vector<std::size_t> trainable_;
  netcore::Adam adam_;
  Rng collect_root_, inject_rng_, train_rng_;
  DistillBuffer buf_;
  std::vector<DistillEpisode> heldout_;  // variant lists unused
  int round_ = 0;
  std::vector<DistillStats> history_;
};

// First round whose held-out MSE is at or under the threshold; returns the
// render count at that round, or 0 when the run never got there.
std::uint64_t frames_to_threshold(const std::vector<DistillStats>& history,
                                  Real threshold);

}  // namespace omniloco
