#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "omniloco/config.hpp"
#include "omniloco/rlteach.hpp"

namespace omniloco {

Real median(std::vector<Real> v);

// Cost-to-threshold of one training run.  When the run never reached the
// threshold the cost is the whole budget it consumed, which makes the
// with/without ratio an upper bound (the comparison stays conservative).
struct ArmCost {
  std::uint64_t seed = 0;
  Real threshold = 0;
  Real cost = 0;
  bool reached = false;
  Real final_metric = 0;  // tail-mean return / final held-out MSE
};

struct AblationResult {
  std::string name;
  std::vector<ArmCost> ref;  // with frozen base / with injection
  std::vector<ArmCost> alt;  // from scratch / without injection
  Real median_ratio = 0;     // median over seeds of ref.cost / alt.cost

  std::string summary() const;
};

// Mean return over the last `window` iterations of a run.
Real tail_mean_return(const std::vector<IterStats>& history, int window = 10);

// Cumulative-sample and return curves from a run history, then the
// samples-to-threshold lookup.
long long history_samples_to_threshold(const std::vector<IterStats>& history,
                                       Real threshold, int smooth_window = 5);

// Teacher with the frozen blind base against the same architecture trained
// from scratch; threshold = 80% of the with-base run's converged return,
// recomputed per seed.
AblationResult ablate_teacher_base(const RunConfig& cfg,
                                   std::span<const std::uint64_t> seeds,
                                   std::ostream* progress = nullptr);

// Distillation with command injection against no injection (K = 0); cost is
// rendered frames to the held-out MSE threshold.  The no-injection arm gets
// a longer round budget so a slower-but-successful run still registers.
AblationResult ablate_injection(const RunConfig& cfg,
                                std::span<const std::uint64_t> seeds,
                                std::ostream* progress = nullptr);

}  // namespace omniloco
