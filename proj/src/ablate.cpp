#include "omniloco/ablate.hpp"

#include <algorithm>
#include <sstream>

#include "omniloco/distill.hpp"

namespace omniloco {

Real median(std::vector<Real> v) {
  OL_REQUIRE(!v.empty(), "median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Real tail_mean_return(const std::vector<IterStats>& history, int window) {
  OL_REQUIRE(!history.empty(), "tail_mean_return: empty history");
  const int n = static_cast<int>(history.size());
  const int w = std::min(window, n);
  Real s = 0;
  for (int i = n - w; i < n; ++i) s += history[static_cast<std::size_t>(i)].ret_mean;
  return s / static_cast<Real>(w);
}

long long history_samples_to_threshold(const std::vector<IterStats>& history,
                                       Real threshold, int smooth_window) {
  std::vector<Real> cum, ret;
  Real total = 0;
  for (const IterStats& st : history) {
    total += st.samples;
    cum.push_back(total);
    ret.push_back(st.ret_mean);
  }
  return samples_to_threshold(cum, ret, threshold, smooth_window);
}

std::string AblationResult::summary() const {
  std::ostringstream os;
  os << "ablation " << name << ": median ratio " << median_ratio << "\n";
  for (std::size_t i = 0; i < ref.size(); ++i) {
    os << "  seed " << ref[i].seed << ": ref " << ref[i].cost
       << (ref[i].reached ? "" : " (budget cap)") << ", alt " << alt[i].cost
       << (alt[i].reached ? "" : " (budget cap)") << ", threshold "
       << ref[i].threshold << "\n";
  }
  return os.str();
}

namespace {

Real finish_ratio(AblationResult& res) {
  std::vector<Real> ratios;
  for (std::size_t i = 0; i < res.ref.size(); ++i)
    ratios.push_back(res.ref[i].cost / res.alt[i].cost);
  res.median_ratio = median(ratios);
  return res.median_ratio;
}

}  // namespace

AblationResult ablate_teacher_base(const RunConfig& cfg,
                                   std::span<const std::uint64_t> seeds,
                                   std::ostream* progress) {
  OL_REQUIRE(!seeds.empty(), "ablate_teacher_base: no seeds");
  AblationResult res;
  res.name = "teacher-base";

  for (std::uint64_t seed : seeds) {
    std::ostringstream sink;
    PpoTrainer blind = make_blind_trainer(cfg, seed);
    blind.run(sink);

    PpoTrainer with = make_teacher_trainer(cfg, &blind.actor_params(), seed);
    with.run(sink);

    // From-scratch converges later, so it gets double the iterations; the
    // cost comparison uses samples actually consumed, not the budget.
    RunConfig alt_cfg = cfg;
    alt_cfg.teacher.iterations = 2 * cfg.teacher.iterations;
    PpoTrainer scratch = make_teacher_trainer(alt_cfg, nullptr, seed);
    scratch.run(sink);

    const Real thr = 0.8 * tail_mean_return(with.history());

    ArmCost rc, ac;
    rc.seed = ac.seed = seed;
    rc.threshold = ac.threshold = thr;
    rc.final_metric = tail_mean_return(with.history());
    ac.final_metric = tail_mean_return(scratch.history());

    const long long sw = history_samples_to_threshold(with.history(), thr);
    rc.reached = sw >= 0;
    rc.cost = rc.reached ? static_cast<Real>(sw)
                         : static_cast<Real>(with.samples());
    const long long ss = history_samples_to_threshold(scratch.history(), thr);
    ac.reached = ss >= 0;
    ac.cost = ac.reached ? static_cast<Real>(ss)
                         : static_cast<Real>(scratch.samples());

    res.ref.push_back(rc);
    res.alt.push_back(ac);
    if (progress)
      (*progress) << "teacher-base seed " << seed << ": with " << rc.cost
                  << (rc.reached ? "" : " (cap)") << ", scratch " << ac.cost
                  << (ac.reached ? "" : " (cap)") << ", threshold " << thr
                  << "\n"
                  << std::flush;
  }
  finish_ratio(res);
  return res;
}

AblationResult ablate_injection(const RunConfig& cfg,
                                std::span<const std::uint64_t> seeds,
                                std::ostream* progress) {
  OL_REQUIRE(!seeds.empty(), "ablate_injection: no seeds");
  AblationResult res;
  res.name = "injection";

  for (std::uint64_t seed : seeds) {
    std::ostringstream sink;
    const netcore::ParameterStore* blind_actor = nullptr;
    std::unique_ptr<PpoTrainer> blind;
    if (cfg.teacher.use_blind) {
      blind = std::make_unique<PpoTrainer>(make_blind_trainer(cfg, seed));
      blind->run(sink);
      blind_actor = &blind->actor_params();
    }
    PpoTrainer teacher = make_teacher_trainer(cfg, blind_actor, seed);
    teacher.run(sink);

    RunConfig with_cfg = cfg;
    with_cfg.distill.use_injection = true;
    Distiller with(with_cfg, &teacher.actor_params(), seed);
    const DistillResult rw = with.run(sink);

    RunConfig without_cfg = cfg;
    without_cfg.distill.use_injection = false;
    without_cfg.distill.inject.k = 0;
    without_cfg.distill.rounds = 3 * cfg.distill.rounds;
    Distiller without(without_cfg, &teacher.actor_params(), seed);
    const DistillResult ro = without.run(sink);

    ArmCost rc, ac;
    rc.seed = ac.seed = seed;
    rc.threshold = ac.threshold = cfg.distill.mse_threshold;
    rc.reached = rw.converged;
    rc.cost = rw.converged
                  ? static_cast<Real>(rw.frames_to_threshold)
                  : static_cast<Real>(with.buffer().render_count);
    rc.final_metric = rw.history.empty() ? 0 : rw.history.back().heldout_mse;
    ac.reached = ro.converged;
    ac.cost = ro.converged
                  ? static_cast<Real>(ro.frames_to_threshold)
                  : static_cast<Real>(without.buffer().render_count);
    ac.final_metric = ro.history.empty() ? 0 : ro.history.back().heldout_mse;

    res.ref.push_back(rc);
    res.alt.push_back(ac);
    if (progress)
      (*progress) << "injection seed " << seed << ": with " << rc.cost
                  << (rc.reached ? "" : " (cap)") << ", without " << ac.cost
                  << (ac.reached ? "" : " (cap)") << "\n"
                  << std::flush;
  }
  finish_ratio(res);
  return res;
}

}  // namespace omniloco
