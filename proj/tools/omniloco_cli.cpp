// Experiment driver: terrain preview, blind/teacher training, distillation,
// evaluation, ablations and plots.  Every run writes into a directory named
// by timestamp + config hash holding the resolved config, a meta file and
// the artifacts, so results stay traceable to their exact settings.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "omniloco/ablate.hpp"
#include "omniloco/config.hpp"
#include "omniloco/distill.hpp"
#include "omniloco/evalsuite.hpp"
#include "omniloco/logio.hpp"
#include "omniloco/parallel.hpp"
#include "omniloco/plot.hpp"
#include "omniloco/rlteach.hpp"
#include "omniloco/terrain.hpp"

namespace fs = std::filesystem;
using namespace omniloco;

namespace {

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
#ifdef _WIN32
  localtime_s(&tm, &t);
#else
  localtime_r(&t, &tm);
#endif
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string make_run_dir(std::string dir, const RunConfig& cfg,
                         const std::string& label) {
  if (dir.empty())
    dir = "runs/" + timestamp() + "-" +
          config_hash_hex(cfg).substr(0, 8) + "-" + label;
  fs::create_directories(dir);
  return dir;
}

// The resolved config plus a meta file tie every artifact in the directory
// to its hash and seed.
void write_run_meta(const std::string& dir, const RunConfig& cfg,
                    const std::string& command) {
  save_config(cfg, dir + "/config.json");
  std::ostringstream meta;
  meta << "config\t" << config_hash_hex(cfg) << "\n";
  meta << "seed\t" << cfg.seed << "\n";
  meta << "command\t" << command << "\n";
  logio::write_text_file(dir + "/meta.txt", meta.str());
}

netcore::ParameterStore load_policy(const std::string& path) {
  OL_REQUIRE(fs::exists(path), "no such checkpoint: " + path);
  return netcore::ParameterStore::load(path);
}

void print_report(const EvalReport& rep, std::ostream& os) {
  os << "policy " << rep.policy << " (" << policy_arch_name(rep.arch)
     << "), " << rep.episodes_per_tier << " episodes/tier, seed " << rep.seed
     << "\n";
  for (int ti = 0; ti < kReportTiers; ++ti) {
    const TierReport& t = rep.tiers[ti];
    const auto ci = t.success_ci();
    char line[256];
    std::snprintf(line, sizeof line,
                  "  %-11s success %.3f [%.3f,%.3f]  collision %.3f  "
                  "term-collision %.3f  energy %.4f\n",
                  report_tier_name(t.tier), t.success_rate(), ci[0], ci[1],
                  t.collision_rate(), t.term_collision_rate(),
                  t.mean_energy_rate());
    os << line;
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  OL_REQUIRE(!seeds.empty(), "no seeds given");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omnidirectional bipedal locomotion training artifact"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "config JSON (defaults when absent)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "run directory (default runs/<time>-<hash>)");
  app.add_option("--threads", threads, "worker threads (0 = library default)");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");

  // --- gen-terrain ---
  auto* gen = app.add_subcommand("gen-terrain", "generate terrain files");
  std::string kind_name = "stairs", tier_name = "train";
  int gen_count = 1;
  gen->add_option("--kind", kind_name,
                  "flat|hills|blocks|ridges|stairs|mix");
  gen->add_option("--tier", tier_name, "train|easy|hard");
  gen->add_option("--count", gen_count, "terrains to generate");

  // --- train-blind ---
  auto* tb = app.add_subcommand("train-blind", "train the blind base policy");
  std::string tb_resume;
  int tb_iters = 0;
  tb->add_option("--resume", tb_resume, "checkpoint to continue from");
  tb->add_option("--iters", tb_iters, "override iteration count");

  // --- train-teacher ---
  auto* tt = app.add_subcommand("train-teacher",
                                "train the privileged teacher");
  std::string tt_blind, tt_resume;
  bool tt_no_blind = false;
  int tt_iters = 0;
  tt->add_option("--blind", tt_blind, "trained blind actor file");
  tt->add_flag("--no-blind", tt_no_blind,
               "train from scratch (no frozen base)");
  tt->add_option("--resume", tt_resume, "checkpoint to continue from");
  tt->add_option("--iters", tt_iters, "override iteration count");

  // --- distill ---
  auto* ds = app.add_subcommand("distill", "distill teacher into the student");
  std::string ds_teacher;
  bool ds_no_augment = false;
  int ds_rounds = 0;
  ds->add_option("--teacher", ds_teacher, "trained teacher actor file")
      ->required();
  ds->add_flag("--no-augment", ds_no_augment,
               "disable command injection (K = 0)");
  ds->add_option("--rounds", ds_rounds, "override round count");

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "held-out evaluation of a policy");
  std::string ev_params, ev_name;
  int ev_episodes = 0;
  ev->add_option("--params", ev_params, "policy parameter file")->required();
  ev->add_option("--name", ev_name, "label in the report");
  ev->add_option("--episodes", ev_episodes, "episodes per tier override");

  // --- plot ---
  auto* pl = app.add_subcommand("plot", "render curves or report panels");
  std::string pl_log, pl_cols = "ret_mean,success", pl_img;
  std::vector<std::string> pl_reports;
  pl->add_option("--log", pl_log, "training log to plot");
  pl->add_option("--cols", pl_cols, "comma-separated log columns");
  pl->add_option("--image", pl_img, "output image for --log");
  pl->add_option("--reports", pl_reports, "eval reports for metric panels")
      ->expected(-1);

  // --- ablate ---
  auto* ab = app.add_subcommand("ablate", "run an ablation suite");
  std::string ab_which = "teacher-base", ab_seeds = "1,2,3";
  ab->add_option("--which", ab_which, "teacher-base|injection");
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds");

  // --- pipeline ---
  auto* pp = app.add_subcommand(
      "pipeline", "terrain gen + blind training + eval in one deterministic run");
  int pp_iters = 100, pp_episodes = 10;
  pp->add_option("--iters", pp_iters, "training iterations");
  pp->add_option("--episodes", pp_episodes, "eval episodes per tier");

  auto* ct = app.add_subcommand("config-template",
                                "write a commented default config");
  std::string ct_path = "config-template.json";
  ct->add_option("--path", ct_path, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    validate(cfg);
    parallel::set_threads(cfg.threads);

    std::ostringstream cmdline;
    for (int i = 0; i < argc; ++i) cmdline << (i ? " " : "") << argv[i];

    if (*ct) {
      write_config_template(ct_path);
      std::cout << "wrote " << ct_path << "\n";
      return 0;
    }

    if (*gen) {
      const std::string dir = make_run_dir(out_dir, cfg, "terrain");
      write_run_meta(dir, cfg, cmdline.str());
      Rng rng(cfg.seed);
      const EvalTier tier = eval_tier_from_name(tier_name);
      for (int i = 0; i < gen_count; ++i) {
        TerrainKind kind;
        if (kind_name == "mix")
          kind = static_cast<TerrainKind>(
              rng.categorical(std::span<const Real>(kTerrainKindProbs)));
        else
          kind = terrain_kind_from_name(kind_name);
        const TerrainSpec spec =
            sample_terrain_spec(kind, tier, cfg.terrain, rng);
        const HeightField field = generate_terrain(spec, cfg.terrain);
        const std::string stem = dir + "/terrain-" + std::to_string(i);
        save_heightfield(field, &spec, stem + ".hf");
        write_preview_pgm(field, stem + ".pgm");
        std::cout << stem << ".hf  " << terrain_kind_name(spec.kind)
                  << " (" << eval_tier_name(spec.tier) << ")\n";
      }
      return 0;
    }

    if (*tb) {
      if (tb_iters > 0) cfg.blind.iterations = tb_iters;
      const std::string dir = make_run_dir(out_dir, cfg, "blind");
      write_run_meta(dir, cfg, cmdline.str());
      PpoTrainer tr = make_blind_trainer(cfg, cfg.seed);
      if (!tb_resume.empty()) tr.load_checkpoint(tb_resume);
      std::ofstream log(dir + "/train.tsv");
      tr.run(log, dir);
      tr.actor_params().save(dir + "/blind-actor.bin");
      tr.save_checkpoint(dir + "/blind-ckpt.bin");
      const IterStats& last = tr.history().back();
      std::cout << "blind: " << tr.iteration() << " iterations, return "
                << last.ret_mean << ", success " << last.success << "\n"
                << "artifacts in " << dir << "\n";
      return 0;
    }

    if (*tt) {
      if (tt_iters > 0) cfg.teacher.iterations = tt_iters;
      if (tt_no_blind) cfg.teacher.use_blind = false;
      const std::string dir = make_run_dir(out_dir, cfg, "teacher");
      write_run_meta(dir, cfg, cmdline.str());
      netcore::ParameterStore blind;
      const netcore::ParameterStore* blind_ptr = nullptr;
      if (cfg.teacher.use_blind) {
        OL_REQUIRE(!tt_blind.empty(),
                   "train-teacher needs --blind <actor file> (or --no-blind)");
        blind = netcore::ParameterStore::load(tt_blind, kTagBlind);
        blind_ptr = &blind;
      }
      PpoTrainer tr = make_teacher_trainer(cfg, blind_ptr, cfg.seed);
      if (!tt_resume.empty()) tr.load_checkpoint(tt_resume);
      std::ofstream log(dir + "/train.tsv");
      tr.run(log, dir);
      tr.actor_params().save(dir + "/teacher-actor.bin");
      tr.save_checkpoint(dir + "/teacher-ckpt.bin");
      const IterStats& last = tr.history().back();
      std::cout << "teacher: " << tr.iteration() << " iterations, return "
                << last.ret_mean << ", success " << last.success << "\n"
                << "artifacts in " << dir << "\n";
      return 0;
    }

    if (*ds) {
      if (ds_rounds > 0) cfg.distill.rounds = ds_rounds;
      if (ds_no_augment) {
        cfg.distill.use_injection = false;
        cfg.distill.inject.k = 0;
      }
      const std::string dir = make_run_dir(out_dir, cfg, "distill");
      write_run_meta(dir, cfg, cmdline.str());
      const netcore::ParameterStore teacher = load_policy(ds_teacher);
      OL_REQUIRE(teacher.arch_tag == kTagTeacher ||
                     teacher.arch_tag == kTagTeacherNoBase,
                 "distill: '" + ds_teacher + "' is not a teacher (tag '" +
                     teacher.arch_tag + "')");
      Distiller d(cfg, &teacher, cfg.seed);
      std::ofstream log(dir + "/distill.tsv");
      const DistillResult res = d.run(log);
      d.student().save(dir + "/student-actor.bin");
      if (res.converged)
        std::cout << "converged after " << res.rounds << " rounds, "
                  << res.frames_to_threshold << " rendered frames\n";
      else
        std::cout << "did not reach MSE " << cfg.distill.mse_threshold
                  << " in " << res.rounds << " rounds (final "
                  << res.history.back().heldout_mse << ")\n";
      std::cout << "artifacts in " << dir << "\n";
      return 0;
    }

    if (*ev) {
      if (ev_episodes > 0) cfg.eval.episodes_per_tier = ev_episodes;
      const std::string dir = make_run_dir(out_dir, cfg, "eval");
      write_run_meta(dir, cfg, cmdline.str());
      const netcore::ParameterStore params = load_policy(ev_params);
      const std::string name =
          ev_name.empty() ? policy_arch_name(policy_arch_of(params)) : ev_name;
      const EvalReport rep = run_eval(params, cfg, cfg.seed, name);
      write_report(rep, dir + "/report-" + name + ".tsv");
      print_report(rep, std::cout);
      std::cout << "artifacts in " << dir << "\n";
      return 0;
    }

    if (*pl) {
      OL_REQUIRE(!pl_log.empty() || !pl_reports.empty(),
                 "plot needs --log or --reports");
      const std::string dir = make_run_dir(out_dir, cfg, "plot");
      if (!pl_log.empty()) {
        std::vector<std::string> cols;
        std::stringstream ss(pl_cols);
        std::string tok;
        while (std::getline(ss, tok, ','))
          if (!tok.empty()) cols.push_back(tok);
        const std::string img =
            pl_img.empty() ? dir + "/curves.ppm" : pl_img;
        plot::log_curves(logio::read_table(pl_log), cols, img);
        std::cout << "wrote " << img << "\n";
      }
      if (!pl_reports.empty()) {
        std::vector<EvalReport> reps;
        for (const std::string& p : pl_reports)
          reps.push_back(read_report(p));
        const auto paths = plot::report_panels(reps, dir + "/panel");
        for (const auto& p : paths) std::cout << "wrote " << p << "\n";
      }
      return 0;
    }

    if (*ab) {
      const std::string dir = make_run_dir(out_dir, cfg, "ablate");
      write_run_meta(dir, cfg, cmdline.str());
      const std::vector<std::uint64_t> seeds = parse_seeds(ab_seeds);
      AblationResult res;
      if (ab_which == "teacher-base")
        res = ablate_teacher_base(cfg, seeds, &std::cout);
      else if (ab_which == "injection")
        res = ablate_injection(cfg, seeds, &std::cout);
      else
        OL_REQUIRE(false, "unknown ablation '" + ab_which + "'");
      logio::write_text_file(dir + "/" + res.name + ".txt", res.summary());
      std::cout << res.summary() << "artifacts in " << dir << "\n";
      return 0;
    }

    if (*pp) {
      cfg.blind.iterations = pp_iters;
      cfg.eval.episodes_per_tier = pp_episodes;
      const std::string dir = make_run_dir(out_dir, cfg, "pipeline");
      write_run_meta(dir, cfg, cmdline.str());

      Rng rng(cfg.seed);
      const TerrainSpec spec = sample_terrain_spec(
          static_cast<TerrainKind>(
              rng.categorical(std::span<const Real>(kTerrainKindProbs))),
          EvalTier::Train, cfg.terrain, rng);
      save_heightfield(generate_terrain(spec, cfg.terrain),
                       &spec, dir + "/terrain.hf");

      PpoTrainer tr = make_blind_trainer(cfg, cfg.seed);
      {
        std::ofstream log(dir + "/train.tsv");
        tr.run(log);
      }
      const EvalReport rep =
          run_eval(tr.actor_params(), cfg, cfg.seed, "blind");
      write_report(rep, dir + "/report.tsv");
      print_report(rep, std::cout);
      std::cout << "artifacts in " << dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
