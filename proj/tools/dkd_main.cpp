// Command-line front end for the distillation testbed. Every command is a
// pure function of (config file, referenced input files): identical inputs
// give byte-identical outputs.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 divergence,
// 5 I/O error, 1 anything unexpected.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkd/errors.hpp"
#include "dkd/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> extra_seeds;
  std::optional<std::string> out_flag;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.extra_seeds,
                  "append a seed to the config's seed list (repeatable)");
  cmd->add_option_function<std::string>(
      "--out", [&args](const std::string& v) { args.out_flag = v; },
      "output directory (overrides config out_dir)");
}

dkd::ExperimentConfig load(const CommonArgs& args) {
  dkd::ExperimentConfig cfg = dkd::load_config(args.config_path);
  for (std::uint64_t s : args.extra_seeds) {
    cfg.seeds.push_back(s);
  }
  dkd::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teacher/student distillation testbed with decoupled KD"};
  app.require_subcommand(1);

  CommonArgs gen_args, teacher_args, distill_args, eval_args, sweep_args,
      ablate_args;
  std::string distill_mode = "dkd";
  double distill_gamma = -1.0;  // <0: keep config value
  double distill_kd_weight = -1.0;
  std::int64_t distill_epochs = -1;
  std::string eval_checkpoint;
  std::string eval_scores_out;
  std::vector<std::string> report_csvs;
  std::string report_out = "out";

  CLI::App* gen = app.add_subcommand("gen-data", "write datasets, trials and manifest");
  add_common(gen, gen_args);

  CLI::App* teach = app.add_subcommand("train-teacher", "train one teacher per seed");
  add_common(teach, teacher_args);

  CLI::App* dist = app.add_subcommand("distill", "distill students from saved teachers");
  add_common(dist, distill_args);
  dist->add_option("--mode", distill_mode,
                   "kd mode: none|cosine_embedding|conventional_kld|dkd");
  dist->add_option("--gamma", distill_gamma, "NSKD weight (dkd mode)");
  dist->add_option("--kd-weight", distill_kd_weight, "weight of the KD term");
  dist->add_option("--epochs", distill_epochs, "override student epochs");

  CLI::App* ev = app.add_subcommand("eval", "score a checkpoint on the shared eval trials");
  add_common(ev, eval_args);
  ev->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")->required();
  ev->add_option("--scores-out", eval_scores_out, "also dump per-trial scores here");

  CLI::App* sweep = app.add_subcommand(
      "sweep-speakers", "fixed-budget speaker-count sweep (students from scratch)");
  add_common(sweep, sweep_args);

  CLI::App* ablate = app.add_subcommand(
      "ablate-gamma", "run none/cos/kld plus dkd over the gamma grid");
  add_common(ablate, ablate_args);

  CLI::App* report = app.add_subcommand("report", "summarize result CSVs");
  report->add_option("csv", report_csvs, "input CSV files")->required();
  report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto cfg = load(gen_args);
      auto files = dkd::run_gen_data(cfg, dkd::resolve_out_dir(cfg, gen_args.out_flag));
      for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    } else if (*teach) {
      auto cfg = load(teacher_args);
      dkd::run_train_teacher(cfg, dkd::resolve_out_dir(cfg, teacher_args.out_flag));
    } else if (*dist) {
      auto cfg = load(distill_args);
      dkd::KdMode mode;
      try {
        mode = dkd::kd_mode_from_string(distill_mode);
      } catch (const std::invalid_argument& e) {
        throw dkd::ConfigError(e.what());
      }
      if (distill_gamma >= 0.0) cfg.kd.gamma = distill_gamma;
      if (distill_kd_weight >= 0.0) cfg.kd.kd_weight = distill_kd_weight;
      if (distill_epochs >= 0) cfg.student.epochs = static_cast<std::size_t>(distill_epochs);
      dkd::validate_config(cfg);
      dkd::run_distill(cfg, dkd::resolve_out_dir(cfg, distill_args.out_flag), mode,
                       cfg.kd.gamma);
    } else if (*ev) {
      auto cfg = load(eval_args);
      std::optional<std::filesystem::path> scores;
      if (!eval_scores_out.empty()) scores = eval_scores_out;
      dkd::EvalReport r = dkd::run_eval(
          cfg, eval_checkpoint, dkd::resolve_out_dir(cfg, eval_args.out_flag), scores);
      std::printf("eer %.6f  min_dcf %.6f  threshold_at_eer %.6f  (%zu target / %zu nontarget trials)\n",
                  r.eer, r.min_dcf, r.threshold_at_eer, r.num_target_trials,
                  r.num_nontarget_trials);
    } else if (*sweep) {
      auto cfg = load(sweep_args);
      auto csv = dkd::run_sweep_speakers(cfg, dkd::resolve_out_dir(cfg, sweep_args.out_flag));
      std::cout << "wrote " << csv.string() << "\n";
    } else if (*ablate) {
      auto cfg = load(ablate_args);
      auto csv = dkd::run_ablate_gamma(cfg, dkd::resolve_out_dir(cfg, ablate_args.out_flag));
      std::cout << "wrote " << csv.string() << "\n";
    } else if (*report) {
      std::vector<std::filesystem::path> paths(report_csvs.begin(), report_csvs.end());
      auto files = dkd::run_report(paths, report_out);
      for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    }
  } catch (const dkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dkd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const dkd::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const dkd::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 5;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
