#ifndef DKD_EXPERIMENTS_HPP
#define DKD_EXPERIMENTS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dkd/data.hpp"
#include "dkd/eval.hpp"
#include "dkd/trainer.hpp"

// Experiment orchestration shared by the CLI and the acceptance suite.
//
// Seeding scheme: the universe and the shared held-out eval set (speakers,
// utterances, trials) derive only from universe.seed, so every run and
// every arm scores against identical trials. Per-run randomness (speaker
// subset, utterance noise, init, shuffling) derives from the run seed.

namespace dkd {

struct UniverseSettings {
  std::size_t speakers = 600;
  std::size_t eval_speakers = 100;  // tail of the id range, never trained on
  std::size_t latent_dim = 8;
  std::size_t feature_dim = 24;
  double intra_std = 0.4;
  std::uint64_t seed = 42;
};

struct DataSettings {
  std::size_t train_speakers = 200;
  std::size_t utterances_per_speaker = 25;
  std::size_t eval_utterances_per_speaker = 10;
  std::size_t target_trials = 2000;
  std::size_t nontarget_trials = 2000;
};

struct PhaseSettings {
  std::vector<std::size_t> dims;  // post-input layer widths; last = embedding
  std::size_t epochs = 0;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double aam_scale = 32.0;
  double aam_margin = 0.2;
  double margin_warmup_frac = 0.3;  // fraction of total steps
};

struct KdSettings {
  KdMode mode = KdMode::dkd;
  double gamma = 2.0;
  double kd_weight = 1.0;
  double temperature = 1.0;
  std::vector<double> gamma_grid = {0.0, 1.0, 2.0, 4.0};
};

struct SweepSettings {
  std::size_t budget = 5000;
  std::vector<std::size_t> speaker_grid = {50, 100, 250, 500};
};

struct ExperimentConfig {
  UniverseSettings universe;
  DataSettings data;
  PhaseSettings teacher;
  PhaseSettings student;
  KdSettings kd;
  SweepSettings sweep;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
};

// Built-in defaults (teacher dims [256,128,64], student [32,16], epochs
// tuned for the desk-scale benchmark).
ExperimentConfig default_config();

// Strict parse: unknown keys anywhere are a ConfigError; the whole config
// is validated before any compute.
ExperimentConfig load_config(const std::filesystem::path& path);
void validate_config(const ExperimentConfig& cfg);

// out_dir resolution: explicit --out beats the config value; a relative
// path is placed under $DKD_OUT_ROOT when that is set.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg,
                                      const std::optional<std::string>& out_flag);

struct ExperimentContext {
  SpeakerUniverse universe;
  SpeakerDataset eval_set;
  TrialList trials;
};

ExperimentContext make_context(const ExperimentConfig& cfg);

// Per-run training set: first K speakers of the seed-shuffled train pool.
SpeakerDataset make_train_set(const ExperimentConfig& cfg,
                              const SpeakerUniverse& universe,
                              std::uint64_t run_seed, std::size_t num_speakers,
                              std::size_t utterances_per_speaker);

TrainConfig teacher_train_config(const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::size_t dataset_size);
TrainConfig student_train_config(const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::size_t dataset_size, KdMode mode,
                                 double gamma);

std::filesystem::path teacher_checkpoint_path(const std::filesystem::path& out,
                                              std::uint64_t seed);
// Arm names used in files and CSVs: none, cos, kld, dkd_g<gamma>.
std::string arm_name(KdMode mode, double gamma);

// Commands. Each returns the path(s) of what it wrote.
std::vector<std::filesystem::path> run_gen_data(const ExperimentConfig& cfg,
                                                const std::filesystem::path& out);
std::vector<std::filesystem::path> run_train_teacher(const ExperimentConfig& cfg,
                                                     const std::filesystem::path& out);
std::vector<std::filesystem::path> run_distill(const ExperimentConfig& cfg,
                                               const std::filesystem::path& out,
                                               KdMode mode, double gamma);
EvalReport run_eval(const ExperimentConfig& cfg,
                    const std::filesystem::path& checkpoint,
                    const std::filesystem::path& out,
                    const std::optional<std::filesystem::path>& scores_out);
std::filesystem::path run_sweep_speakers(const ExperimentConfig& cfg,
                                         const std::filesystem::path& out);
std::filesystem::path run_ablate_gamma(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out);
std::vector<std::filesystem::path> run_report(
    const std::vector<std::filesystem::path>& csv_paths,
    const std::filesystem::path& out);

// FNV-1a 64 over the file bytes, as recorded in the gen-data manifest.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

}  // namespace dkd

#endif
