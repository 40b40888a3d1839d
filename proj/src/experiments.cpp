#include "dkd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dkd/errors.hpp"

namespace dkd {

namespace {

using nlohmann::json;

// Sub-stream labels. Eval-side streams hang off universe.seed, run-side
// streams off the run seed.
constexpr std::uint64_t kEvalSampleStream = 101;
constexpr std::uint64_t kTrialStream = 102;
constexpr std::uint64_t kSpeakerSelectStream = 103;
constexpr std::uint64_t kTrainSampleStream = 104;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: '" + ctx + "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
    }
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + std::string(key) +
                      "': " + e.what());
  }
}

void parse_phase(const json& j, const std::string& ctx, PhaseSettings& p) {
  check_keys(j, ctx,
             {"dims", "epochs", "batch_size", "learning_rate", "momentum",
              "weight_decay", "aam_scale", "aam_margin", "margin_warmup_frac"});
  read_field(j, "dims", p.dims);
  read_field(j, "epochs", p.epochs);
  read_field(j, "batch_size", p.batch_size);
  read_field(j, "learning_rate", p.learning_rate);
  read_field(j, "momentum", p.momentum);
  read_field(j, "weight_decay", p.weight_decay);
  read_field(j, "aam_scale", p.aam_scale);
  read_field(j, "aam_margin", p.aam_margin);
  read_field(j, "margin_warmup_frac", p.margin_warmup_frac);
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.teacher.dims = {256, 128, 64};
  cfg.teacher.epochs = 30;
  cfg.student.dims = {32, 16};
  cfg.student.epochs = 40;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  json j;
  try {
    j = json::parse(is,
                    /*cb=*/nullptr, /*allow_exceptions=*/true,
                    /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  check_keys(j, "top level",
             {"universe", "data", "teacher", "student", "kd", "sweep", "seeds",
              "out_dir"});
  ExperimentConfig cfg = default_config();
  if (j.contains("universe")) {
    const json& u = j["universe"];
    check_keys(u, "universe",
               {"speakers", "eval_speakers", "latent_dim", "feature_dim",
                "intra_std", "seed"});
    read_field(u, "speakers", cfg.universe.speakers);
    read_field(u, "eval_speakers", cfg.universe.eval_speakers);
    read_field(u, "latent_dim", cfg.universe.latent_dim);
    read_field(u, "feature_dim", cfg.universe.feature_dim);
    read_field(u, "intra_std", cfg.universe.intra_std);
    read_field(u, "seed", cfg.universe.seed);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data",
               {"train_speakers", "utterances_per_speaker",
                "eval_utterances_per_speaker", "target_trials",
                "nontarget_trials"});
    read_field(d, "train_speakers", cfg.data.train_speakers);
    read_field(d, "utterances_per_speaker", cfg.data.utterances_per_speaker);
    read_field(d, "eval_utterances_per_speaker",
               cfg.data.eval_utterances_per_speaker);
    read_field(d, "target_trials", cfg.data.target_trials);
    read_field(d, "nontarget_trials", cfg.data.nontarget_trials);
  }
  if (j.contains("teacher")) parse_phase(j["teacher"], "teacher", cfg.teacher);
  if (j.contains("student")) parse_phase(j["student"], "student", cfg.student);
  if (j.contains("kd")) {
    const json& k = j["kd"];
    check_keys(k, "kd", {"mode", "gamma", "kd_weight", "temperature", "gamma_grid"});
    if (k.contains("mode")) {
      std::string mode;
      read_field(k, "mode", mode);
      try {
        cfg.kd.mode = kd_mode_from_string(mode);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    read_field(k, "gamma", cfg.kd.gamma);
    read_field(k, "kd_weight", cfg.kd.kd_weight);
    read_field(k, "temperature", cfg.kd.temperature);
    read_field(k, "gamma_grid", cfg.kd.gamma_grid);
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, "sweep", {"budget", "speaker_grid"});
    read_field(s, "budget", cfg.sweep.budget);
    read_field(s, "speaker_grid", cfg.sweep.speaker_grid);
  }
  read_field(j, "seeds", cfg.seeds);
  read_field(j, "out_dir", cfg.out_dir);
  validate_config(cfg);
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  const UniverseSettings& u = cfg.universe;
  if (u.speakers == 0 || u.latent_dim == 0 || u.feature_dim == 0) {
    throw ConfigError("config: universe dims must be positive");
  }
  if (!(u.intra_std > 0.0)) {
    throw ConfigError("config: universe.intra_std must be > 0");
  }
  if (u.eval_speakers < 2 || u.eval_speakers >= u.speakers) {
    throw ConfigError("config: eval_speakers must be in [2, speakers)");
  }
  std::size_t pool = u.speakers - u.eval_speakers;
  if (cfg.data.train_speakers < 2 || cfg.data.train_speakers > pool) {
    throw ConfigError("config: data.train_speakers must be in [2, train pool " +
                      std::to_string(pool) + "]");
  }
  if (cfg.data.utterances_per_speaker == 0) {
    throw ConfigError("config: data.utterances_per_speaker must be positive");
  }
  if (cfg.data.target_trials > 0 && cfg.data.eval_utterances_per_speaker < 2) {
    throw ConfigError(
        "config: target trials need eval_utterances_per_speaker >= 2");
  }
  for (const PhaseSettings* p : {&cfg.teacher, &cfg.student}) {
    if (p->dims.empty()) {
      throw ConfigError("config: model dims must be non-empty");
    }
    for (std::size_t d : p->dims) {
      if (d == 0) throw ConfigError("config: model dims must be positive");
    }
    if (p->batch_size == 0) {
      throw ConfigError("config: batch_size must be >= 1");
    }
    if (!(p->learning_rate > 0.0)) {
      throw ConfigError("config: learning_rate must be > 0");
    }
    if (!(p->momentum >= 0.0) || p->momentum >= 1.0) {
      throw ConfigError("config: momentum must be in [0, 1)");
    }
    if (!(p->weight_decay >= 0.0)) {
      throw ConfigError("config: weight_decay must be >= 0");
    }
    if (!(p->aam_scale > 0.0)) {
      throw ConfigError("config: aam_scale must be > 0");
    }
    if (!(p->aam_margin >= 0.0) || p->aam_margin >= 1.5707963267948966) {
      throw ConfigError("config: aam_margin must be in [0, pi/2)");
    }
    if (!(p->margin_warmup_frac >= 0.0) || p->margin_warmup_frac > 1.0) {
      throw ConfigError("config: margin_warmup_frac must be in [0, 1]");
    }
  }
  if (!(cfg.kd.gamma >= 0.0) || !std::isfinite(cfg.kd.gamma)) {
    throw ConfigError("config: kd.gamma must be finite and >= 0");
  }
  if (!(cfg.kd.kd_weight >= 0.0)) {
    throw ConfigError("config: kd.kd_weight must be >= 0");
  }
  if (!(cfg.kd.temperature > 0.0)) {
    throw ConfigError("config: kd.temperature must be > 0");
  }
  for (double g : cfg.kd.gamma_grid) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw ConfigError("config: kd.gamma_grid entries must be finite and >= 0");
    }
  }
  if (cfg.sweep.budget == 0 || cfg.sweep.speaker_grid.empty()) {
    throw ConfigError("config: sweep needs a budget and a speaker grid");
  }
  for (std::size_t k : cfg.sweep.speaker_grid) {
    if (k < 2 || k > pool) {
      throw ConfigError("config: sweep grid entry " + std::to_string(k) +
                        " outside [2, train pool " + std::to_string(pool) + "]");
    }
    if (cfg.sweep.budget % k != 0) {
      throw ConfigError("config: sweep grid entry " + std::to_string(k) +
                        " does not divide budget " +
                        std::to_string(cfg.sweep.budget));
    }
  }
  if (cfg.seeds.empty()) {
    throw ConfigError("config: seeds must be non-empty");
  }
  std::set<std::uint64_t> uniq(cfg.seeds.begin(), cfg.seeds.end());
  if (uniq.size() != cfg.seeds.size()) {
    throw ConfigError("config: duplicate seeds");
  }
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg,
                                      const std::optional<std::string>& out_flag) {
  std::filesystem::path out = out_flag ? *out_flag : cfg.out_dir;
  if (out.is_relative()) {
    if (const char* root = std::getenv("DKD_OUT_ROOT")) {
      out = std::filesystem::path(root) / out;
    }
  }
  return out;
}

ExperimentContext make_context(const ExperimentConfig& cfg) {
  ExperimentContext ctx;
  ctx.universe =
      build_universe(cfg.universe.speakers, cfg.universe.latent_dim,
                     cfg.universe.feature_dim, cfg.universe.intra_std,
                     cfg.universe.seed);
  std::size_t pool = cfg.universe.speakers - cfg.universe.eval_speakers;
  std::vector<std::size_t> eval_ids(cfg.universe.eval_speakers);
  std::iota(eval_ids.begin(), eval_ids.end(), pool);
  RngStream root(cfg.universe.seed);
  ctx.eval_set =
      sample_dataset(ctx.universe, eval_ids, cfg.data.eval_utterances_per_speaker,
                     root.split(kEvalSampleStream).seed());
  ctx.trials = make_trials(ctx.eval_set, cfg.data.target_trials,
                           cfg.data.nontarget_trials,
                           root.split(kTrialStream).seed());
  return ctx;
}

SpeakerDataset make_train_set(const ExperimentConfig& cfg,
                              const SpeakerUniverse& universe,
                              std::uint64_t run_seed, std::size_t num_speakers,
                              std::size_t utterances_per_speaker) {
  std::size_t pool = cfg.universe.speakers - cfg.universe.eval_speakers;
  if (num_speakers > pool) {
    throw ConfigError("train set requests more speakers than the train pool");
  }
  std::vector<std::size_t> ids(pool);
  std::iota(ids.begin(), ids.end(), 0);
  RngStream root(run_seed);
  RngStream select = root.split(kSpeakerSelectStream);
  select.shuffle(ids);
  ids.resize(num_speakers);
  return sample_dataset(universe, ids, utterances_per_speaker,
                        root.split(kTrainSampleStream).seed());
}

namespace {

std::size_t warmup_steps(const PhaseSettings& p, std::size_t dataset_size) {
  std::size_t num_batches = (dataset_size + p.batch_size - 1) / p.batch_size;
  std::size_t total = p.epochs * num_batches;
  return static_cast<std::size_t>(p.margin_warmup_frac *
                                  static_cast<double>(total));
}

TrainConfig phase_train_config(const PhaseSettings& p, std::uint64_t seed,
                               std::size_t dataset_size) {
  TrainConfig t;
  t.epochs = p.epochs;
  t.batch_size = p.batch_size;
  t.learning_rate = p.learning_rate;
  t.momentum = p.momentum;
  t.weight_decay = p.weight_decay;
  t.seed = seed;
  t.aam.scale = p.aam_scale;
  t.aam.margin_max = p.aam_margin;
  t.aam.margin_warmup_steps = warmup_steps(p, dataset_size);
  t.kd.mode = KdMode::none;
  return t;
}

std::vector<std::size_t> full_dims(const ExperimentConfig& cfg,
                                   const PhaseSettings& p) {
  std::vector<std::size_t> dims;
  dims.push_back(cfg.universe.feature_dim);
  dims.insert(dims.end(), p.dims.begin(), p.dims.end());
  return dims;
}

void ensure_dir(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) {
    throw IoError("cannot create output directory " + out.string() + ": " +
                  ec.message());
  }
}

}  // namespace

TrainConfig teacher_train_config(const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::size_t dataset_size) {
  return phase_train_config(cfg.teacher, seed, dataset_size);
}

TrainConfig student_train_config(const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::size_t dataset_size, KdMode mode,
                                 double gamma) {
  TrainConfig t = phase_train_config(cfg.student, seed, dataset_size);
  t.kd.mode = mode;
  t.kd.gamma = gamma;
  t.kd.kd_weight = cfg.kd.kd_weight;
  t.kd.temperature = cfg.kd.temperature;
  return t;
}

std::filesystem::path teacher_checkpoint_path(const std::filesystem::path& out,
                                              std::uint64_t seed) {
  return out / ("teacher_seed" + std::to_string(seed) + ".ckpt");
}

std::string arm_name(KdMode mode, double gamma) {
  switch (mode) {
    case KdMode::none: return "none";
    case KdMode::cosine_embedding: return "cos";
    case KdMode::conventional_kld: return "kld";
    case KdMode::dkd: return "dkd_g" + fmt_g(gamma);
  }
  return "?";
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("cannot open for checksum: " + path.string());
  }
  std::uint64_t h = 14695981039346656037ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!is) break;
  }
  return h;
}

namespace {

std::string checksum_string(const std::filesystem::path& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  return std::string("fnv1a64:") + buf;
}

}  // namespace

std::vector<std::filesystem::path> run_gen_data(const ExperimentConfig& cfg,
                                                const std::filesystem::path& out) {
  ensure_dir(out);
  ExperimentContext ctx = make_context(cfg);
  std::vector<std::filesystem::path> written;

  std::set<std::size_t> eval_ids(ctx.eval_set.source_speaker_ids.begin(),
                                 ctx.eval_set.source_speaker_ids.end());
  json files = json::object();
  for (std::uint64_t seed : cfg.seeds) {
    SpeakerDataset train =
        make_train_set(cfg, ctx.universe, seed, cfg.data.train_speakers,
                       cfg.data.utterances_per_speaker);
    for (std::size_t id : train.source_speaker_ids) {
      if (eval_ids.count(id)) {
        throw DataError("train/eval speaker sets overlap at id " +
                        std::to_string(id));
      }
    }
    std::filesystem::path p = out / ("train_seed" + std::to_string(seed) + ".tsv");
    save_dataset(train, p);
    files[p.filename().string()] = checksum_string(p);
    written.push_back(p);
  }
  std::filesystem::path eval_path = out / "eval.tsv";
  save_dataset(ctx.eval_set, eval_path);
  written.push_back(eval_path);
  std::filesystem::path trials_path = out / "trials.tsv";
  save_trials(ctx.trials, trials_path);
  written.push_back(trials_path);
  for (const auto& p : {eval_path, trials_path}) {
    files[p.filename().string()] = checksum_string(p);
  }

  std::size_t pool = cfg.universe.speakers - cfg.universe.eval_speakers;
  json manifest = {
      {"schema", "dkd-manifest-v1"},
      {"universe_seed", cfg.universe.seed},
      {"seeds", cfg.seeds},
      {"train_pool", {0, pool}},
      {"eval_pool", {pool, cfg.universe.speakers}},
      {"train_eval_disjoint", true},
      {"files", files},
  };
  std::filesystem::path manifest_path = out / "manifest.json";
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot write manifest: " + manifest_path.string());
  }
  os << manifest.dump(2) << '\n';
  written.push_back(manifest_path);
  return written;
}

std::vector<std::filesystem::path> run_train_teacher(
    const ExperimentConfig& cfg, const std::filesystem::path& out) {
  ensure_dir(out);
  SpeakerUniverse universe =
      build_universe(cfg.universe.speakers, cfg.universe.latent_dim,
                     cfg.universe.feature_dim, cfg.universe.intra_std,
                     cfg.universe.seed);
  std::vector<std::filesystem::path> written;
  for (std::uint64_t seed : cfg.seeds) {
    SpeakerDataset train =
        make_train_set(cfg, universe, seed, cfg.data.train_speakers,
                       cfg.data.utterances_per_speaker);
    TrainConfig tc = teacher_train_config(cfg, seed, train.size());
    auto [params, record] = train_teacher(train, full_dims(cfg, cfg.teacher), tc);
    if (record.failed) {
      std::cerr << "warning: seed " << seed << ": " << record.fail_reason << "\n";
    }
    std::filesystem::path ckpt = teacher_checkpoint_path(out, seed);
    save_checkpoint(params, ckpt);
    record.checkpoint = ckpt.filename().string();
    std::filesystem::path log =
        out / ("teacher_seed" + std::to_string(seed) + "_run.jsonl");
    save_run_record(record, log);
    std::cout << "teacher seed " << seed << ": train accuracy "
              << record.final_train_accuracy << " (" << record.wall_seconds
              << " s)\n";
    written.push_back(ckpt);
    written.push_back(log);
  }
  return written;
}

namespace {

// The COS baseline needs matching embedding spaces; the student's final dim
// follows the teacher's in that mode.
std::vector<std::size_t> student_dims_for_mode(const ExperimentConfig& cfg,
                                               const MlpParams& teacher,
                                               KdMode mode) {
  std::vector<std::size_t> dims = full_dims(cfg, cfg.student);
  if (mode == KdMode::cosine_embedding) {
    dims.back() = teacher.embedding_dim();
  }
  return dims;
}

MlpParams load_teacher_or_fail(const std::filesystem::path& out,
                               std::uint64_t seed) {
  std::filesystem::path ckpt = teacher_checkpoint_path(out, seed);
  if (!std::filesystem::exists(ckpt)) {
    throw IoError("teacher checkpoint missing: " + ckpt.string() +
                  " (run train-teacher first)");
  }
  return load_checkpoint(ckpt);
}

}  // namespace

std::vector<std::filesystem::path> run_distill(const ExperimentConfig& cfg,
                                               const std::filesystem::path& out,
                                               KdMode mode, double gamma) {
  ensure_dir(out);
  SpeakerUniverse universe =
      build_universe(cfg.universe.speakers, cfg.universe.latent_dim,
                     cfg.universe.feature_dim, cfg.universe.intra_std,
                     cfg.universe.seed);
  std::vector<std::filesystem::path> written;
  std::string arm = arm_name(mode, gamma);
  for (std::uint64_t seed : cfg.seeds) {
    MlpParams teacher = load_teacher_or_fail(out, seed);
    SpeakerDataset train =
        make_train_set(cfg, universe, seed, cfg.data.train_speakers,
                       cfg.data.utterances_per_speaker);
    TrainConfig tc = student_train_config(cfg, seed, train.size(), mode, gamma);
    auto [params, record] =
        distill(teacher, student_dims_for_mode(cfg, teacher, mode), train, tc);
    std::filesystem::path ckpt =
        out / ("distill_" + arm + "_seed" + std::to_string(seed) + ".ckpt");
    save_checkpoint(params, ckpt);
    record.checkpoint = ckpt.filename().string();
    std::filesystem::path log =
        out / ("distill_" + arm + "_seed" + std::to_string(seed) + "_run.jsonl");
    save_run_record(record, log);
    std::cout << "distill " << arm << " seed " << seed << ": final loss "
              << (record.steps.empty() ? 0.0 : record.steps.back().total)
              << " (" << record.wall_seconds << " s)\n";
    written.push_back(ckpt);
    written.push_back(log);
  }
  return written;
}

EvalReport run_eval(const ExperimentConfig& cfg,
                    const std::filesystem::path& checkpoint,
                    const std::filesystem::path& out,
                    const std::optional<std::filesystem::path>& scores_out) {
  ensure_dir(out);
  if (!std::filesystem::exists(checkpoint)) {
    throw IoError("checkpoint missing: " + checkpoint.string());
  }
  MlpParams params = load_checkpoint(checkpoint);
  ExperimentContext ctx = make_context(cfg);
  ScoredTrials st = score_trials(params, ctx.eval_set, ctx.trials);
  EvalReport report = evaluate(st);
  std::filesystem::path report_path =
      out / (checkpoint.stem().string() + "_eval.tsv");
  save_report(report, report_path);
  if (scores_out) {
    save_scores(ctx.trials, st, *scores_out);
  }
  return report;
}

namespace {

void write_csv(const std::filesystem::path& path, const std::string& schema,
               const std::string& header,
               const std::vector<std::string>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot write csv: " + path.string());
  }
  os << "# schema: " << schema << "\n" << header << "\n";
  for (const std::string& r : rows) {
    os << r << "\n";
  }
  if (!os) {
    throw IoError("failed writing csv: " + path.string());
  }
}

}  // namespace

std::filesystem::path run_sweep_speakers(const ExperimentConfig& cfg,
                                         const std::filesystem::path& out) {
  ensure_dir(out);
  ExperimentContext ctx = make_context(cfg);
  std::vector<std::string> rows;
  for (std::size_t k : cfg.sweep.speaker_grid) {
    std::size_t upp = cfg.sweep.budget / k;
    for (std::uint64_t seed : cfg.seeds) {
      SpeakerDataset train = make_train_set(cfg, ctx.universe, seed, k, upp);
      TrainConfig tc =
          student_train_config(cfg, seed, train.size(), KdMode::none, 0.0);
      auto [params, record] =
          train_classifier(train, full_dims(cfg, cfg.student), tc);
      ScoredTrials st = score_trials(params, ctx.eval_set, ctx.trials);
      EvalReport report = evaluate(st);
      rows.push_back(std::to_string(k) + "," + std::to_string(seed) + "," +
                     fmt17(report.eer) + "," + fmt17(report.min_dcf));
      std::cout << "sweep K=" << k << " seed " << seed << ": eer " << report.eer
                << " min_dcf " << report.min_dcf << "\n";
    }
  }
  std::filesystem::path csv = out / "sweep.csv";
  write_csv(csv, "dkd-sweep-v1", "num_speakers,seed,eer,min_dcf", rows);
  return csv;
}

std::filesystem::path run_ablate_gamma(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out) {
  ensure_dir(out);
  ExperimentContext ctx = make_context(cfg);

  struct Arm {
    KdMode mode;
    double gamma;
  };
  std::vector<Arm> arms = {{KdMode::none, 0.0},
                           {KdMode::cosine_embedding, 0.0},
                           {KdMode::conventional_kld, 0.0}};
  for (double g : cfg.kd.gamma_grid) {
    arms.push_back({KdMode::dkd, g});
  }

  // rows keyed (arm index, seed index) so the CSV is arm-major regardless
  // of execution order
  std::map<std::pair<std::size_t, std::size_t>, std::string> csv_rows;
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    std::uint64_t seed = cfg.seeds[si];
    MlpParams teacher = load_teacher_or_fail(out, seed);
    SpeakerDataset train =
        make_train_set(cfg, ctx.universe, seed, cfg.data.train_speakers,
                       cfg.data.utterances_per_speaker);
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
      const Arm& arm = arms[ai];
      TrainConfig tc =
          student_train_config(cfg, seed, train.size(), arm.mode, arm.gamma);
      auto [params, record] = distill(
          teacher, student_dims_for_mode(cfg, teacher, arm.mode), train, tc);
      ScoredTrials st = score_trials(params, ctx.eval_set, ctx.trials);
      EvalReport report = evaluate(st);
      std::string name = arm_name(arm.mode, arm.gamma);
      csv_rows[{ai, si}] = name + "," + std::to_string(seed) + "," +
                           fmt17(report.eer) + "," + fmt17(report.min_dcf);
      std::cout << "ablate " << name << " seed " << seed << ": eer "
                << report.eer << " min_dcf " << report.min_dcf << "\n";
    }
  }
  std::vector<std::string> rows;
  rows.reserve(csv_rows.size());
  for (const auto& [key, row] : csv_rows) {
    rows.push_back(row);
  }
  std::filesystem::path csv = out / "ablate.csv";
  write_csv(csv, "dkd-ablate-v1", "arm,seed,eer,min_dcf", rows);
  return csv;
}

// ---------------------------------------------------------------------------
// report: per-group mean/std over CSV rows

namespace {

struct CsvTable {
  std::string group_column;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open csv: " + path.string());
  }
  CsvTable t;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cells.push_back(cell);
    }
    if (!header_seen) {
      t.columns = cells;
      if (t.columns.empty()) {
        throw DataError("csv has an empty header: " + path.string());
      }
      t.group_column = t.columns.front();
      header_seen = true;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw DataError("csv row width mismatch in " + path.string());
    }
    t.rows.push_back(std::move(cells));
  }
  if (!header_seen || t.rows.empty()) {
    throw DataError("csv has no data rows: " + path.string());
  }
  return t;
}

std::size_t require_column(const CsvTable& t, const std::string& name,
                           const std::filesystem::path& path) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (t.columns[i] == name) return i;
  }
  throw DataError("csv " + path.string() + " is missing column '" + name + "'");
}

struct GroupStats {
  std::string key;
  std::size_t n = 0;
  double eer_mean = 0, eer_std = 0, dcf_mean = 0, dcf_std = 0;
};

std::vector<GroupStats> summarize(const CsvTable& t,
                                  const std::filesystem::path& path) {
  std::size_t eer_col = require_column(t, "eer", path);
  std::size_t dcf_col = require_column(t, "min_dcf", path);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> groups;
  for (const auto& row : t.rows) {
    const std::string& key = row[0];
    if (!groups.count(key)) order.push_back(key);
    double eer, dcf;
    try {
      eer = std::stod(row[eer_col]);
      dcf = std::stod(row[dcf_col]);
    } catch (const std::exception&) {
      throw DataError("csv " + path.string() + ": non-numeric metric value");
    }
    groups[key].emplace_back(eer, dcf);
  }
  std::vector<GroupStats> out;
  for (const std::string& key : order) {
    const auto& vals = groups[key];
    GroupStats g;
    g.key = key;
    g.n = vals.size();
    for (auto [e, d] : vals) {
      g.eer_mean += e;
      g.dcf_mean += d;
    }
    g.eer_mean /= static_cast<double>(g.n);
    g.dcf_mean /= static_cast<double>(g.n);
    if (g.n > 1) {
      double se = 0, sd = 0;
      for (auto [e, d] : vals) {
        se += (e - g.eer_mean) * (e - g.eer_mean);
        sd += (d - g.dcf_mean) * (d - g.dcf_mean);
      }
      g.eer_std = std::sqrt(se / static_cast<double>(g.n - 1));
      g.dcf_std = std::sqrt(sd / static_cast<double>(g.n - 1));
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace

std::vector<std::filesystem::path> run_report(
    const std::vector<std::filesystem::path>& csv_paths,
    const std::filesystem::path& out) {
  if (csv_paths.empty()) {
    throw ConfigError("report: no csv paths given");
  }
  ensure_dir(out);
  std::vector<std::filesystem::path> written;
  std::filesystem::path md_path = out / "report.md";
  std::ofstream md(md_path, std::ios::trunc);
  if (!md) {
    throw IoError("cannot write report: " + md_path.string());
  }
  char buf[256];
  for (const auto& csv : csv_paths) {
    CsvTable t = parse_csv(csv);
    std::vector<GroupStats> stats = summarize(t, csv);
    md << "## " << csv.filename().string() << "\n\n";
    md << "| " << t.group_column
       << " | runs | EER mean | EER std | minDCF mean | minDCF std |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const GroupStats& g : stats) {
      std::snprintf(buf, sizeof(buf), "| %s | %zu | %.4f | %.4f | %.4f | %.4f |\n",
                    g.key.c_str(), g.n, g.eer_mean, g.eer_std, g.dcf_mean,
                    g.dcf_std);
      md << buf;
    }
    md << "\n";
    for (const char* metric : {"eer", "min_dcf"}) {
      std::filesystem::path series =
          out / (csv.stem().string() + "_" + metric + ".series");
      std::ofstream ss(series, std::ios::trunc);
      if (!ss) {
        throw IoError("cannot write series: " + series.string());
      }
      for (const GroupStats& g : stats) {
        bool is_eer = std::string(metric) == "eer";
        ss << g.key << '\t' << fmt17(is_eer ? g.eer_mean : g.dcf_mean) << '\t'
           << fmt17(is_eer ? g.eer_std : g.dcf_std) << '\n';
      }
      written.push_back(series);
    }
  }
  written.insert(written.begin(), md_path);
  return written;
}

}  // namespace dkd
