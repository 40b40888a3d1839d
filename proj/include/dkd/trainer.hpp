#ifndef DKD_TRAINER_HPP
#define DKD_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dkd/data.hpp"
#include "dkd/losses.hpp"
#include "dkd/model.hpp"

// Mini-batch training: teacher with AAM + cross-entropy, student with
// L = L_cls + kd_weight * L_KD for the configured KD mode. SGD with
// momentum and decoupled weight decay; class-weight rows renormalized
// after every step. Batches are averaged, so kd_weight means the same
// thing at any batch size. Runs abort on a non-finite loss instead of
// clipping.

namespace dkd {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // Learning rate multiplied by lr_decay_factor when the step counter
  // passes each fraction of the total step count.
  std::vector<double> lr_decay_at = {0.6, 0.9};
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;
  AamConfig aam;
  DkdConfig kd;
};

struct StepLog {
  std::size_t step = 0;
  double total = 0.0;
  double cls = 0.0;
  double kd = 0.0;
  double margin = 0.0;
};

struct RunRecord {
  std::vector<StepLog> steps;
  double final_train_accuracy = 0.0;
  bool failed = false;
  std::string fail_reason;
  std::string checkpoint;    // filename of the saved final params, if any
  double wall_seconds = 0.0;  // not serialized; files stay byte-reproducible
};

// Sub-stream labels off TrainConfig::seed. Fixed so tests can reproduce the
// exact draws a run makes.
inline constexpr std::uint64_t kParamInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;

// Teachers must clear this on the default synthetic config or the run is
// flagged failed (not silently accepted).
inline constexpr double kMinTeacherAccuracy = 0.95;

// Classification-only training (AAM + cross-entropy), the loop every other
// entry point shares.
std::pair<MlpParams, RunRecord> train_classifier(
    const SpeakerDataset& dataset, const std::vector<std::size_t>& layer_dims,
    const TrainConfig& cfg);

// train_classifier plus the teacher quality gate.
std::pair<MlpParams, RunRecord> train_teacher(
    const SpeakerDataset& dataset, const std::vector<std::size_t>& layer_dims,
    const TrainConfig& cfg);

// Teacher is frozen: used only through forward passes, never updated.
// cfg.kd.mode selects the KD variant; mode none (or kd_weight 0) follows
// the exact same code path as train_teacher on the student dims.
std::pair<MlpParams, RunRecord> distill(const MlpParams& teacher,
                                        const std::vector<std::size_t>& student_dims,
                                        const SpeakerDataset& dataset,
                                        const TrainConfig& cfg);

struct SgdState {
  MlpGradients velocity;
};

// v <- momentum*v + g;  p <- p - lr*v - lr*weight_decay*p
// followed by class-weight row renormalization.
void sgd_step(MlpParams& params, const MlpGradients& grads, SgdState& state,
              double lr, double momentum, double weight_decay);

// Fraction of utterances whose margin-free cosine argmax equals the label.
double train_accuracy(const MlpParams& params, const SpeakerDataset& dataset);

// One JSON object per step line; summary line last.
void save_run_record(const RunRecord& record, const std::filesystem::path& path);

}  // namespace dkd

#endif
