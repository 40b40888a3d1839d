#include "dkd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

#include "dkd/errors.hpp"

namespace dkd {

namespace {

// Frozen-teacher quantities reused across epochs: per-utterance embedding
// and margin-free scaled-cosine logits (the teacher's belief, no margin
// penalty applied at distillation time).
struct TeacherCache {
  std::vector<Vec> embeddings;
  std::vector<Logits> logits;
};

TeacherCache build_teacher_cache(const MlpParams& teacher,
                                 const SpeakerDataset& ds, double scale) {
  TeacherCache cache;
  cache.embeddings.reserve(ds.size());
  cache.logits.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ForwardTrace t = forward(
        teacher, std::span<const double>(ds.features.row(i), ds.features.cols));
    Logits z(t.cosines.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      z[k] = scale * t.cosines[k];
    }
    cache.embeddings.push_back(std::move(t.embedding));
    cache.logits.push_back(std::move(z));
  }
  return cache;
}

double lr_at_step(const TrainConfig& cfg, std::size_t step,
                  std::size_t total_steps) {
  double lr = cfg.learning_rate;
  for (double frac : cfg.lr_decay_at) {
    auto milestone = static_cast<std::size_t>(frac * static_cast<double>(total_steps));
    if (step >= milestone) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("train: learning_rate must be > 0");
  }
  if (cfg.batch_size < 1) {
    throw ConfigError("train: batch_size must be >= 1");
  }
  if (!(cfg.momentum >= 0.0) || cfg.momentum >= 1.0) {
    throw ConfigError("train: momentum must be in [0, 1)");
  }
  if (!(cfg.weight_decay >= 0.0)) {
    throw ConfigError("train: weight_decay must be >= 0");
  }
  if (!(cfg.kd.kd_weight >= 0.0)) {
    throw ConfigError("train: kd_weight must be >= 0");
  }
  if (!(cfg.kd.temperature > 0.0)) {
    throw ConfigError("train: temperature must be > 0");
  }
}

// Shared loop for teacher training (teacher == nullptr) and distillation.
std::pair<MlpParams, RunRecord> run_training(const SpeakerDataset& dataset,
                                             const std::vector<std::size_t>& layer_dims,
                                             const TrainConfig& cfg,
                                             const MlpParams* teacher) {
  validate_config(cfg);
  if (dataset.size() == 0) {
    throw DataError("train: empty dataset");
  }
  auto t_start = std::chrono::steady_clock::now();

  const bool kd_active =
      teacher != nullptr && cfg.kd.mode != KdMode::none && cfg.kd.kd_weight > 0.0;
  std::optional<TeacherCache> cache;
  if (kd_active) {
    if (cfg.kd.mode == KdMode::cosine_embedding &&
        teacher->embedding_dim() != layer_dims.back()) {
      throw ConfigError(
          "distill: cosine_embedding mode needs matching teacher/student "
          "embedding dims (teacher " +
          std::to_string(teacher->embedding_dim()) + ", student " +
          std::to_string(layer_dims.back()) + ")");
    }
    cache = build_teacher_cache(*teacher, dataset, cfg.aam.scale);
  }

  RngStream root(cfg.seed);
  RngStream init_rng = root.split(kParamInitStream);
  RngStream shuffle_rng = root.split(kShuffleStream);
  MlpParams params = init_params(layer_dims, dataset.num_speakers, init_rng);

  RunRecord record;
  if (cfg.epochs == 0) {
    record.final_train_accuracy = train_accuracy(params, dataset);
    return {std::move(params), std::move(record)};
  }

  std::size_t num_batches = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total_steps = cfg.epochs * num_batches;
  record.steps.reserve(total_steps);

  SgdState state{zero_gradients_like(params)};
  MlpGradients grads = zero_gradients_like(params);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < num_batches; ++b, ++step) {
      std::size_t begin = b * cfg.batch_size;
      std::size_t end = std::min(begin + cfg.batch_size, dataset.size());
      double margin = margin_at_step(step, cfg.aam);

      // zero the accumulators
      for (auto& layer : grads.layers) {
        std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      }
      std::fill(grads.class_weights.data.begin(), grads.class_weights.data.end(), 0.0);

      double cls_sum = 0.0;
      double kd_sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        std::size_t idx = order[i];
        std::size_t label = dataset.labels[idx];
        ForwardTrace trace;
        LossGrad cls;
        try {
          trace = forward(params, std::span<const double>(
                                      dataset.features.row(idx),
                                      dataset.features.cols));
          cls = aam_cross_entropy(trace.cosines, label, cfg.aam.scale, margin);
        } catch (const std::domain_error& e) {
          // degenerate model state mid-run (non-finite or zero embedding)
          throw DivergenceError("training diverged at step " +
                                std::to_string(step) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
          throw DivergenceError("training diverged at step " +
                                std::to_string(step) + ": " + e.what());
        }
        cls_sum += cls.loss;

        Vec grad_cosines = std::move(cls.grad);
        Vec grad_embedding;
        if (kd_active) {
          double kd_loss_value = 0.0;
          switch (cfg.kd.mode) {
            case KdMode::cosine_embedding: {
              LossGrad kd = cosine_embedding_kd(cache->embeddings[idx], trace.embedding);
              kd_loss_value = kd.loss;
              grad_embedding.assign(kd.grad.size(), 0.0);
              for (std::size_t d = 0; d < kd.grad.size(); ++d) {
                grad_embedding[d] = cfg.kd.kd_weight * kd.grad[d];
              }
              break;
            }
            case KdMode::conventional_kld:
            case KdMode::dkd: {
              // Student KD logits: margin-free scaled cosines by default;
              // optionally through the scheduled margin.
              double kd_margin = cfg.kd.margin_in_kd ? margin : 0.0;
              Logits z_student =
                  aam_logits(trace.cosines, label, cfg.aam.scale, kd_margin);
              LossGrad kd;
              if (cfg.kd.mode == KdMode::conventional_kld) {
                kd = kld_loss_logits(cache->logits[idx], z_student,
                                     cfg.kd.temperature);
              } else {
                kd = dkd_loss(cache->logits[idx], z_student, label, cfg.kd);
              }
              kd_loss_value = kd.loss;
              // chain z = scale*cos (diagonal); margin path reuses the AAM slope
              for (std::size_t k = 0; k < kd.grad.size(); ++k) {
                double dz_dc = aam_target_slope(trace.cosines[k], cfg.aam.scale,
                                                kd_margin, k == label);
                grad_cosines[k] += cfg.kd.kd_weight * kd.grad[k] * dz_dc;
              }
              break;
            }
            case KdMode::none:
              break;
          }
          kd_sum += kd_loss_value;
        }
        backward(params, trace, grad_cosines, grad_embedding, grads);
      }

      double inv_n = 1.0 / static_cast<double>(end - begin);
      for (auto& layer : grads.layers) {
        for (double& g : layer.weight.data) g *= inv_n;
        for (double& g : layer.bias) g *= inv_n;
      }
      for (double& g : grads.class_weights.data) g *= inv_n;

      double cls_mean = cls_sum * inv_n;
      double kd_mean = kd_sum * inv_n;
      double total = cls_mean + cfg.kd.kd_weight * kd_mean;
      if (!std::isfinite(total)) {
        throw DivergenceError("training diverged at step " + std::to_string(step) +
                              " (non-finite loss)");
      }
      record.steps.push_back({step, total, cls_mean, kd_mean, margin});

      sgd_step(params, grads, state, lr_at_step(cfg, step, total_steps),
               cfg.momentum, cfg.weight_decay);
    }
  }

  record.final_train_accuracy = train_accuracy(params, dataset);
  auto t_end = std::chrono::steady_clock::now();
  record.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
  return {std::move(params), std::move(record)};
}

}  // namespace

std::pair<MlpParams, RunRecord> train_classifier(
    const SpeakerDataset& dataset, const std::vector<std::size_t>& layer_dims,
    const TrainConfig& cfg) {
  return run_training(dataset, layer_dims, cfg, nullptr);
}

std::pair<MlpParams, RunRecord> train_teacher(
    const SpeakerDataset& dataset, const std::vector<std::size_t>& layer_dims,
    const TrainConfig& cfg) {
  auto [params, record] = run_training(dataset, layer_dims, cfg, nullptr);
  if (cfg.epochs > 0 && record.final_train_accuracy < kMinTeacherAccuracy) {
    record.failed = true;
    record.fail_reason =
        "teacher train accuracy " + std::to_string(record.final_train_accuracy) +
        " below required " + std::to_string(kMinTeacherAccuracy);
  }
  return {std::move(params), std::move(record)};
}

std::pair<MlpParams, RunRecord> distill(const MlpParams& teacher,
                                        const std::vector<std::size_t>& student_dims,
                                        const SpeakerDataset& dataset,
                                        const TrainConfig& cfg) {
  return run_training(dataset, student_dims, cfg, &teacher);
}

void sgd_step(MlpParams& params, const MlpGradients& grads, SgdState& state,
              double lr, double momentum, double weight_decay) {
  auto update = [&](Vec& p, const Vec& g, Vec& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i] + lr * weight_decay * p[i];
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight.data, grads.layers[l].weight.data,
           state.velocity.layers[l].weight.data);
    update(params.layers[l].bias, grads.layers[l].bias,
           state.velocity.layers[l].bias);
  }
  update(params.class_weights.data, grads.class_weights.data,
         state.velocity.class_weights.data);
  renormalize_class_weights(params.class_weights);
}

double train_accuracy(const MlpParams& params, const SpeakerDataset& dataset) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    ForwardTrace t = forward(
        params, std::span<const double>(dataset.features.row(i), dataset.features.cols));
    std::size_t best =
        std::max_element(t.cosines.begin(), t.cosines.end()) - t.cosines.begin();
    if (best == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void save_run_record(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open run record for writing: " + path.string());
  }
  char buf[256];
  for (const StepLog& s : record.steps) {
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%zu,\"total\":%.17g,\"cls\":%.17g,\"kd\":%.17g,"
                  "\"margin\":%.17g}\n",
                  s.step, s.total, s.cls, s.kd, s.margin);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "{\"final_train_accuracy\":%.17g,\"failed\":%s,\"checkpoint\":\"%s\"}\n",
                record.final_train_accuracy, record.failed ? "true" : "false",
                record.checkpoint.c_str());
  os << buf;
  if (!os) {
    throw IoError("failed writing run record: " + path.string());
  }
}

}  // namespace dkd
