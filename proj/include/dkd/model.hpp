#ifndef DKD_MODEL_HPP
#define DKD_MODEL_HPP

#include <filesystem>
#include <vector>

#include "dkd/numerics.hpp"

// Small MLP embedding extractors with a cosine classifier head. Hidden
// layers use a rectifier; the final layer producing the embedding is
// linear. Class weights are kept row-unit-norm so the head scores are
// cosines between the normalized embedding and each class direction.

namespace dkd {

struct LayerParams {
  Matrix weight;  // out x in
  Vec bias;       // out
};

struct MlpParams {
  std::vector<LayerParams> layers;
  Matrix class_weights;  // K x embedding_dim, unit-norm rows

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t embedding_dim() const { return layers.back().weight.rows; }
  std::size_t num_classes() const { return class_weights.rows; }
};

// Same shapes as MlpParams; used for gradients and optimizer velocity.
struct MlpGradients {
  std::vector<LayerParams> layers;
  Matrix class_weights;
};

struct ForwardTrace {
  Vec input;
  std::vector<Vec> pre_activations;  // per layer
  std::vector<Vec> activations;      // per layer; last one is the embedding
  Vec embedding;                     // pre-normalization
  double embedding_norm = 0.0;
  Vec unit_embedding;
  Vec cosines;  // class_weights rows . unit_embedding, in [-1, 1]
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, class weight
// rows drawn the same way then renormalized to unit norm. Draw order is
// fixed (layers in order, row-major, then class weights), so a given stream
// always yields the same parameters.
MlpParams init_params(const std::vector<std::size_t>& layer_dims,
                      std::size_t num_classes, RngStream& rng);

MlpGradients zero_gradients_like(const MlpParams& params);

ForwardTrace forward(const MlpParams& params, std::span<const double> x);

// Exact reverse-mode gradients for all parameters given the loss gradients
// with respect to the cosine scores and (optionally, may be empty) the
// pre-normalization embedding. Accumulates into grads.
void backward(const MlpParams& params, const ForwardTrace& trace,
              std::span<const double> grad_cosines,
              std::span<const double> grad_embedding, MlpGradients& grads);

// Renormalize class-weight rows to unit norm. Rows already within 1e-13 of
// unit are left untouched so the operation is idempotent at the bit level.
void renormalize_class_weights(Matrix& class_weights);

// Portable binary checkpoint: magic, version, dimension header, then all
// parameters as little-endian IEEE-754 doubles. Identical parameters give
// identical file bytes.
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dkd

#endif
