#include "dkd/model.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dkd/errors.hpp"

namespace dkd {

MlpParams init_params(const std::vector<std::size_t>& layer_dims,
                      std::size_t num_classes, RngStream& rng) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("init_params: need at least [input, output] dims");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("init_params: need at least 2 classes");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) {
      throw std::invalid_argument("init_params: layer dims must be positive");
    }
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    std::size_t in = layer_dims[l];
    std::size_t out = layer_dims[l + 1];
    LayerParams layer;
    layer.weight = Matrix(out, in);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight.data) {
      w = rng.uniform(-bound, bound);
    }
    layer.bias.assign(out, 0.0);
    p.layers.push_back(std::move(layer));
  }
  std::size_t emb = layer_dims.back();
  p.class_weights = Matrix(num_classes, emb);
  double bound = 1.0 / std::sqrt(static_cast<double>(emb));
  for (double& w : p.class_weights.data) {
    w = rng.uniform(-bound, bound);
  }
  // A freshly drawn row could in principle be all-zero; nudge before
  // normalizing rather than dividing by zero.
  for (std::size_t r = 0; r < p.class_weights.rows; ++r) {
    double n = norm2(std::span<const double>(p.class_weights.row(r), emb));
    if (n == 0.0) {
      p.class_weights.at(r, 0) = bound;
    }
  }
  renormalize_class_weights(p.class_weights);
  return p;
}

MlpGradients zero_gradients_like(const MlpParams& params) {
  MlpGradients g;
  for (const LayerParams& layer : params.layers) {
    LayerParams zl;
    zl.weight = Matrix(layer.weight.rows, layer.weight.cols);
    zl.bias.assign(layer.bias.size(), 0.0);
    g.layers.push_back(std::move(zl));
  }
  g.class_weights = Matrix(params.class_weights.rows, params.class_weights.cols);
  return g;
}

ForwardTrace forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  ForwardTrace t;
  t.input.assign(x.begin(), x.end());
  Vec a = t.input;
  std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Vec z = matvec(params.layers[l].weight, a);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += params.layers[l].bias[i];
    }
    t.pre_activations.push_back(z);
    if (l < last) {
      for (double& v : z) {
        v = v > 0.0 ? v : 0.0;  // rectifier on hidden layers only
      }
    }
    t.activations.push_back(z);
    a = std::move(z);
  }
  t.embedding = a;
  t.embedding_norm = norm2(t.embedding);
  if (t.embedding_norm == 0.0) {
    throw std::domain_error("forward: zero embedding, cosine head undefined");
  }
  if (!std::isfinite(t.embedding_norm)) {
    throw std::domain_error("forward: non-finite embedding");
  }
  t.unit_embedding.resize(t.embedding.size());
  for (std::size_t i = 0; i < t.embedding.size(); ++i) {
    t.unit_embedding[i] = t.embedding[i] / t.embedding_norm;
  }
  t.cosines = matvec(params.class_weights, t.unit_embedding);
  return t;
}

void backward(const MlpParams& params, const ForwardTrace& trace,
              std::span<const double> grad_cosines,
              std::span<const double> grad_embedding, MlpGradients& grads) {
  std::size_t emb = params.embedding_dim();
  if (!grad_cosines.empty() && grad_cosines.size() != params.num_classes()) {
    throw std::invalid_argument("backward: cosine gradient shape mismatch");
  }
  if (!grad_embedding.empty() && grad_embedding.size() != emb) {
    throw std::invalid_argument("backward: embedding gradient shape mismatch");
  }

  // Head: c = W_class u with u = e / |e|.
  Vec d_embedding(emb, 0.0);
  if (!grad_cosines.empty()) {
    add_outer(grads.class_weights, grad_cosines, trace.unit_embedding);
    Vec du = matvec_transpose(params.class_weights, grad_cosines);
    // de = (du - (du . u) u) / |e|
    double proj = dot(du, trace.unit_embedding);
    for (std::size_t i = 0; i < emb; ++i) {
      d_embedding[i] =
          (du[i] - proj * trace.unit_embedding[i]) / trace.embedding_norm;
    }
  }
  if (!grad_embedding.empty()) {
    for (std::size_t i = 0; i < emb; ++i) {
      d_embedding[i] += grad_embedding[i];
    }
  }

  // Layers, last to first. The final layer is linear; hidden layers gate
  // through the rectifier (subgradient 0 at the kink).
  Vec delta = std::move(d_embedding);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Vec& below = l == 0 ? trace.input : trace.activations[l - 1];
    add_outer(grads.layers[l].weight, delta, below);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      grads.layers[l].bias[i] += delta[i];
    }
    if (l == 0) break;
    Vec t = matvec_transpose(params.layers[l].weight, delta);
    const Vec& pre = trace.pre_activations[l - 1];
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = pre[i] > 0.0 ? t[i] : 0.0;
    }
    delta = std::move(t);
  }
}

void renormalize_class_weights(Matrix& class_weights) {
  for (std::size_t r = 0; r < class_weights.rows; ++r) {
    std::span<const double> row(class_weights.row(r), class_weights.cols);
    double n = norm2(row);
    if (n == 0.0) {
      throw std::domain_error("renormalize_class_weights: zero row");
    }
    if (std::abs(n - 1.0) <= 1e-13) continue;
    double* w = class_weights.row(r);
    for (std::size_t c = 0; c < class_weights.cols; ++c) {
      w[c] /= n;
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format, version 1:
//   bytes 0..7   magic "DKDCKPT\n"
//   u32          version (1)
//   u32          number of affine layers L
//   u64 x (L+1)  dims: input, hidden..., embedding
//   u64          number of classes K
//   doubles      layer weights+biases in order, then class weights
// All integers and doubles little-endian.

namespace {

constexpr char kMagic[8] = {'D', 'K', 'D', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ofstream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& is) {
  return std::bit_cast<double>(get_u64(is));
}

}  // namespace

void save_checkpoint(const MlpParams& params,
                     const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw IoError("cannot open checkpoint for writing: " + path.string());
  }
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(params.layers.size()));
  put_u64(os, params.input_dim());
  for (const LayerParams& l : params.layers) {
    put_u64(os, l.weight.rows);
  }
  put_u64(os, params.num_classes());
  for (const LayerParams& l : params.layers) {
    for (double w : l.weight.data) put_f64(os, w);
    for (double b : l.bias) put_f64(os, b);
  }
  for (double w : params.class_weights.data) put_f64(os, w);
  if (!os) {
    throw IoError("failed writing checkpoint: " + path.string());
  }
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("cannot open checkpoint: " + path.string());
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("bad checkpoint magic: " + path.string());
  }
  std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version in " + path.string());
  }
  std::uint32_t num_layers = get_u32(is);
  if (num_layers == 0 || num_layers > 64) {
    throw IoError("implausible layer count in " + path.string());
  }
  std::vector<std::size_t> dims(num_layers + 1);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    dims[i] = static_cast<std::size_t>(get_u64(is));
  }
  std::size_t num_classes = static_cast<std::size_t>(get_u64(is));
  if (!is) {
    throw IoError("truncated checkpoint header: " + path.string());
  }
  MlpParams p;
  for (std::size_t l = 0; l < num_layers; ++l) {
    LayerParams layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    for (double& w : layer.weight.data) w = get_f64(is);
    layer.bias.resize(dims[l + 1]);
    for (double& b : layer.bias) b = get_f64(is);
    p.layers.push_back(std::move(layer));
  }
  p.class_weights = Matrix(num_classes, dims.back());
  for (double& w : p.class_weights.data) w = get_f64(is);
  if (!is) {
    throw IoError("truncated checkpoint data: " + path.string());
  }
  return p;
}

}  // namespace dkd
