#ifndef DKD_NUMERICS_HPP
#define DKD_NUMERICS_HPP

#include <cstdint>
#include <span>
#include <vector>

// Deterministic numeric kernels shared by every loss and model in this
// project. All loss-critical arithmetic is 64-bit; softmax and log-softmax
// always go through max-shifted log-sum-exp so that logits at AAM scale
// (|z| up to ~32) never overflow.

namespace dkd {

using Vec = std::vector<double>;
using Logits = std::vector<double>;

// Probability distribution over K classes. Instances produced by softmax()
// sum to 1 within 1e-12 and have strictly positive entries.
struct ProbDist {
  Vec probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

// log(sum(exp(v_i))) via max-shift. Throws std::invalid_argument on an
// empty or non-finite input. Result >= max(v).
double log_sum_exp(std::span<const double> v);

// p_i = exp(z_i) / sum_j exp(z_j). Shift-invariant and monotone in z.
ProbDist softmax(std::span<const double> logits);

// z - log_sum_exp(z) * 1. exp of the result sums to 1 within 1e-12.
Vec log_softmax(std::span<const double> logits);

// sum_i p_i * log(p_i / q_i) with the 0*log(0) := 0 convention.
// Terms with p_i > 0 and q_i == 0 make the result +infinity; that is a
// legal outcome, not an error. Length mismatch throws.
double kl_divergence(const ProbDist& p, const ProbDist& q);

// ---------------------------------------------------------------------------
// Dense row-major matrix, just enough for MLP forward/backward.

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
};

// y = A x
Vec matvec(const Matrix& a, std::span<const double> x);
// y = A^T x
Vec matvec_transpose(const Matrix& a, std::span<const double> x);
// A += u v^T
void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

// ---------------------------------------------------------------------------
// Seeded PRNG stream: xoshiro256++ state initialized with splitmix64.
// Fixed algorithm and constants, so identical seeds give identical
// sequences on every platform. A stream is single-owner mutable state;
// parallel work gets independent child streams via split().

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller with a cached spare draw.
  double normal();

  // Unbiased integer in [0, n) by rejection. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates, consuming one below() per element.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // Child stream derived from (seed, label) only -- independent of how many
  // draws the parent has made. Used to hand one sub-stream each to data
  // generation, parameter init and batch shuffling.
  RngStream split(std::uint64_t label) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dkd

#endif
