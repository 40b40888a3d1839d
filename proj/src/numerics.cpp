#include "dkd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dkd {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) {
    throw std::invalid_argument("log_sum_exp: empty vector");
  }
  require_finite(v, "log_sum_exp");
  double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) {
    sum += std::exp(x - m);
  }
  return m + std::log(sum);
}

ProbDist softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw std::invalid_argument("softmax: empty logits");
  }
  require_finite(logits, "softmax");
  double m = *std::max_element(logits.begin(), logits.end());
  Vec e(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(logits[i] - m);
    sum += e[i];
  }
  for (double& x : e) {
    x /= sum;
  }
  return ProbDist{std::move(e)};
}

Vec log_softmax(std::span<const double> logits) {
  double lse = log_sum_exp(logits);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - lse;
  }
  return out;
}

double kl_divergence(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double pi = p[i];
    if (pi <= 0.0) continue;  // 0 * log(0) := 0
    if (q[i] <= 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    sum += pi * (std::log(pi) - std::log(q[i]));
  }
  return sum;
}

Vec matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols) {
    throw std::invalid_argument("matvec: dimension mismatch");
  }
  Vec y(a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      s += row[c] * x[c];
    }
    y[r] = s;
  }
  return y;
}

Vec matvec_transpose(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows) {
    throw std::invalid_argument("matvec_transpose: dimension mismatch");
  }
  Vec y(a.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.row(r);
    double xr = x[r];
    for (std::size_t c = 0; c < a.cols; ++c) {
      y[c] += row[c] * xr;
    }
  }
  return y;
}

void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v) {
  if (u.size() != a.rows || v.size() != a.cols) {
    throw std::invalid_argument("add_outer: dimension mismatch");
  }
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* row = a.row(r);
    double ur = u[r];
    for (std::size_t c = 0; c < a.cols; ++c) {
      row[c] += ur * v[c];
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double norm2(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

// ---------------------------------------------------------------------------
// RngStream

namespace {

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (int i = 0; i < 4; ++i) {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    state_[i] = z ^ (z >> 31);
  }
  // xoshiro requires a nonzero state; splitmix never maps to all-zero in
  // practice but the guard costs nothing.
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
    state_[0] = 1;
  }
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++
  std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("RngStream::below: n must be > 0");
  }
  // Rejection sampling over the largest multiple of n.
  std::uint64_t bound = (~std::uint64_t{0} / n) * n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= bound);
  return x % n;
}

RngStream RngStream::split(std::uint64_t label) const {
  // Child seed = splitmix64(parent_seed XOR odd-multiplied label). Children
  // with distinct labels get unrelated streams regardless of parent draws.
  std::uint64_t mixed = seed_ ^ (label * 0xA24BAED4963EE407ULL + 0x9FB21C651E98DF25ULL);
  return RngStream(splitmix64_mix(mixed));
}

}  // namespace dkd
