#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dkd/numerics.hpp"
#include "oracles.hpp"

using namespace dkd;

TEST_CASE("log_sum_exp basics") {
  CHECK(log_sum_exp(Vec{0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // max-shift must keep huge logits finite
  CHECK(log_sum_exp(Vec{1000.0, 1000.0}) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
  // frozen from an extended-precision summation of exp(0.3)+exp(-1.2)+exp(2.5)
  CHECK(log_sum_exp(Vec{0.3, -1.2, 2.5}) ==
        doctest::Approx(2.6270965828004858).epsilon(1e-14));
}

TEST_CASE("log_sum_exp errors") {
  CHECK_THROWS_AS(log_sum_exp(Vec{}), std::invalid_argument);
  CHECK_THROWS_AS(log_sum_exp(Vec{1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(log_sum_exp(Vec{1.0, std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
}

TEST_CASE("log_sum_exp dominates max and matches reference") {
  RngStream rng(101);
  for (int iter = 0; iter < 500; ++iter) {
    std::size_t k = 2 + rng.below(30);
    Vec v = oracle::random_logits(rng, k);
    double lse = log_sum_exp(v);
    double m = *std::max_element(v.begin(), v.end());
    CHECK(lse >= m);
    CHECK(std::abs(lse - oracle::log_sum_exp_ref(v)) <=
          1e-12 * std::max(1.0, std::abs(lse)));
  }
  // no overflow anywhere up to |z| = 1e6
  Vec extreme{1e6, -1e6, 5e5};
  CHECK(std::isfinite(log_sum_exp(extreme)));
}

TEST_CASE("softmax examples") {
  ProbDist u = softmax(Vec{0.0, 0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));
  }
  ProbDist r = softmax(Vec{std::log(1.0), std::log(3.0)});
  CHECK(r[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS_AS(softmax(Vec{std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("softmax matches extended-precision oracle on seeded logits") {
  RngStream rng(7);
  Vec z = oracle::random_logits(rng, 8);
  ProbDist p = softmax(z);
  std::vector<double> ref = oracle::softmax_ref(z);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(std::abs(p[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("softmax properties: normalization, positivity, monotonicity, shift invariance") {
  RngStream rng(17);
  for (int iter = 0; iter < 1000; ++iter) {
    std::size_t k = 2 + rng.below(40);
    Vec z = oracle::random_logits(rng, k);
    ProbDist p = softmax(z);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(p[i] > 0.0);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    for (std::size_t i = 1; i < k; ++i) {
      if (z[i] > z[0]) CHECK(p[i] > p[0]);
      if (z[i] < z[0]) CHECK(p[i] < p[0]);
    }
    double c = rng.uniform(-50.0, 50.0);
    Vec shifted = z;
    for (double& v : shifted) v += c;
    ProbDist ps = softmax(shifted);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(p[i] - ps[i]) < 1e-12);
    }
  }
}

TEST_CASE("log_softmax examples and round trip") {
  Vec two = log_softmax(Vec{0.0, 0.0});
  CHECK(two[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  Vec three = log_softmax(Vec{5.0, 5.0, 5.0});
  for (double v : three) {
    CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-14));
  }

  RngStream rng(11);
  Vec z = oracle::random_logits(rng, 16);
  Vec ls = log_softmax(z);
  ProbDist p = softmax(z);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(std::abs(std::exp(ls[i]) - p[i]) < 1e-12);
    sum += std::exp(ls[i]);
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("kl_divergence examples") {
  ProbDist half{Vec{0.5, 0.5}};
  CHECK(kl_divergence(half, half) == 0.0);
  ProbDist point{Vec{1.0, 0.0}};
  CHECK(kl_divergence(point, half) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // p puts mass where q has none -> +inf outcome, not an exception
  ProbDist q0{Vec{0.0, 1.0}};
  CHECK(std::isinf(kl_divergence(point, q0)));
  CHECK_THROWS_AS(kl_divergence(half, ProbDist{Vec{1.0, 0.0, 0.0}}),
                  std::invalid_argument);
}

TEST_CASE("kl_divergence matches term-by-term oracle and Gibbs inequality") {
  RngStream rng(23);
  for (int iter = 0; iter < 10000; ++iter) {
    std::size_t k = 2 + rng.below(10);
    ProbDist p = softmax(oracle::random_logits(rng, k, -5.0, 5.0));
    ProbDist q = softmax(oracle::random_logits(rng, k, -5.0, 5.0));
    double kl = kl_divergence(p, q);
    CHECK(kl >= 0.0);
    if (iter < 500) {
      CHECK(std::abs(kl - oracle::kl_ref(p.probs, q.probs)) < 1e-12);
    }
  }
}

TEST_CASE("kl_divergence(p, p) cancels exactly for softmax outputs") {
  RngStream rng(29);
  for (int iter = 0; iter < 200; ++iter) {
    ProbDist p = softmax(oracle::random_logits(rng, 2 + rng.below(20)));
    CHECK(std::abs(kl_divergence(p, p)) < 1e-14);
  }
}

TEST_CASE("matrix-vector kernels") {
  Matrix a(2, 3);
  a.at(0, 0) = 1; a.at(0, 1) = 2; a.at(0, 2) = 3;
  a.at(1, 0) = 4; a.at(1, 1) = 5; a.at(1, 2) = 6;
  Vec x{1.0, 0.5, -1.0};
  Vec y = matvec(a, x);
  CHECK(y[0] == doctest::Approx(-1.0));
  CHECK(y[1] == doctest::Approx(0.5));
  Vec yt = matvec_transpose(a, Vec{1.0, -1.0});
  CHECK(yt[0] == doctest::Approx(-3.0));
  CHECK(yt[1] == doctest::Approx(-3.0));
  CHECK(yt[2] == doctest::Approx(-3.0));
  CHECK_THROWS_AS(matvec(a, Vec{1.0}), std::invalid_argument);

  Matrix g(2, 3);
  add_outer(g, Vec{1.0, 2.0}, Vec{3.0, 4.0, 5.0});
  CHECK(g.at(1, 2) == doctest::Approx(10.0));
}

TEST_CASE("rng streams: determinism and seed sensitivity") {
  RngStream a(12345), b(12345);
  for (int i = 0; i < 10000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  RngStream c(12345), d(12346);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    if (c.next_u64() != d.next_u64()) {
      differs = true;
      break;
    }
  }
  CHECK(differs);
}

TEST_CASE("rng split streams diverge from parent and from each other") {
  RngStream parent(99);
  RngStream c1 = parent.split(1);
  RngStream c2 = parent.split(2);
  RngStream c1_again = parent.split(1);
  bool c1_vs_c2 = false;
  for (int i = 0; i < 16; ++i) {
    std::uint64_t a = c1.next_u64();
    std::uint64_t b = c2.next_u64();
    CHECK(a == c1_again.next_u64());  // split is a pure function of (seed, label)
    if (a != b) c1_vs_c2 = true;
  }
  CHECK(c1_vs_c2);
}

TEST_CASE("rng helpers stay in range") {
  RngStream rng(5);
  for (int i = 0; i < 2000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7);
  }
  // normals roughly standard: mean and variance sanity over many draws
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}
