#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dkd/losses.hpp"
#include "oracles.hpp"

using namespace dkd;

namespace {

void check_grad(const Vec& analytic, const Vec& fd, double tol = 1e-6) {
  REQUIRE(analytic.size() == fd.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    CHECK(std::abs(analytic[i] - fd[i]) < tol);
  }
}

}  // namespace

TEST_CASE("decouple: uniform and hand-computed splits") {
  DecoupledProbs d = decouple(ProbDist{Vec{0.25, 0.25, 0.25, 0.25}}, 0);
  CHECK(d.p_target == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d.p_nontarget_total == doctest::Approx(0.75).epsilon(1e-15));
  for (double v : d.nontarget_dist) {
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  DecoupledProbs e = decouple(ProbDist{Vec{0.5, 0.3, 0.2}}, 1);
  CHECK(e.p_target == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(e.p_nontarget_total == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(e.nontarget_dist[0] == doctest::Approx(5.0 / 7.0).epsilon(1e-14));
  CHECK(e.nontarget_dist[1] == doctest::Approx(2.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("decouple: reconstruction invariant on random softmax outputs") {
  RngStream rng(31);
  ProbDist p = softmax(oracle::random_logits(rng, 32, -10.0, 10.0));
  DecoupledProbs d = decouple(p, 5);
  CHECK(std::abs(d.p_target + d.p_nontarget_total - 1.0) < 1e-12);
  double phat_sum = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    if (i == 5) continue;
    CHECK(std::abs(d.p_nontarget_total * d.nontarget_dist[j] - p[i]) < 1e-12);
    phat_sum += d.nontarget_dist[j];
    ++j;
  }
  CHECK(std::abs(phat_sum - 1.0) < 1e-12);
}

TEST_CASE("decouple: errors") {
  CHECK_THROWS_AS(decouple(ProbDist{Vec{0.5, 0.5}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(decouple(ProbDist{Vec{1.0, 0.0}}, 0), std::domain_error);
}

TEST_CASE("kd_conventional: analytic value and bit-exact delegation") {
  ProbDist t{Vec{0.75, 0.25}};
  ProbDist s{Vec{0.25, 0.75}};
  CHECK(kd_conventional(t, t) == 0.0);
  CHECK(kd_conventional(t, s) ==
        doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-15));

  RngStream rng(37);
  ProbDist pt = softmax(oracle::random_logits(rng, 64, -10.0, 10.0));
  ProbDist ps = softmax(oracle::random_logits(rng, 64, -10.0, 10.0));
  CHECK(kd_conventional(pt, ps) == kl_divergence(pt, ps));
}

TEST_CASE("tskd_loss: frozen two-term value, blindness to non-target mix") {
  // teacher (0.9, 0.1) vs student (0.5, 0.5):
  // 0.9 ln 1.8 + 0.1 ln 0.2 = 0.36806420716849707
  DecoupledProbs t{0.9, 0.1, Vec{0.5, 0.5}, 0};
  DecoupledProbs s{0.5, 0.5, Vec{0.5, 0.5}, 0};
  CHECK(tskd_loss(t, s) == doctest::Approx(0.36806420716849707).epsilon(1e-14));
  CHECK(tskd_loss(t, t) == 0.0);

  // same binary marginals, different non-target composition -> 0
  DecoupledProbs a{0.5, 0.5, Vec{0.9, 0.1}, 0};
  DecoupledProbs b{0.5, 0.5, Vec{0.1, 0.9}, 0};
  CHECK(tskd_loss(a, b) == 0.0);

  DecoupledProbs wrong{0.5, 0.5, Vec{0.5, 0.5}, 1};
  CHECK_THROWS_AS(tskd_loss(a, wrong), std::invalid_argument);
}

TEST_CASE("nskd_loss: delegation to KL and the K = 2 convention") {
  RngStream rng(41);
  ProbDist pt = softmax(oracle::random_logits(rng, 32, -8.0, 8.0));
  ProbDist ps = softmax(oracle::random_logits(rng, 32, -8.0, 8.0));
  DecoupledProbs t = decouple(pt, 3);
  DecoupledProbs s = decouple(ps, 3);
  CHECK(nskd_loss(t, s) == kl_divergence(ProbDist{t.nontarget_dist},
                                         ProbDist{s.nontarget_dist}));
  CHECK(nskd_loss(t, t) == 0.0);

  DecoupledProbs t2 = decouple(ProbDist{Vec{0.7, 0.3}}, 0);
  DecoupledProbs s2 = decouple(ProbDist{Vec{0.2, 0.8}}, 0);
  CHECK(nskd_loss(t2, s2) == 0.0);
}

TEST_CASE("dkd_loss: zero at equality, gamma 0 reduces to tskd") {
  RngStream rng(43);
  Vec z = oracle::random_logits(rng, 12, -8.0, 8.0);
  DkdConfig cfg;
  cfg.gamma = 3.0;
  LossGrad e = dkd_loss(z, z, 4, cfg);
  CHECK(e.loss == doctest::Approx(0.0).epsilon(1e-15));
  for (double g : e.grad) {
    CHECK(std::abs(g) < 1e-15);
  }

  Vec zt = oracle::random_logits(rng, 12, -8.0, 8.0);
  Vec zs = oracle::random_logits(rng, 12, -8.0, 8.0);
  cfg.gamma = 0.0;
  LossGrad d = dkd_loss(zt, zs, 7, cfg);
  LossGrad t = tskd_loss_logits(zt, zs, 7);
  CHECK(d.loss == doctest::Approx(t.loss).epsilon(1e-15));
  check_grad(d.grad, t.grad, 1e-15);
}

TEST_CASE("logit-loss gradients match finite differences") {
  RngStream rng(47);
  DkdConfig cfg;
  cfg.gamma = 2.0;
  for (int iter = 0; iter < 120; ++iter) {
    std::size_t k = 2 + rng.below(16);
    std::size_t target = rng.below(k);
    Vec zt = oracle::random_logits(rng, k, -10.0, 10.0);
    Vec zs = oracle::random_logits(rng, k, -10.0, 10.0);

    LossGrad dkd = dkd_loss(zt, zs, target, cfg);
    Vec fd = oracle::finite_difference(
        [&](const Vec& z) { return dkd_loss(zt, z, target, cfg).loss; }, zs);
    check_grad(dkd.grad, fd);

    LossGrad tskd = tskd_loss_logits(zt, zs, target);
    fd = oracle::finite_difference(
        [&](const Vec& z) { return tskd_loss_logits(zt, z, target).loss; }, zs);
    check_grad(tskd.grad, fd);

    LossGrad nskd = nskd_loss_logits(zt, zs, target);
    fd = oracle::finite_difference(
        [&](const Vec& z) { return nskd_loss_logits(zt, z, target).loss; }, zs);
    check_grad(nskd.grad, fd);

    LossGrad kld = kld_loss_logits(zt, zs);
    fd = oracle::finite_difference(
        [&](const Vec& z) { return kld_loss_logits(zt, z).loss; }, zs);
    check_grad(kld.grad, fd);
  }
}

TEST_CASE("dkd with gamma = 1 - p_tau^T reproduces conventional KD, loss and grad") {
  RngStream rng(53);
  DkdConfig cfg;
  cfg.gamma_mode = GammaMode::one_minus_teacher_target;
  for (int iter = 0; iter < 300; ++iter) {
    std::size_t k = 2 + rng.below(16);
    std::size_t target = rng.below(k);
    Vec zt = oracle::random_logits(rng, k, -30.0, 30.0);
    Vec zs = oracle::random_logits(rng, k, -30.0, 30.0);
    LossGrad dkd = dkd_loss(zt, zs, target, cfg);
    LossGrad kld = kld_loss_logits(zt, zs);
    CHECK(std::abs(dkd.loss - kld.loss) < 1e-9);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(dkd.grad[i] - kld.grad[i]) < 1e-9);
    }
  }
}

TEST_CASE("decomposition identity: KL = TSKD + (1 - p_tau^T) NSKD") {
  RngStream rng(59);
  const std::size_t ks[] = {2, 3, 8, 64, 512};
  for (std::size_t k : ks) {
    for (int iter = 0; iter < 200; ++iter) {
      std::size_t target = rng.below(k);
      Vec zt = oracle::random_logits(rng, k, -30.0, 30.0);
      Vec zs = oracle::random_logits(rng, k, -30.0, 30.0);
      ProbDist pt = softmax(zt);
      ProbDist ps = softmax(zs);
      double kl = kd_conventional(pt, ps);
      double tskd = tskd_loss_logits(zt, zs, target).loss;
      double nskd = nskd_loss_logits(zt, zs, target).loss;
      CHECK(std::abs(kl - (tskd + (1.0 - pt[target]) * nskd)) < 1e-9);
    }
  }
}

TEST_CASE("suppression effect: conventional KD's NSKD weight vanishes as the teacher sharpens") {
  // fixed non-target logits, rising target logit
  Vec base{0.0, 1.0, -0.5, 0.3, 0.7, -1.2};
  double prev_weight = 1.0;
  const double gamma = 2.0;
  for (double zt_target = 0.0; zt_target <= 20.0; zt_target += 2.0) {
    Vec z = base;
    z[0] = zt_target;
    double p_target = softmax(z)[0];
    double implicit_weight = 1.0 - p_target;  // conventional KD's coupled NSKD weight
    CHECK(implicit_weight < prev_weight);
    prev_weight = implicit_weight;
    // the decoupled objective keeps the NSKD weight pinned at gamma
    DkdConfig cfg;
    cfg.gamma = gamma;
    CHECK(cfg.gamma == gamma);
  }
  CHECK(prev_weight < 1e-7);  // near-total suppression at high confidence
}

TEST_CASE("nskd is invariant to target-logit perturbations on either side") {
  RngStream rng(61);
  Vec zt = oracle::random_logits(rng, 10, -5.0, 5.0);
  Vec zs = oracle::random_logits(rng, 10, -5.0, 5.0);
  double base = nskd_loss_logits(zt, zs, 2).loss;
  for (int iter = 0; iter < 50; ++iter) {
    Vec zt2 = zt, zs2 = zs;
    zt2[2] = rng.uniform(-20.0, 20.0);
    zs2[2] = rng.uniform(-20.0, 20.0);
    CHECK(nskd_loss_logits(zt2, zs2, 2).loss ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("cosine_embedding_kd: examples and finite differences") {
  LossGrad same = cosine_embedding_kd(Vec{1.0, 0.0}, Vec{1.0, 0.0});
  CHECK(same.loss == doctest::Approx(0.0).epsilon(1e-15));
  LossGrad orth = cosine_embedding_kd(Vec{1.0, 0.0}, Vec{0.0, 1.0});
  CHECK(orth.loss == doctest::Approx(1.0).epsilon(1e-15));
  // positive collinear -> 0; opposite -> 2
  CHECK(cosine_embedding_kd(Vec{1.0, 2.0}, Vec{2.0, 4.0}).loss ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_embedding_kd(Vec{1.0, 0.0}, Vec{-1.0, 0.0}).loss ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_embedding_kd(Vec{0.0, 0.0}, Vec{1.0, 0.0}),
                  std::invalid_argument);

  RngStream rng(67);
  for (int iter = 0; iter < 120; ++iter) {
    std::size_t dim = 2 + rng.below(64);
    Vec t(dim), s(dim);
    for (double& v : t) v = rng.normal();
    for (double& v : s) v = rng.normal();
    if (norm2(t) < 1e-3 || norm2(s) < 1e-3) continue;
    LossGrad lg = cosine_embedding_kd(t, s);
    CHECK(lg.loss >= 0.0);
    CHECK(lg.loss <= 2.0 + 1e-12);
    Vec fd = oracle::finite_difference(
        [&](const Vec& e) { return cosine_embedding_kd(t, e).loss; }, s);
    check_grad(lg.grad, fd);
  }
}

TEST_CASE("aam_logits: passthrough, theta = 0, frozen trig value") {
  Logits plain = aam_logits(Vec{0.5, -0.2}, 0, 32.0, 0.0);
  CHECK(plain[0] == 16.0);
  CHECK(plain[1] == doctest::Approx(-6.4).epsilon(1e-15));

  Logits at_one = aam_logits(Vec{1.0, 0.0}, 0, 32.0, 0.3);
  CHECK(at_one[0] == doctest::Approx(32.0 * std::cos(0.3)).epsilon(1e-14));

  // frozen: 32 cos(acos(0.7) + 0.2) = 17.413386361821625
  Logits frozen = aam_logits(Vec{0.7, 0.1}, 0, 32.0, 0.2);
  CHECK(frozen[0] == doctest::Approx(17.413386361821625).epsilon(1e-13));
  CHECK(frozen[1] == doctest::Approx(3.2).epsilon(1e-15));

  CHECK_THROWS_AS(aam_logits(Vec{1.1, 0.0}, 0, 32.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(aam_logits(Vec{0.0, 0.0}, 5, 32.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(aam_logits(Vec{0.0, 0.0}, 0, 32.0, 2.0), std::invalid_argument);
  // within the 1e-9 slack: clamped, not an error
  Logits slack = aam_logits(Vec{1.0 + 5e-10, 0.0}, 1, 2.0, 0.0);
  CHECK(slack[0] == 2.0);
}

TEST_CASE("cross_entropy: examples and finite differences") {
  LossGrad uniform = cross_entropy(Vec{0.0, 0.0, 0.0, 0.0}, 1);
  CHECK(uniform.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  LossGrad confident = cross_entropy(Vec{10.0, -10.0}, 0);
  CHECK(confident.loss < 1e-8);
  CHECK_THROWS_AS(cross_entropy(Vec{0.0, 0.0}, 2), std::invalid_argument);

  RngStream rng(71);
  for (int iter = 0; iter < 120; ++iter) {
    std::size_t k = 2 + rng.below(8);
    std::size_t target = rng.below(k);
    Vec z = oracle::random_logits(rng, k, -10.0, 10.0);
    LossGrad lg = cross_entropy(z, target);
    Vec fd = oracle::finite_difference(
        [&](const Vec& v) { return cross_entropy(v, target).loss; }, z);
    check_grad(lg.grad, fd);
  }
}

TEST_CASE("aam + cross-entropy composite gradient") {
  RngStream rng(73);
  for (int iter = 0; iter < 120; ++iter) {
    std::size_t k = 2 + rng.below(10);
    std::size_t target = rng.below(k);
    // stay clear of the theta + margin > pi fallback switch at -cos(margin)
    Vec cosines(k);
    for (double& c : cosines) c = rng.uniform(-0.85, 0.85);
    double margin = rng.uniform(0.0, 0.4);
    LossGrad lg = aam_cross_entropy(cosines, target, 32.0, margin);
    Vec fd = oracle::finite_difference(
        [&](const Vec& c) { return aam_cross_entropy(c, target, 32.0, margin).loss; },
        cosines);
    check_grad(lg.grad, fd, 2e-6);
  }
}

TEST_CASE("aam with margin 0 composed with CE equals scale * (softmax(scale cos) - onehot)") {
  RngStream rng(79);
  for (int iter = 0; iter < 50; ++iter) {
    std::size_t k = 2 + rng.below(10);
    std::size_t target = rng.below(k);
    Vec cosines(k);
    for (double& c : cosines) c = rng.uniform(-1.0, 1.0);
    LossGrad lg = aam_cross_entropy(cosines, target, 32.0, 0.0);
    Vec scaled(k);
    for (std::size_t i = 0; i < k; ++i) scaled[i] = 32.0 * cosines[i];
    ProbDist p = softmax(scaled);
    for (std::size_t i = 0; i < k; ++i) {
      double expect = 32.0 * (p[i] - (i == target ? 1.0 : 0.0));
      CHECK(lg.grad[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("all losses are nonnegative and vanish at teacher == student") {
  RngStream rng(83);
  DkdConfig cfg;
  for (int iter = 0; iter < 200; ++iter) {
    std::size_t k = 2 + rng.below(30);
    std::size_t target = rng.below(k);
    Vec zt = oracle::random_logits(rng, k, -10.0, 10.0);
    Vec zs = oracle::random_logits(rng, k, -10.0, 10.0);
    CHECK(tskd_loss_logits(zt, zs, target).loss >= -1e-15);
    CHECK(nskd_loss_logits(zt, zs, target).loss >= -1e-15);
    CHECK(kld_loss_logits(zt, zs).loss >= -1e-15);
    CHECK(dkd_loss(zt, zs, target, cfg).loss >= -1e-15);
    CHECK(std::abs(tskd_loss_logits(zt, zt, target).loss) < 1e-14);
    CHECK(std::abs(nskd_loss_logits(zt, zt, target).loss) < 1e-14);
    CHECK(std::abs(kld_loss_logits(zt, zt).loss) < 1e-14);
  }
}

TEST_CASE("temperature scales the losses consistently") {
  RngStream rng(89);
  Vec zt = oracle::random_logits(rng, 8, -10.0, 10.0);
  Vec zs = oracle::random_logits(rng, 8, -10.0, 10.0);
  DkdConfig hot;
  hot.temperature = 4.0;
  hot.gamma = 2.0;
  // temperature T is equivalent to dividing both logit vectors by T first
  Vec zt_div = zt, zs_div = zs;
  for (double& v : zt_div) v /= 4.0;
  for (double& v : zs_div) v /= 4.0;
  DkdConfig unit;
  unit.gamma = 2.0;
  CHECK(dkd_loss(zt, zs, 1, hot).loss ==
        doctest::Approx(dkd_loss(zt_div, zs_div, 1, unit).loss).epsilon(1e-12));
  // gradient check under temperature
  LossGrad lg = dkd_loss(zt, zs, 1, hot);
  Vec fd = oracle::finite_difference(
      [&](const Vec& z) { return dkd_loss(zt, z, 1, hot).loss; }, zs);
  check_grad(lg.grad, fd);
}

TEST_CASE("margin_at_step: ramp shape") {
  AamConfig cfg;
  cfg.margin_max = 0.2;
  cfg.margin_warmup_steps = 100;
  CHECK(margin_at_step(0, cfg) == 0.0);
  CHECK(margin_at_step(50, cfg) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(margin_at_step(100, cfg) == 0.2);
  CHECK(margin_at_step(5000, cfg) == 0.2);
  double prev = -1.0;
  for (std::size_t s = 0; s < 150; ++s) {
    double m = margin_at_step(s, cfg);
    CHECK(m >= prev);
    prev = m;
  }
  AamConfig instant;
  instant.margin_max = 0.2;
  instant.margin_warmup_steps = 0;
  CHECK(margin_at_step(0, instant) == 0.2);
}
