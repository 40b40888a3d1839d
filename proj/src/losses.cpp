#include "dkd/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dkd {

KdMode kd_mode_from_string(const std::string& s) {
  if (s == "none") return KdMode::none;
  if (s == "cosine_embedding") return KdMode::cosine_embedding;
  if (s == "conventional_kld") return KdMode::conventional_kld;
  if (s == "dkd") return KdMode::dkd;
  throw std::invalid_argument("unknown kd mode: " + s);
}

std::string to_string(KdMode mode) {
  switch (mode) {
    case KdMode::none: return "none";
    case KdMode::cosine_embedding: return "cosine_embedding";
    case KdMode::conventional_kld: return "conventional_kld";
    case KdMode::dkd: return "dkd";
  }
  return "?";
}

DecoupledProbs decouple(const ProbDist& p, std::size_t target) {
  if (p.size() < 2) {
    throw std::invalid_argument("decouple: need at least 2 classes");
  }
  if (target >= p.size()) {
    throw std::invalid_argument("decouple: target out of range");
  }
  DecoupledProbs d;
  d.target_index = target;
  d.p_target = p[target];
  // Divide by the actual non-target mass rather than 1 - p_target so that
  // the reconstruction p_i = p_nontarget_total * phat_i is exact.
  double nt_mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != target) nt_mass += p[i];
  }
  if (nt_mass <= 0.0) {
    throw std::domain_error(
        "decouple: target carries all probability mass, non-target "
        "distribution undefined");
  }
  d.p_nontarget_total = nt_mass;
  d.nontarget_dist.reserve(p.size() - 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != target) d.nontarget_dist.push_back(p[i] / nt_mass);
  }
  return d;
}

double kd_conventional(const ProbDist& p_teacher, const ProbDist& p_student) {
  return kl_divergence(p_teacher, p_student);
}

namespace {

// One KL term p * log(p / q) under the 0*log(0) := 0 convention.
double kl_term(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  return p * (std::log(p) - std::log(q));
}

}  // namespace

double tskd_loss(const DecoupledProbs& teacher, const DecoupledProbs& student) {
  if (teacher.target_index != student.target_index ||
      teacher.num_classes() != student.num_classes()) {
    throw std::invalid_argument("tskd_loss: mismatched target or K");
  }
  return kl_term(teacher.p_target, student.p_target) +
         kl_term(teacher.p_nontarget_total, student.p_nontarget_total);
}

double nskd_loss(const DecoupledProbs& teacher, const DecoupledProbs& student) {
  if (teacher.target_index != student.target_index ||
      teacher.num_classes() != student.num_classes()) {
    throw std::invalid_argument("nskd_loss: mismatched target or K");
  }
  if (teacher.num_classes() == 2) {
    // Single non-target class: both sides are the same point mass.
    return 0.0;
  }
  return kl_divergence(ProbDist{teacher.nontarget_dist},
                       ProbDist{student.nontarget_dist});
}

// ---------------------------------------------------------------------------
// Logit-level losses with analytic student gradients.
//
// For softmax s = softmax(z/T) with target tau write
//   b = (s_tau, 1 - s_tau)              binary target/non-target split
//   phat_k = exp(z_k/T) / sum_{i != tau} exp(z_i/T)   renormalized non-target
// The 1 - s_tau mass is computed as exp(lse_nontarget - lse_all), which
// stays accurate when s_tau approaches 1. Log-probabilities are formed as
// logit differences, so they are finite for any finite logits.

namespace {

struct LogitDecomp {
  Vec scaled;        // z / T
  double lse_all = 0.0;
  double lse_nontarget = 0.0;
  double log_p_target = 0.0;
  double log_p_nontarget = 0.0;
  double p_target = 0.0;
  double p_nontarget = 0.0;
  Vec phat;          // length K; entry at target is 0 and unused
  std::size_t target = 0;
};

LogitDecomp decompose_logits(std::span<const double> z, std::size_t target,
                             double temperature) {
  if (z.size() < 2) {
    throw std::invalid_argument("logit loss: need at least 2 classes");
  }
  if (target >= z.size()) {
    throw std::invalid_argument("logit loss: target out of range");
  }
  LogitDecomp d;
  d.target = target;
  d.scaled.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    d.scaled[i] = z[i] / temperature;
  }
  d.lse_all = log_sum_exp(d.scaled);
  Vec nontarget;
  nontarget.reserve(z.size() - 1);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != target) nontarget.push_back(d.scaled[i]);
  }
  d.lse_nontarget = log_sum_exp(nontarget);
  d.log_p_target = d.scaled[target] - d.lse_all;
  d.log_p_nontarget = d.lse_nontarget - d.lse_all;
  d.p_target = std::exp(d.log_p_target);
  d.p_nontarget = std::exp(d.log_p_nontarget);
  d.phat.assign(z.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != target) d.phat[i] = std::exp(d.scaled[i] - d.lse_nontarget);
  }
  return d;
}

void check_pair(std::span<const double> z_teacher,
                std::span<const double> z_student, double temperature) {
  if (z_teacher.size() != z_student.size()) {
    throw std::invalid_argument("logit loss: teacher/student K mismatch");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("logit loss: temperature must be > 0");
  }
}

// TSKD = p_tau^T (log p_tau^T - log p_tau^S)
//      + p_bar^T (log p_bar^T - log p_bar^S)
//
// Viewing b^S as softmax([z_tau, lse_nontarget]) gives the exact gradient
//   d/dz_tau   = s_tau - p_tau^T
//   d/dz_k     = (1 - s_tau - p_bar^T) * phat_k^S         (k != tau)
// each divided by the temperature.
LossGrad tskd_from(const LogitDecomp& t, const LogitDecomp& s,
                   double temperature) {
  LossGrad out;
  out.loss = t.p_target * (t.log_p_target - s.log_p_target) +
             t.p_nontarget * (t.log_p_nontarget - s.log_p_nontarget);
  out.grad.assign(s.scaled.size(), 0.0);
  double nt_coeff = (s.p_nontarget - t.p_nontarget) / temperature;
  for (std::size_t k = 0; k < s.scaled.size(); ++k) {
    out.grad[k] = (k == s.target)
                      ? (s.p_target - t.p_target) / temperature
                      : nt_coeff * s.phat[k];
  }
  return out;
}

// NSKD = sum_{k != tau} phat_k^T (log phat_k^T - log phat_k^S).
// phat does not depend on the target logit, so the gradient is
// (phat^S - phat^T) / T on non-target entries and exactly 0 at tau.
LossGrad nskd_from(const LogitDecomp& t, const LogitDecomp& s,
                   double temperature) {
  LossGrad out;
  out.grad.assign(s.scaled.size(), 0.0);
  if (s.scaled.size() == 2) {
    return out;  // single non-target class, NSKD := 0
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < s.scaled.size(); ++k) {
    if (k == s.target) continue;
    loss += t.phat[k] *
            ((t.scaled[k] - t.lse_nontarget) - (s.scaled[k] - s.lse_nontarget));
    out.grad[k] = (s.phat[k] - t.phat[k]) / temperature;
  }
  out.loss = loss;
  return out;
}

}  // namespace

LossGrad tskd_loss_logits(std::span<const double> z_teacher,
                          std::span<const double> z_student,
                          std::size_t target, double temperature) {
  check_pair(z_teacher, z_student, temperature);
  return tskd_from(decompose_logits(z_teacher, target, temperature),
                   decompose_logits(z_student, target, temperature),
                   temperature);
}

LossGrad nskd_loss_logits(std::span<const double> z_teacher,
                          std::span<const double> z_student,
                          std::size_t target, double temperature) {
  check_pair(z_teacher, z_student, temperature);
  return nskd_from(decompose_logits(z_teacher, target, temperature),
                   decompose_logits(z_student, target, temperature),
                   temperature);
}

LossGrad kld_loss_logits(std::span<const double> z_teacher,
                         std::span<const double> z_student,
                         double temperature) {
  check_pair(z_teacher, z_student, temperature);
  Vec zt(z_teacher.size()), zs(z_student.size());
  for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = z_teacher[i] / temperature;
  for (std::size_t i = 0; i < zs.size(); ++i) zs[i] = z_student[i] / temperature;
  ProbDist pt = softmax(zt);
  Vec ls = log_softmax(zs);
  Vec lt = log_softmax(zt);
  LossGrad out;
  out.grad.resize(zs.size());
  ProbDist ps = softmax(zs);
  double loss = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    loss += pt[i] * (lt[i] - ls[i]);
    out.grad[i] = (ps[i] - pt[i]) / temperature;
  }
  out.loss = loss;
  return out;
}

LossGrad dkd_loss(std::span<const double> z_teacher,
                  std::span<const double> z_student, std::size_t target,
                  const DkdConfig& cfg) {
  check_pair(z_teacher, z_student, cfg.temperature);
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) {
    throw std::invalid_argument("dkd_loss: gamma must be finite and >= 0");
  }
  LogitDecomp t = decompose_logits(z_teacher, target, cfg.temperature);
  LogitDecomp s = decompose_logits(z_student, target, cfg.temperature);
  double gamma = cfg.gamma_mode == GammaMode::one_minus_teacher_target
                     ? 1.0 - t.p_target
                     : cfg.gamma;
  LossGrad tskd = tskd_from(t, s, cfg.temperature);
  LossGrad nskd = nskd_from(t, s, cfg.temperature);
  LossGrad out;
  out.loss = tskd.loss + gamma * nskd.loss;
  out.grad.resize(tskd.grad.size());
  for (std::size_t k = 0; k < out.grad.size(); ++k) {
    out.grad[k] = tskd.grad[k] + gamma * nskd.grad[k];
  }
  return out;
}

LossGrad cosine_embedding_kd(std::span<const double> e_teacher,
                             std::span<const double> e_student) {
  if (e_teacher.size() != e_student.size() || e_teacher.empty()) {
    throw std::invalid_argument("cosine_embedding_kd: dimension mismatch");
  }
  double nt = norm2(e_teacher);
  double ns = norm2(e_student);
  if (nt == 0.0 || ns == 0.0) {
    throw std::invalid_argument("cosine_embedding_kd: zero vector");
  }
  double d = dot(e_teacher, e_student);
  double cos = d / (nt * ns);
  LossGrad out;
  out.loss = 1.0 - cos;
  out.grad.resize(e_student.size());
  // d(1 - cos)/ds = cos * s / |s|^2 - t / (|t| |s|)
  for (std::size_t i = 0; i < e_student.size(); ++i) {
    out.grad[i] = cos * e_student[i] / (ns * ns) - e_teacher[i] / (nt * ns);
  }
  return out;
}

Logits aam_logits(std::span<const double> cosines, std::size_t target,
                  double scale, double margin) {
  if (target >= cosines.size()) {
    throw std::invalid_argument("aam_logits: target out of range");
  }
  if (!(margin >= 0.0) || margin >= 1.57079632679489661923) {
    throw std::invalid_argument("aam_logits: margin must be in [0, pi/2)");
  }
  Logits out(cosines.size());
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    double c = cosines[i];
    if (!(c <= 1.0 + 1e-9) || !(c >= -1.0 - 1e-9)) {  // also rejects NaN
      throw std::domain_error("aam_logits: cosine outside [-1, 1]");
    }
    c = std::min(1.0, std::max(-1.0, c));
    if (i == target && margin > 0.0) {
      // Past theta + margin = pi the additive margin is no longer monotone
      // and its slope blows up; fall back to the linear penalty
      // c - margin*sin(margin) there (standard ArcFace stabilization).
      double flip = -std::cos(margin);  // cos(pi - margin)
      out[i] = c > flip ? scale * std::cos(std::acos(c) + margin)
                        : scale * (c - margin * std::sin(margin));
    } else {
      out[i] = scale * c;  // margin 0: exact passthrough
    }
  }
  return out;
}

LossGrad cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw std::invalid_argument("cross_entropy: target out of range");
  }
  Vec ls = log_softmax(logits);
  LossGrad out;
  out.loss = -ls[target];
  out.grad = softmax(logits).probs;
  out.grad[target] -= 1.0;
  return out;
}

double aam_target_slope(double cosine, double scale, double margin,
                        bool is_target) {
  if (!is_target || margin <= 0.0) return scale;
  double c = std::min(1.0, std::max(-1.0, cosine));
  double flip = -std::cos(margin);
  if (c <= flip) return scale;  // linear fallback region
  double sin_theta = std::sqrt(std::max(1.0 - c * c, 0.0));
  // d/dc scale*cos(acos(c) + m) = scale*(cos m + c sin m / sin theta);
  // sin theta floored so the slope stays finite at c -> 1.
  return scale * (std::cos(margin) +
                  c * std::sin(margin) / std::max(sin_theta, 1e-9));
}

LossGrad aam_cross_entropy(std::span<const double> cosines, std::size_t target,
                           double scale, double margin) {
  Logits z = aam_logits(cosines, target, scale, margin);
  LossGrad ce = cross_entropy(z, target);
  LossGrad out;
  out.loss = ce.loss;
  out.grad.resize(cosines.size());
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    out.grad[i] = ce.grad[i] * aam_target_slope(cosines[i], scale, margin,
                                                i == target);
  }
  return out;
}

double margin_at_step(std::size_t step, const AamConfig& cfg) {
  if (cfg.margin_warmup_steps == 0 || step >= cfg.margin_warmup_steps) {
    return cfg.margin_max;
  }
  return cfg.margin_max * static_cast<double>(step) /
         static_cast<double>(cfg.margin_warmup_steps);
}

}  // namespace dkd
