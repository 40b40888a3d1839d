#ifndef DKD_LOSSES_HPP
#define DKD_LOSSES_HPP

#include <cstddef>
#include <string>

#include "dkd/numerics.hpp"

// Training objectives: classification (cross-entropy over AAM-softmax
// logits), conventional label-level KD, the target/non-target decoupling,
// TSKD/NSKD components, the gamma-weighted DKD objective, and the
// embedding-level cosine KD baseline. Every loss that feeds training comes
// with its exact analytic gradient with respect to the student quantity;
// finite differences are test-only oracles.

namespace dkd {

// Target/non-target decomposition of a probability distribution:
// p_target is the target-class probability, p_nontarget_total the aggregate
// mass of all other classes, and nontarget_dist the renormalized (K-1)-dim
// distribution over non-target classes.
struct DecoupledProbs {
  double p_target = 0.0;
  double p_nontarget_total = 0.0;
  Vec nontarget_dist;
  std::size_t target_index = 0;

  std::size_t num_classes() const { return nontarget_dist.size() + 1; }
};

enum class KdMode { none, cosine_embedding, conventional_kld, dkd };

// How the NSKD weight is chosen per sample: a fixed gamma, or the coupled
// weight (1 - p_tau^teacher) that makes DKD coincide with conventional KD.
enum class GammaMode { fixed, one_minus_teacher_target };

struct DkdConfig {
  double gamma = 2.0;
  double kd_weight = 1.0;
  double temperature = 1.0;  // 1 reproduces the distillation formulas exactly
  KdMode mode = KdMode::dkd;
  GammaMode gamma_mode = GammaMode::fixed;
  // When true the student-side KD logits include the scheduled additive
  // margin; default keeps KD on margin-free logits for both sides and the
  // margin only inside the classification loss.
  bool margin_in_kd = false;
};

struct AamConfig {
  double scale = 32.0;
  double margin_max = 0.2;
  std::size_t margin_warmup_steps = 0;
};

KdMode kd_mode_from_string(const std::string& s);
std::string to_string(KdMode mode);

// Scalar loss plus its gradient with respect to the student-side argument.
struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

// Split p into (p_target, p_nontarget_total, renormalized non-target dist).
// Throws on an out-of-range target, or when p_target carries the entire
// mass (the non-target distribution is then undefined).
DecoupledProbs decouple(const ProbDist& p, std::size_t target);

// Conventional label-level KD: KL(teacher || student).
double kd_conventional(const ProbDist& p_teacher, const ProbDist& p_student);

// Binary KL over (p_target, p_nontarget_total) of teacher vs student.
double tskd_loss(const DecoupledProbs& teacher, const DecoupledProbs& student);

// KL between the two renormalized non-target distributions. K = 2 has a
// single non-target class (point mass on both sides), defined as 0.
double nskd_loss(const DecoupledProbs& teacher, const DecoupledProbs& student);

// TSKD / NSKD / conventional KD computed from raw logits, with the exact
// gradient with respect to the student logits. Teacher logits are constants.
LossGrad tskd_loss_logits(std::span<const double> z_teacher,
                          std::span<const double> z_student,
                          std::size_t target, double temperature = 1.0);
LossGrad nskd_loss_logits(std::span<const double> z_teacher,
                          std::span<const double> z_student,
                          std::size_t target, double temperature = 1.0);
LossGrad kld_loss_logits(std::span<const double> z_teacher,
                         std::span<const double> z_student,
                         double temperature = 1.0);

// Decoupled KD objective: tskd + gamma * nskd. With
// gamma = (1 - p_target^teacher) this equals kd_conventional on the same
// logits, loss and gradient both.
LossGrad dkd_loss(std::span<const double> z_teacher,
                  std::span<const double> z_student, std::size_t target,
                  const DkdConfig& cfg);

// Embedding-level KD baseline: 1 - cos(e_teacher, e_student), gradient with
// respect to the student embedding. Zero vectors are a domain error.
LossGrad cosine_embedding_kd(std::span<const double> e_teacher,
                             std::span<const double> e_student);

// Additive-angular-margin logits: target entry scale*cos(theta + margin),
// others scale*cos. margin = 0 returns scale*cosines exactly. Cosines may
// exceed [-1, 1] by at most 1e-9 (clamped); beyond that is a domain error.
Logits aam_logits(std::span<const double> cosines, std::size_t target,
                  double scale, double margin);

// loss = -log_softmax(z)[target]; grad = softmax(z) - onehot(target).
LossGrad cross_entropy(std::span<const double> logits, std::size_t target);

// d(aam_logits entry)/d(cosine): scale everywhere except the margined
// target entry.
double aam_target_slope(double cosine, double scale, double margin,
                        bool is_target);

// Classification head used in training: AAM logits fed to cross-entropy,
// gradient with respect to the cosine inputs (diagonal chain through the
// margin transform).
LossGrad aam_cross_entropy(std::span<const double> cosines, std::size_t target,
                           double scale, double margin);

// 0 at step 0, linear ramp to margin_max at margin_warmup_steps, constant
// afterwards. warmup 0 means the margin is margin_max from the first step.
double margin_at_step(std::size_t step, const AamConfig& cfg);

}  // namespace dkd

#endif
