#ifndef DKD_EVAL_HPP
#define DKD_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dkd/data.hpp"
#include "dkd/model.hpp"
#include "dkd/numerics.hpp"

// Verification scoring and metrics. Conventions, fixed so fixtures are
// bit-exact:
//   - accept rule: score >= threshold
//   - candidate thresholds: (min - 1), each sorted unique score, the
//     midpoints between adjacent unique scores, (max + 1)
//   - EER: first FAR/FRR sign change along the ascending sweep, linearly
//     interpolated in threshold-index space
//   - minDCF: minimum over the same candidates, ties toward the lower
//     threshold

namespace dkd {

struct ScoredTrials {
  Vec scores;
  std::vector<std::uint8_t> labels;  // 1 = target

  std::size_t size() const { return scores.size(); }
};

struct EvalReport {
  double eer = 0.0;
  double min_dcf = 0.0;
  double threshold_at_eer = 0.0;
  double threshold_at_min_dcf = 0.0;
  std::size_t num_target_trials = 0;
  std::size_t num_nontarget_trials = 0;
};

// Cosine between the two utterances' embeddings, one score per trial.
ScoredTrials score_trials(const MlpParams& params, const SpeakerDataset& ds,
                          const TrialList& trials);

// Returns (eer, threshold). Needs at least one trial of each label.
std::pair<double, double> compute_eer(const ScoredTrials& st);

// Returns (min_dcf, threshold). DCF(t) = c_miss*p_target*P_miss(t)
// + c_fa*(1-p_target)*P_fa(t), normalized by min(c_miss*p_target,
// c_fa*(1-p_target)).
std::pair<double, double> compute_min_dcf(const ScoredTrials& st,
                                          double p_target, double c_fa,
                                          double c_miss);

// Both metrics with the operating parameters used throughout this project
// (P_target = 0.01, C_fa = C_miss = 1).
EvalReport evaluate(const ScoredTrials& st);

void save_report(const EvalReport& report, const std::filesystem::path& path);
// enroll_id<TAB>test_id<TAB>score
void save_scores(const TrialList& trials, const ScoredTrials& st,
                 const std::filesystem::path& path);

}  // namespace dkd

#endif
