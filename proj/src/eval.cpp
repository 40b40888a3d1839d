#include "dkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "dkd/errors.hpp"

namespace dkd {

ScoredTrials score_trials(const MlpParams& params, const SpeakerDataset& ds,
                          const TrialList& trials) {
  for (const Trial& t : trials.trials) {
    if (t.enroll >= ds.size() || t.test >= ds.size()) {
      throw DataError("score_trials: trial references utterance out of range");
    }
  }
  // Embed every utterance once; trials reuse the cache.
  std::vector<Vec> embeddings(ds.size());
  std::vector<double> norms(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ForwardTrace trace;
    try {
      trace = forward(params, std::span<const double>(ds.features.row(i),
                                                      ds.features.cols));
    } catch (const std::domain_error&) {
      throw DataError("score_trials: zero embedding for utterance " +
                      std::to_string(i));
    }
    norms[i] = trace.embedding_norm;
    embeddings[i] = std::move(trace.embedding);
  }
  ScoredTrials st;
  st.scores.reserve(trials.trials.size());
  st.labels.reserve(trials.trials.size());
  for (const Trial& t : trials.trials) {
    double score =
        dot(embeddings[t.enroll], embeddings[t.test]) / (norms[t.enroll] * norms[t.test]);
    st.scores.push_back(score);
    st.labels.push_back(t.is_target ? 1 : 0);
  }
  return st;
}

namespace {

struct LabelCounts {
  std::size_t targets = 0;
  std::size_t nontargets = 0;
};

LabelCounts count_labels(const ScoredTrials& st) {
  if (st.scores.size() != st.labels.size() || st.scores.empty()) {
    throw std::invalid_argument("metrics: empty or inconsistent trials");
  }
  LabelCounts c;
  for (std::uint8_t l : st.labels) {
    if (l) ++c.targets; else ++c.nontargets;
  }
  if (c.targets == 0 || c.nontargets == 0) {
    throw std::invalid_argument(
        "metrics: need at least one target and one non-target trial");
  }
  return c;
}

Vec candidate_thresholds(const Vec& scores) {
  Vec sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  Vec cands;
  cands.reserve(2 * sorted.size() + 2);
  cands.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cands.push_back(sorted[i]);
    if (i + 1 < sorted.size()) {
      cands.push_back(sorted[i] + (sorted[i + 1] - sorted[i]) / 2.0);
    }
  }
  cands.push_back(sorted.back() + 1.0);
  return cands;
}

// (P_fa, P_miss) at every candidate threshold via sorted per-class scores.
struct OperatingPoints {
  Vec thresholds;
  Vec far;  // P_fa
  Vec frr;  // P_miss
};

OperatingPoints sweep(const ScoredTrials& st) {
  LabelCounts counts = count_labels(st);
  Vec target_scores, nontarget_scores;
  target_scores.reserve(counts.targets);
  nontarget_scores.reserve(counts.nontargets);
  for (std::size_t i = 0; i < st.size(); ++i) {
    (st.labels[i] ? target_scores : nontarget_scores).push_back(st.scores[i]);
  }
  std::sort(target_scores.begin(), target_scores.end());
  std::sort(nontarget_scores.begin(), nontarget_scores.end());

  OperatingPoints op;
  op.thresholds = candidate_thresholds(st.scores);
  op.far.resize(op.thresholds.size());
  op.frr.resize(op.thresholds.size());
  for (std::size_t i = 0; i < op.thresholds.size(); ++i) {
    double th = op.thresholds[i];
    // accepted iff score >= th
    std::size_t nt_accepted =
        nontarget_scores.end() -
        std::lower_bound(nontarget_scores.begin(), nontarget_scores.end(), th);
    std::size_t t_rejected =
        std::lower_bound(target_scores.begin(), target_scores.end(), th) -
        target_scores.begin();
    op.far[i] = static_cast<double>(nt_accepted) /
                static_cast<double>(counts.nontargets);
    op.frr[i] = static_cast<double>(t_rejected) /
                static_cast<double>(counts.targets);
  }
  return op;
}

}  // namespace

std::pair<double, double> compute_eer(const ScoredTrials& st) {
  OperatingPoints op = sweep(st);
  // d = FAR - FRR is non-increasing: 1 at the low sentinel, -1 at the high
  // one, so a sign change always exists.
  for (std::size_t i = 0; i + 1 < op.thresholds.size(); ++i) {
    double d0 = op.far[i] - op.frr[i];
    double d1 = op.far[i + 1] - op.frr[i + 1];
    if (d0 >= 0.0 && d1 <= 0.0) {
      double t = (d0 == d1) ? 0.0 : d0 / (d0 - d1);
      double eer = op.far[i] + t * (op.far[i + 1] - op.far[i]);
      double threshold =
          op.thresholds[i] + t * (op.thresholds[i + 1] - op.thresholds[i]);
      if (eer > 0.5) {
        std::cerr << "warning: EER " << eer
                  << " exceeds 0.5 (scores anti-separate the labels)\n";
      }
      return {eer, threshold};
    }
  }
  throw std::logic_error("compute_eer: no FAR/FRR crossing found");
}

std::pair<double, double> compute_min_dcf(const ScoredTrials& st,
                                          double p_target, double c_fa,
                                          double c_miss) {
  if (!(p_target > 0.0) || !(p_target < 1.0)) {
    throw std::invalid_argument("compute_min_dcf: p_target must be in (0,1)");
  }
  if (!(c_fa > 0.0) || !(c_miss > 0.0)) {
    throw std::invalid_argument("compute_min_dcf: costs must be > 0");
  }
  OperatingPoints op = sweep(st);
  double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  double best = std::numeric_limits<double>::infinity();
  double best_threshold = op.thresholds.front();
  for (std::size_t i = 0; i < op.thresholds.size(); ++i) {
    double cost =
        (c_miss * p_target * op.frr[i] + c_fa * (1.0 - p_target) * op.far[i]) /
        norm;
    if (cost < best) {  // strict: ties keep the lower threshold
      best = cost;
      best_threshold = op.thresholds[i];
    }
  }
  return {best, best_threshold};
}

EvalReport evaluate(const ScoredTrials& st) {
  EvalReport r;
  LabelCounts counts = count_labels(st);
  r.num_target_trials = counts.targets;
  r.num_nontarget_trials = counts.nontargets;
  std::tie(r.eer, r.threshold_at_eer) = compute_eer(st);
  std::tie(r.min_dcf, r.threshold_at_min_dcf) =
      compute_min_dcf(st, 0.01, 1.0, 1.0);
  return r;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open report for writing: " + path.string());
  }
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "eer\t%.17g\nmin_dcf\t%.17g\nthreshold_at_eer\t%.17g\n"
                "num_target_trials\t%zu\nnum_nontarget_trials\t%zu\n",
                report.eer, report.min_dcf, report.threshold_at_eer,
                report.num_target_trials, report.num_nontarget_trials);
  os << buf;
  if (!os) {
    throw IoError("failed writing report: " + path.string());
  }
}

void save_scores(const TrialList& trials, const ScoredTrials& st,
                 const std::filesystem::path& path) {
  if (trials.trials.size() != st.size()) {
    throw std::invalid_argument("save_scores: trial/score count mismatch");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open scores for writing: " + path.string());
  }
  char buf[128];
  for (std::size_t i = 0; i < st.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%zu\t%.17g\n", trials.trials[i].enroll,
                  trials.trials[i].test, st.scores[i]);
    os << buf;
  }
  if (!os) {
    throw IoError("failed writing scores: " + path.string());
  }
}

}  // namespace dkd
