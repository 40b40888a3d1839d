#ifndef DKD_DATA_HPP
#define DKD_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dkd/numerics.hpp"

// Synthetic speaker universe: Gaussian speaker prototypes in a latent
// space, utterances sampled with intra-speaker noise, and a fixed random
// linear map with tanh squashing into feature space. Everything is a pure
// function of the seeds, so datasets regenerate bit-identically.

namespace dkd {

struct SpeakerUniverse {
  std::size_t latent_dim = 0;
  std::size_t feature_dim = 0;
  Matrix prototypes;       // num_speakers x latent_dim
  Matrix feature_weights;  // feature_dim x latent_dim, N(0,1)/sqrt(latent_dim)
  double intra_speaker_std = 0.0;
  std::uint64_t seed = 0;

  std::size_t num_speakers() const { return prototypes.rows; }
  // tanh(feature_weights * v)
  Vec feature_map(std::span<const double> latent) const;
};

struct SpeakerDataset {
  Matrix features;                 // num_utterances x feature_dim
  std::vector<std::size_t> labels; // dense 0..K-1
  std::size_t num_speakers = 0;
  std::size_t utterances_per_speaker = 0;
  // Universe speaker ids backing each dense label, for disjointness checks.
  std::vector<std::size_t> source_speaker_ids;

  std::size_t size() const { return features.rows; }
};

struct Trial {
  std::size_t enroll = 0;
  std::size_t test = 0;
  bool is_target = false;
};

struct TrialList {
  std::vector<Trial> trials;
};

SpeakerUniverse build_universe(std::size_t num_speakers, std::size_t latent_dim,
                               std::size_t feature_dim, double intra_std,
                               std::uint64_t seed);

// Each utterance is feature_map(prototype + N(0, intra_std^2 I)). Labels are
// re-indexed densely in the order of speaker_ids.
SpeakerDataset sample_dataset(const SpeakerUniverse& universe,
                              const std::vector<std::size_t>& speaker_ids,
                              std::size_t utterances_per_speaker,
                              std::uint64_t seed);

// Target pairs are drawn uniformly among same-speaker unordered pairs
// without replacement until exhausted, then with replacement. Non-target
// pairs are drawn uniformly among cross-speaker pairs, de-duplicated on a
// best-effort basis with the same fallback. Targets precede non-targets in
// the returned list.
TrialList make_trials(const SpeakerDataset& eval_dataset,
                      std::size_t num_target, std::size_t num_nontarget,
                      std::uint64_t seed);

// Line-oriented text format: label<TAB>v1,v2,...,vD with 17-significant-
// digit floats (round-trip exact).
void save_dataset(const SpeakerDataset& ds, const std::filesystem::path& path);
SpeakerDataset load_dataset(const std::filesystem::path& path);

// enroll_id<TAB>test_id<TAB>{0|1}
void save_trials(const TrialList& trials, const std::filesystem::path& path);
TrialList load_trials(const std::filesystem::path& path);

}  // namespace dkd

#endif
