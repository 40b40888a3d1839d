#include "dkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dkd/errors.hpp"

namespace dkd {

namespace {

// Sub-stream labels within build_universe's seed.
constexpr std::uint64_t kPrototypeStream = 1;
constexpr std::uint64_t kFeatureMapStream = 2;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Vec SpeakerUniverse::feature_map(std::span<const double> latent) const {
  Vec out = matvec(feature_weights, latent);
  for (double& v : out) {
    v = std::tanh(v);
  }
  return out;
}

SpeakerUniverse build_universe(std::size_t num_speakers, std::size_t latent_dim,
                               std::size_t feature_dim, double intra_std,
                               std::uint64_t seed) {
  if (num_speakers == 0 || latent_dim == 0 || feature_dim == 0) {
    throw std::invalid_argument("build_universe: dims must be positive");
  }
  if (!(intra_std > 0.0)) {
    throw std::invalid_argument(
        "build_universe: intra_std must be > 0 (0 makes all utterances of a "
        "speaker identical)");
  }
  SpeakerUniverse u;
  u.latent_dim = latent_dim;
  u.feature_dim = feature_dim;
  u.intra_speaker_std = intra_std;
  u.seed = seed;
  RngStream root(seed);

  RngStream proto_rng = root.split(kPrototypeStream);
  u.prototypes = Matrix(num_speakers, latent_dim);
  for (double& v : u.prototypes.data) {
    v = proto_rng.normal();
  }

  RngStream feat_rng = root.split(kFeatureMapStream);
  u.feature_weights = Matrix(feature_dim, latent_dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (double& v : u.feature_weights.data) {
    v = feat_rng.normal() * scale;
  }
  return u;
}

SpeakerDataset sample_dataset(const SpeakerUniverse& universe,
                              const std::vector<std::size_t>& speaker_ids,
                              std::size_t utterances_per_speaker,
                              std::uint64_t seed) {
  if (speaker_ids.empty() || utterances_per_speaker == 0) {
    throw std::invalid_argument("sample_dataset: empty request");
  }
  std::set<std::size_t> unique(speaker_ids.begin(), speaker_ids.end());
  if (unique.size() != speaker_ids.size()) {
    throw std::invalid_argument("sample_dataset: duplicate speaker ids");
  }
  for (std::size_t id : speaker_ids) {
    if (id >= universe.num_speakers()) {
      throw std::invalid_argument("sample_dataset: speaker id out of range");
    }
  }
  SpeakerDataset ds;
  ds.num_speakers = speaker_ids.size();
  ds.utterances_per_speaker = utterances_per_speaker;
  ds.source_speaker_ids = speaker_ids;
  std::size_t total = speaker_ids.size() * utterances_per_speaker;
  ds.features = Matrix(total, universe.feature_dim);
  ds.labels.resize(total);

  RngStream rng(seed);
  Vec latent(universe.latent_dim);
  std::size_t row = 0;
  for (std::size_t k = 0; k < speaker_ids.size(); ++k) {
    const double* proto = universe.prototypes.row(speaker_ids[k]);
    for (std::size_t utt = 0; utt < utterances_per_speaker; ++utt) {
      for (std::size_t d = 0; d < universe.latent_dim; ++d) {
        latent[d] = proto[d] + universe.intra_speaker_std * rng.normal();
      }
      Vec feat = universe.feature_map(latent);
      std::copy(feat.begin(), feat.end(), ds.features.row(row));
      ds.labels[row] = k;
      ++row;
    }
  }
  return ds;
}

TrialList make_trials(const SpeakerDataset& ds, std::size_t num_target,
                      std::size_t num_nontarget, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_speaker(ds.num_speakers);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_speaker[ds.labels[i]].push_back(i);
  }
  if (num_target > 0) {
    for (const auto& utts : by_speaker) {
      if (utts.size() < 2) {
        throw std::invalid_argument(
            "make_trials: target trials require >= 2 utterances per speaker");
      }
    }
  }
  RngStream rng(seed);
  TrialList out;
  out.trials.reserve(num_target + num_nontarget);

  // Same-speaker pairs, enumerated in a fixed order then shuffled.
  std::vector<std::pair<std::size_t, std::size_t>> same_pairs;
  for (const auto& utts : by_speaker) {
    for (std::size_t a = 0; a < utts.size(); ++a) {
      for (std::size_t b = a + 1; b < utts.size(); ++b) {
        same_pairs.emplace_back(utts[a], utts[b]);
      }
    }
  }
  if (num_target > 0 && same_pairs.empty()) {
    throw std::invalid_argument("make_trials: no same-speaker pairs available");
  }
  rng.shuffle(same_pairs);
  for (std::size_t i = 0; i < num_target; ++i) {
    auto pr = i < same_pairs.size()
                  ? same_pairs[i]
                  : same_pairs[rng.below(same_pairs.size())];  // exhausted:
                                                               // with replacement
    out.trials.push_back({pr.first, pr.second, true});
  }

  // Cross-speaker pairs by rejection; de-duplicate while attempts allow.
  if (num_nontarget > 0) {
    if (ds.num_speakers < 2) {
      throw std::invalid_argument(
          "make_trials: non-target trials require >= 2 speakers");
    }
    std::unordered_set<std::uint64_t> used;
    std::size_t produced = 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 50 * num_nontarget + 1000;
    while (produced < num_nontarget) {
      std::size_t a = static_cast<std::size_t>(rng.below(ds.size()));
      std::size_t b = static_cast<std::size_t>(rng.below(ds.size()));
      ++attempts;
      if (ds.labels[a] == ds.labels[b]) continue;
      std::uint64_t key = static_cast<std::uint64_t>(std::min(a, b)) << 32 |
                          static_cast<std::uint64_t>(std::max(a, b));
      if (attempts <= max_attempts && !used.insert(key).second) continue;
      out.trials.push_back({a, b, false});
      ++produced;
    }
  }
  return out;
}

void save_dataset(const SpeakerDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open dataset for writing: " + path.string());
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.labels[i] << '\t';
    const double* row = ds.features.row(i);
    for (std::size_t d = 0; d < ds.features.cols; ++d) {
      if (d) os << ',';
      os << fmt17(row[d]);
    }
    os << '\n';
  }
  if (!os) {
    throw IoError("failed writing dataset: " + path.string());
  }
}

SpeakerDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open dataset: " + path.string());
  }
  std::vector<std::size_t> labels;
  std::vector<Vec> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("dataset line " + std::to_string(lineno) +
                      ": missing tab separator");
    }
    std::size_t label = 0;
    try {
      label = std::stoull(line.substr(0, tab));
    } catch (const std::exception&) {
      throw DataError("dataset line " + std::to_string(lineno) + ": bad label");
    }
    Vec feat;
    std::stringstream ss(line.substr(tab + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        feat.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError("dataset line " + std::to_string(lineno) +
                        ": bad feature value '" + tok + "'");
      }
    }
    if (!rows.empty() && feat.size() != rows.front().size()) {
      throw DataError("dataset line " + std::to_string(lineno) +
                      ": inconsistent feature dimension");
    }
    labels.push_back(label);
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) {
    throw DataError("dataset is empty: " + path.string());
  }
  std::size_t num_speakers = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(num_speakers, 0);
  for (std::size_t l : labels) counts[l]++;
  for (std::size_t c : counts) {
    if (c == 0 || c != counts[0]) {
      throw DataError("dataset labels not dense/even: " + path.string());
    }
  }
  SpeakerDataset ds;
  ds.num_speakers = num_speakers;
  ds.utterances_per_speaker = counts[0];
  ds.features = Matrix(rows.size(), rows.front().size());
  ds.labels = std::move(labels);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), ds.features.row(i));
  }
  return ds;
}

void save_trials(const TrialList& trials, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open trial list for writing: " + path.string());
  }
  for (const Trial& t : trials.trials) {
    os << t.enroll << '\t' << t.test << '\t' << (t.is_target ? 1 : 0) << '\n';
  }
  if (!os) {
    throw IoError("failed writing trial list: " + path.string());
  }
}

TrialList load_trials(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open trial list: " + path.string());
  }
  TrialList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::size_t enroll, test;
    int flag;
    if (!(ss >> enroll >> test >> flag) || (flag != 0 && flag != 1)) {
      throw DataError("trial list line " + std::to_string(lineno) +
                      ": expected 'enroll<TAB>test<TAB>{0|1}'");
    }
    out.trials.push_back({enroll, test, flag == 1});
  }
  return out;
}

}  // namespace dkd
