// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataprep.hpp
 * @brief  Sliding-window segmentation, subject-disjoint duration-balanced
 *         splits and a synthetic corpus generator.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "features.hpp"
#include "wav.hpp"

namespace pausebench {

// ---------------------------------------------------------------------------
// Windows

struct Window {
  std::string recording_id;
  double start_s = 0.0;
  double length_s = kWindowSeconds;
  int frame_begin = 0; ///< inclusive
  int frame_end = 0;   ///< exclusive

  bool operator==(const Window &) const = default;
};

inline json to_json(const Window &w) {
  return json{{"recording_id", w.recording_id}, {"start_s", w.start_s},
              {"length_s", w.length_s},         {"frame_begin", w.frame_begin},
              {"frame_end", w.frame_end}};
}

/// 15 s windows at starts 0, stride, 2*stride, ... that fit the recording.
inline std::vector<Window> segment_windows(const RecordingMeta &meta,
                                           double stride_s,
                                           double window_s = kWindowSeconds) {
  if (!(stride_s > 0.0))
    throw std::invalid_argument("stride must be positive");
  const int total = meta.frames();
  const int win = static_cast<int>(std::lround(window_s * kFrameRateHz));
  const int stride = std::max(1, static_cast<int>(std::lround(stride_s * kFrameRateHz)));
  std::vector<Window> out;
  if (total < win) {
    std::clog << "warning: recording " << meta.id << " is shorter than "
              << window_s << " s and yields no windows\n";
    return out;
  }
  for (int start = 0; start + win <= total; start += stride)
    out.push_back({meta.id, static_cast<double>(start) / kFrameRateHz, window_s,
                   start, start + win});
  return out;
}

// ---------------------------------------------------------------------------
// Subject-disjoint splits

enum class Split { Train = 0, Val = 1, Test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
  case Split::Train:
    return "train";
  case Split::Val:
    return "val";
  case Split::Test:
    return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  for (auto v : {Split::Train, Split::Val, Split::Test})
    if (to_string(v) == s)
      return v;
  throw std::invalid_argument("unknown split: " + std::string(s));
}

struct SplitSpec {
  std::array<double, 3> fractions{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
  std::map<std::string, Split> assignment; ///< subject -> split
  std::array<double, 3> duration_share{};  ///< achieved duration fractions
  bool balanced = true; ///< every share within 5 points of its target

  Split of(const std::string &subject) const {
    auto it = assignment.find(subject);
    if (it == assignment.end())
      throw std::out_of_range("subject " + subject + " has no split");
    return it->second;
  }
};

inline json to_json(const SplitSpec &s) {
  json a = json::object();
  for (const auto &[subj, sp] : s.assignment)
    a[subj] = std::string(to_string(sp));
  return json{{"fractions", s.fractions},
              {"seed", s.seed},
              {"assignment", a},
              {"duration_share", s.duration_share},
              {"balanced", s.balanced}};
}

inline SplitSpec split_spec_from_json(const json &j) {
  SplitSpec s;
  s.fractions = j.at("fractions").get<std::array<double, 3>>();
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto &[subj, sp] : j.at("assignment").items())
    s.assignment[subj] = split_from_string(sp.get<std::string>());
  if (j.contains("duration_share"))
    s.duration_share = j.at("duration_share").get<std::array<double, 3>>();
  s.balanced = j.value("balanced", true);
  return s;
}

/**
 * Greedy largest-subject-first assignment: each subject (in decreasing
 * total duration, seed-shuffled among equal durations) goes to the split
 * with the largest remaining duration deficit. Splits still empty when only
 * that many subjects remain are filled first.
 */
inline SplitSpec split_by_subject(const std::vector<RecordingMeta> &records,
                                  std::array<double, 3> fractions,
                                  std::uint64_t seed) {
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0; }))
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  std::map<std::string, double> dur;
  for (const auto &r : records)
    dur[r.subject_id] += r.duration_s;
  if (dur.size() < 3)
    throw std::invalid_argument("need at least 3 subjects to form 3 splits, got " +
                                std::to_string(dur.size()));

  std::vector<std::pair<std::string, double>> subjects(dur.begin(), dur.end());
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  std::stable_sort(subjects.begin(), subjects.end(),
                   [](auto &a, auto &b) { return a.second > b.second; });

  double total = 0.0;
  for (auto &s : subjects)
    total += s.second;
  SplitSpec spec;
  spec.fractions = fractions;
  spec.seed = seed;
  std::array<double, 3> filled{};
  std::array<int, 3> members{};
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const std::size_t remaining = subjects.size() - i;
    const int empty = static_cast<int>(std::count(members.begin(), members.end(), 0));
    int pick = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      if (static_cast<std::size_t>(empty) >= remaining && members[static_cast<std::size_t>(k)] > 0)
        continue;
      const double deficit = fractions[static_cast<std::size_t>(k)] * total -
                             filled[static_cast<std::size_t>(k)];
      if (deficit > best) {
        best = deficit;
        pick = k;
      }
    }
    filled[static_cast<std::size_t>(pick)] += subjects[i].second;
    ++members[static_cast<std::size_t>(pick)];
    spec.assignment[subjects[i].first] = static_cast<Split>(pick);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    spec.duration_share[k] = filled[k] / total;
    if (std::abs(spec.duration_share[k] - fractions[k]) > 0.05)
      spec.balanced = false;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Synthetic recordings

struct SynthConfig {
  std::string recording_id = "rec000";
  std::string subject_id = "subj000";
  int exertion_level = 3;
  SpeechTask task = SpeechTask::Spontaneous;
  int frames = kWindowFrames;
  /// Expected events per minute for S, B, BS.
  std::array<double, 3> density_per_min{6.0, 4.0, 4.0};
  /// Event duration ranges in seconds for S, B, BS.
  std::array<std::array<double, 2>, 3> duration_range_s{
      {{0.2, 0.8}, {0.2, 0.6}, {0.5, 2.0}}};
  int min_gap_frames = 10;
  double noise = 1.0;
  double margin = 10.0; ///< class mean separation in units of noise
  bool with_embedding = false;
  FeatureKind embedding_kind = FeatureKind::EMB4;
  std::uint64_t seed = 0;
};

struct SynthRecording {
  FeatureMatrix features;
  FrameLabelSeq labels;
  RecordingMeta meta;
  std::optional<FeatureMatrix> embedding;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Column j of the class-conditional mean pattern: column 0 marks any pause,
/// columns 1..3 mark the individual types.
inline Matrix synth_features(const std::vector<PauseType> &labels, int dims,
                             double noise, double margin, std::mt19937_64 &rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(labels.size()), dims);
  const double level = margin * noise;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int c = code(labels[t]);
    for (int j = 0; j < dims; ++j) {
      double mean = 0.0;
      if (j == 0 && c != 0)
        mean = level;
      else if (j >= 1 && j <= 3 && j == c)
        mean = level;
      x(static_cast<Eigen::Index>(t), j) = mean + noise * gauss(rng);
    }
  }
  return x;
}

} // namespace detail

inline SynthRecording synth_generate(const SynthConfig &cfg) {
  if (cfg.frames < 50)
    throw std::invalid_argument("synthetic recordings need at least 50 frames");
  for (double d : cfg.density_per_min)
    if (!(d >= 0.0))
      throw std::invalid_argument("event densities must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double minutes = cfg.frames / (60.0 * kFrameRateHz);
  struct Pending {
    PauseType type;
    int length;
  };
  std::vector<Pending> pending;
  for (int k = 0; k < 3; ++k) {
    const double expected = cfg.density_per_min[static_cast<std::size_t>(k)] * minutes;
    const int n = static_cast<int>(std::floor(expected + unit(rng)));
    const auto &range = cfg.duration_range_s[static_cast<std::size_t>(k)];
    const int lo = static_cast<int>(std::lround(range[0] * kFrameRateHz));
    const int hi = static_cast<int>(std::lround(range[1] * kFrameRateHz));
    std::uniform_int_distribution<int> len(lo, hi);
    for (int i = 0; i < n; ++i)
      pending.push_back({static_cast<PauseType>(k + 1), len(rng)});
  }
  std::shuffle(pending.begin(), pending.end(), rng);

  long required = 0;
  for (const auto &p : pending)
    required += p.length;
  if (!pending.empty())
    required += static_cast<long>(pending.size() - 1) * cfg.min_gap_frames;
  if (required > cfg.frames)
    throw std::invalid_argument("infeasible event density: " +
                                std::to_string(required) + " frames of events and gaps in " +
                                std::to_string(cfg.frames) + " frames");

  const long slack = cfg.frames - required;
  std::uniform_int_distribution<long> cut(0, slack);
  std::vector<long> cuts(pending.size());
  for (auto &c : cuts)
    c = cut(rng);
  std::sort(cuts.begin(), cuts.end());

  std::vector<PauseEvent> events;
  long cursor = 0, prev_cut = 0;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    cursor += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    const int onset = static_cast<int>(cursor);
    events.push_back({onset, onset + pending[i].length, pending[i].type});
    cursor += pending[i].length + cfg.min_gap_frames;
  }

  SynthRecording out{
      FeatureMatrix(Matrix::Zero(1, kAcousticDims), FeatureKind::MFB),
      encode_labels(events, cfg.frames), RecordingMeta{}, std::nullopt};
  out.features = FeatureMatrix(
      detail::synth_features(out.labels.labels(), kAcousticDims, cfg.noise,
                             cfg.margin, rng),
      FeatureKind::MFB);
  if (cfg.with_embedding)
    out.embedding = FeatureMatrix(
        detail::synth_features(out.labels.labels(), kEmbeddingDims, cfg.noise,
                               cfg.margin, rng),
        cfg.embedding_kind);
  out.meta.id = cfg.recording_id;
  out.meta.subject_id = cfg.subject_id;
  out.meta.duration_s = static_cast<double>(cfg.frames) / kFrameRateHz;
  out.meta.exertion_level = cfg.exertion_level;
  out.meta.task = cfg.task;
  out.meta.validate();
  return out;
}

/// 16 kHz audio whose envelope follows the labels: voiced noise for O, near
/// silence for S, breath-like noise for B and BS.
inline PcmAudio synth_audio(const FrameLabelSeq &labels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int spf = kAudioRateHz / kFrameRateHz;
  PcmAudio a;
  a.rate_hz = kAudioRateHz;
  a.samples.resize(labels.size() * static_cast<std::size_t>(spf));
  double phase = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    for (int i = 0; i < spf; ++i) {
      const std::size_t n = t * static_cast<std::size_t>(spf) + static_cast<std::size_t>(i);
      double v = 0.0;
      switch (labels[t]) {
      case PauseType::O:
        phase += 2.0 * std::numbers::pi * 180.0 / kAudioRateHz;
        v = 0.3 * std::sin(phase) + 0.1 * gauss(rng);
        break;
      case PauseType::S:
        v = 0.002 * gauss(rng);
        break;
      case PauseType::B:
        v = 0.05 * gauss(rng);
        break;
      case PauseType::BS:
        v = 0.02 * gauss(rng);
        break;
      }
      a.samples[n] = std::clamp(v, -0.99, 0.99);
    }
  }
  return a;
}

struct SynthCorpusConfig {
  int recordings = 60;
  int subjects = 20;
  std::array<double, 2> duration_range_s{16.0, 24.0};
  std::array<double, 3> density_per_min{6.0, 4.0, 4.0};
  double noise = 1.0;
  double margin = 10.0;
  bool breathing_follows_exertion = true;
  std::vector<FeatureKind> embeddings; ///< embedding kinds to emit
  bool with_audio = false;
  std::uint64_t seed = 0;
};

inline json to_json(const SynthCorpusConfig &c) {
  std::vector<std::string> embs;
  for (auto k : c.embeddings)
    embs.emplace_back(to_string(k));
  return json{{"recordings", c.recordings},
              {"subjects", c.subjects},
              {"duration_range_s", c.duration_range_s},
              {"density_per_min", c.density_per_min},
              {"noise", c.noise},
              {"margin", c.margin},
              {"breathing_follows_exertion", c.breathing_follows_exertion},
              {"embeddings", embs},
              {"with_audio", c.with_audio},
              {"seed", c.seed}};
}

/**
 * Writes features (mfb), optional embeddings and audio, labels and a
 * manifest under dir. Recording i belongs to subject i mod subjects and uses
 * a seed derived from (seed, i).
 */
inline DatasetManifest write_synth_corpus(const std::filesystem::path &dir,
                                          const SynthCorpusConfig &cfg) {
  if (cfg.recordings < 1 || cfg.subjects < 1)
    throw std::invalid_argument("synthetic corpus needs recordings and subjects");
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.root = dir;

  std::mt19937_64 subject_rng(detail::splitmix64(cfg.seed));
  std::uniform_int_distribution<int> level(1, 5);
  std::vector<int> subject_level(static_cast<std::size_t>(cfg.subjects));
  for (auto &l : subject_level)
    l = level(subject_rng);

  for (int i = 0; i < cfg.recordings; ++i) {
    const std::uint64_t rseed =
        detail::splitmix64(cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(i) + 1));
    std::mt19937_64 rng(rseed);
    std::uniform_real_distribution<double> dur(cfg.duration_range_s[0],
                                               cfg.duration_range_s[1]);
    char id[32], subj[32];
    std::snprintf(id, sizeof id, "rec%03d", i);
    std::snprintf(subj, sizeof subj, "subj%03d", i % cfg.subjects);

    SynthConfig sc;
    sc.recording_id = id;
    sc.subject_id = subj;
    sc.exertion_level = subject_level[static_cast<std::size_t>(i % cfg.subjects)];
    sc.task = (i % 2 == 0) ? SpeechTask::Spontaneous : SpeechTask::Reading;
    sc.frames = static_cast<int>(std::lround(dur(rng) * kFrameRateHz));
    sc.density_per_min = cfg.density_per_min;
    if (cfg.breathing_follows_exertion)
      sc.density_per_min[1] *= sc.exertion_level / 3.0;
    sc.noise = cfg.noise;
    sc.margin = cfg.margin;
    sc.seed = rseed;
    SynthRecording rec = synth_generate(sc);

    ManifestEntry entry;
    entry.meta = rec.meta;
    entry.labels = std::string("labels/") + id + ".json";
    save_labels(dir / entry.labels, rec.labels);
    entry.matrices["mfb"] = std::string("features/") + id + ".mfb.f32";
    write_matrix(dir / entry.matrices["mfb"], rec.features);
    for (auto kind : cfg.embeddings) {
      SynthConfig ec = sc;
      ec.with_embedding = true;
      ec.embedding_kind = kind;
      SynthRecording with_emb = synth_generate(ec);
      const std::string key(to_string(kind));
      entry.matrices[key] = "features/" + std::string(id) + "." + key + ".f32";
      write_matrix(dir / entry.matrices[key], *with_emb.embedding);
    }
    if (cfg.with_audio) {
      entry.audio = std::string("audio/") + id + ".wav";
      write_wav(dir / entry.audio, synth_audio(rec.labels, rseed ^ 0xa0d10ULL));
    }
    manifest.records.push_back(std::move(entry));
  }
  json doc = to_json(manifest);
  doc["synth_config"] = to_json(cfg);
  write_json_file(dir / "manifest.json", doc, 2);
  return manifest;
}

} // namespace pausebench
