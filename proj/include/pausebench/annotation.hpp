// SPDX-License-Identifier: Apache-2.0
/**
 * @file   annotation.hpp
 * @brief  Annotator tracks, frame-wise majority-vote merging and corpus
 *         statistics.
 */
#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace pausebench {

inline constexpr const char *kTieRule = "BS>B>S>O";

struct AnnotationTrack {
  std::string recording_id;
  std::string annotator_id;
  FrameLabelSeq seq;
};

inline json to_json(const AnnotationTrack &t) {
  json j = to_json(t.seq);
  j["annotator"] = t.annotator_id;
  j["recording"] = t.recording_id;
  return j;
}

inline AnnotationTrack annotation_track_from_json(const json &j) {
  AnnotationTrack t;
  t.seq = label_seq_from_json(j);
  t.annotator_id = j.value("annotator", "");
  t.recording_id = j.value("recording", "");
  return t;
}

/// Per frame, the modal label; ties go to the higher code (BS > B > S > O).
inline FrameLabelSeq majority_vote(const std::vector<AnnotationTrack> &tracks) {
  if (tracks.size() < 2)
    throw std::invalid_argument("majority vote needs at least two tracks");
  const auto &first = tracks.front();
  for (const auto &t : tracks) {
    if (t.seq.size() != first.seq.size())
      throw std::invalid_argument(
          "track length mismatch: annotator " + t.annotator_id + " has " +
          std::to_string(t.seq.size()) + " frames, expected " +
          std::to_string(first.seq.size()));
    if (t.recording_id != first.recording_id)
      throw std::invalid_argument("tracks belong to different recordings");
  }
  std::vector<PauseType> out(first.seq.size());
  for (std::size_t f = 0; f < out.size(); ++f) {
    std::array<int, kNumPauseTypes> counts{};
    for (const auto &t : tracks)
      ++counts[static_cast<std::size_t>(code(t.seq[f]))];
    int best = 3;
    for (int c = 2; c >= 0; --c)
      if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)])
        best = c;
    out[f] = static_cast<PauseType>(best);
  }
  return FrameLabelSeq(std::move(out), first.seq.rate_hz());
}

/// Merged track document: label JSON plus merge metadata.
inline json merged_to_json(const FrameLabelSeq &merged) {
  json j = to_json(merged);
  j["merge"] = "majority";
  j["tie_rule"] = kTieRule;
  return j;
}

// ---------------------------------------------------------------------------
// Corpus statistics

struct SplitStats {
  std::array<int, 6> exertion_hist{}; ///< index 1..5
  std::array<int, kNumPauseTypes> event_counts{};
  std::array<std::vector<double>, kNumPauseTypes> durations_s{};
  int recordings = 0;
  double total_duration_s = 0.0;
};

struct CorpusReport {
  std::map<std::string, SplitStats> splits;
  std::vector<std::string> missing_labels;
  double histogram_bin_s = 0.2;
};

/**
 * Tallies exertion levels, per-type event counts and event durations per
 * split. split_of maps a subject to its split name; subjects absent from the
 * map (or an empty map) fall into "all".
 */
inline CorpusReport corpus_stats(const std::vector<RecordingMeta> &records,
                                 const std::map<std::string, FrameLabelSeq> &labels,
                                 const std::map<std::string, std::string> &split_of = {}) {
  CorpusReport rep;
  for (const auto &m : records) {
    auto it = split_of.find(m.subject_id);
    const std::string split = it == split_of.end() ? "all" : it->second;
    auto &s = rep.splits[split];
    ++s.recordings;
    s.total_duration_s += m.duration_s;
    ++s.exertion_hist[static_cast<std::size_t>(m.exertion_level)];
    auto lab = labels.find(m.id);
    if (lab == labels.end()) {
      rep.missing_labels.push_back(m.id);
      continue;
    }
    for (const auto &e : decode_events(lab->second)) {
      const auto k = static_cast<std::size_t>(code(e.type));
      ++s.event_counts[k];
      s.durations_s[k].push_back(static_cast<double>(e.length()) /
                                 lab->second.rate_hz());
    }
  }
  return rep;
}

inline json to_json(const CorpusReport &rep) {
  json splits = json::object();
  for (const auto &[name, s] : rep.splits) {
    json j;
    j["recordings"] = s.recordings;
    j["total_duration_s"] = s.total_duration_s;
    json hist = json::object();
    for (int l = 1; l <= 5; ++l)
      hist[std::to_string(l)] = s.exertion_hist[static_cast<std::size_t>(l)];
    j["exertion_hist"] = hist;
    json counts = json::object(), durs = json::object(), dhist = json::object();
    for (auto t : {PauseType::S, PauseType::B, PauseType::BS}) {
      const auto k = static_cast<std::size_t>(code(t));
      const std::string name_t(to_string(t));
      counts[name_t] = s.event_counts[k];
      durs[name_t] = s.durations_s[k];
      std::vector<int> h;
      for (double d : s.durations_s[k]) {
        const auto bin = static_cast<std::size_t>(d / rep.histogram_bin_s);
        if (h.size() <= bin)
          h.resize(bin + 1, 0);
        ++h[bin];
      }
      dhist[name_t] = h;
    }
    j["event_counts"] = counts;
    j["durations_s"] = durs;
    j["duration_hist"] = dhist;
    splits[name] = j;
  }
  return json{{"splits", splits},
              {"missing_labels", rep.missing_labels},
              {"duration_hist_bin_s", rep.histogram_bin_s}};
}

} // namespace pausebench
