// SPDX-License-Identifier: Apache-2.0
/**
 * @file   core.hpp
 * @brief  Frame label types, event rasterization and extraction, and the
 *         dataset manifest.
 *
 * Labels live on a 50 Hz frame grid. A pause event is a maximal run of one
 * non-O label; a change of label inside a non-zero run starts a new event.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pausebench {

using json = nlohmann::json;

inline constexpr int kFrameRateHz = 50;
inline constexpr int kWindowFrames = 750;
inline constexpr double kWindowSeconds = 15.0;
inline constexpr int kNumPauseTypes = 4;

enum class PauseType : std::uint8_t { O = 0, S = 1, B = 2, BS = 3 };

inline constexpr int code(PauseType t) { return static_cast<int>(t); }

inline PauseType pause_type_from_code(int c) {
  if (c < 0 || c > 3)
    throw std::out_of_range("pause type code out of range: " +
                            std::to_string(c));
  return static_cast<PauseType>(c);
}

inline std::string_view to_string(PauseType t) {
  switch (t) {
  case PauseType::O:
    return "O";
  case PauseType::S:
    return "S";
  case PauseType::B:
    return "B";
  case PauseType::BS:
    return "BS";
  }
  return "?";
}

inline PauseType pause_type_from_string(std::string_view s) {
  if (s == "O")
    return PauseType::O;
  if (s == "S")
    return PauseType::S;
  if (s == "B")
    return PauseType::B;
  if (s == "BS")
    return PauseType::BS;
  throw std::invalid_argument("unknown pause type: " + std::string(s));
}

/// Per-frame pause labels. Immutable after construction.
class FrameLabelSeq {
public:
  FrameLabelSeq() = default;

  explicit FrameLabelSeq(std::vector<PauseType> labels,
                         int rate_hz = kFrameRateHz)
      : labels_(std::move(labels)), rate_hz_(rate_hz) {
    if (labels_.empty())
      throw std::invalid_argument("label sequence must be non-empty");
    if (rate_hz_ <= 0)
      throw std::invalid_argument("label rate must be positive");
  }

  static FrameLabelSeq from_codes(const std::vector<int> &codes,
                                  int rate_hz = kFrameRateHz) {
    std::vector<PauseType> out;
    out.reserve(codes.size());
    for (int c : codes)
      out.push_back(pause_type_from_code(c));
    return FrameLabelSeq(std::move(out), rate_hz);
  }

  std::size_t size() const { return labels_.size(); }
  int frames() const { return static_cast<int>(labels_.size()); }
  int rate_hz() const { return rate_hz_; }
  PauseType operator[](std::size_t t) const { return labels_[t]; }
  const std::vector<PauseType> &labels() const { return labels_; }

  std::vector<int> codes() const {
    std::vector<int> out(labels_.size());
    std::transform(labels_.begin(), labels_.end(), out.begin(),
                   [](PauseType p) { return code(p); });
    return out;
  }

  bool operator==(const FrameLabelSeq &) const = default;

private:
  std::vector<PauseType> labels_;
  int rate_hz_ = kFrameRateHz;
};

/// Half-open frame interval [onset, offset) carrying a non-O type.
struct PauseEvent {
  int onset = 0;
  int offset = 0;
  PauseType type = PauseType::S;

  int length() const { return offset - onset; }
  bool operator==(const PauseEvent &) const = default;
};

inline std::string describe(const PauseEvent &e) {
  std::ostringstream os;
  os << "(" << e.onset << "," << e.offset << "," << to_string(e.type) << ")";
  return os.str();
}

/// Rasterize events onto a T-frame grid. Events may touch but not overlap.
inline FrameLabelSeq encode_labels(const std::vector<PauseEvent> &events,
                                   int frames, int rate_hz = kFrameRateHz) {
  if (frames <= 0)
    throw std::invalid_argument("frame count must be positive");
  std::vector<PauseType> labels(static_cast<std::size_t>(frames),
                                PauseType::O);
  std::vector<const PauseEvent *> sorted;
  for (const auto &e : events) {
    if (e.type == PauseType::O)
      throw std::invalid_argument("event " + describe(e) + " has type O");
    if (e.onset < 0 || e.offset > frames || e.onset >= e.offset)
      throw std::out_of_range("event " + describe(e) + " outside [0," +
                              std::to_string(frames) + ")");
    sorted.push_back(&e);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](auto *a, auto *b) { return a->onset < b->onset; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->onset < sorted[i - 1]->offset)
      throw std::invalid_argument("overlapping events " +
                                  describe(*sorted[i - 1]) + " and " +
                                  describe(*sorted[i]));
  }
  for (const auto *e : sorted)
    std::fill(labels.begin() + e->onset, labels.begin() + e->offset, e->type);
  return FrameLabelSeq(std::move(labels), rate_hz);
}

/// Maximal runs of identical non-zero labels, ordered by onset.
inline std::vector<PauseEvent> decode_events(const FrameLabelSeq &seq) {
  std::vector<PauseEvent> events;
  const int n = seq.frames();
  int t = 0;
  while (t < n) {
    const PauseType p = seq[t];
    int end = t + 1;
    while (end < n && seq[end] == p)
      ++end;
    if (p != PauseType::O)
      events.push_back({t, end, p});
    t = end;
  }
  return events;
}

// ---------------------------------------------------------------------------
// Recording metadata and manifest

enum class SpeechTask { Reading, Spontaneous };

inline std::string_view to_string(SpeechTask t) {
  return t == SpeechTask::Reading ? "reading" : "spontaneous";
}

inline SpeechTask speech_task_from_string(std::string_view s) {
  if (s == "reading")
    return SpeechTask::Reading;
  if (s == "spontaneous")
    return SpeechTask::Spontaneous;
  throw std::invalid_argument("unknown task: " + std::string(s));
}

struct RecordingMeta {
  std::string id;
  std::string subject_id;
  double duration_s = 0.0;
  int exertion_level = 1;
  SpeechTask task = SpeechTask::Spontaneous;

  int frames() const {
    return static_cast<int>(std::lround(duration_s * kFrameRateHz));
  }

  void validate() const {
    if (id.empty())
      throw std::invalid_argument("recording id must be non-empty");
    if (!(duration_s > 0.0))
      throw std::invalid_argument("recording " + id +
                                  ": duration must be positive");
    if (exertion_level < 1 || exertion_level > 5)
      throw std::out_of_range("recording " + id +
                              ": exertion level must be in [1,5]");
  }
};

struct ManifestEntry {
  RecordingMeta meta;
  std::string audio;  ///< WAV path, may be empty
  std::string labels; ///< label JSON path, may be empty
  /// Feature/embedding matrices keyed by kind name ("mfb", "emb4", ...).
  std::map<std::string, std::string> matrices;
};

/// One JSON document indexing a corpus. Relative paths resolve against root.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> records;

  std::filesystem::path resolve(const std::string &p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : root / path;
  }

  const ManifestEntry &find(const std::string &id) const {
    for (const auto &r : records)
      if (r.meta.id == id)
        return r;
    throw std::out_of_range("no recording with id " + id);
  }

  const ManifestEntry *try_find(const std::string &id) const {
    for (const auto &r : records)
      if (r.meta.id == id)
        return &r;
    return nullptr;
  }

  /// Checks id uniqueness, metadata ranges, and (optionally) file existence.
  void validate(bool check_files = true) const {
    std::set<std::string> seen;
    for (const auto &r : records) {
      r.meta.validate();
      if (!seen.insert(r.meta.id).second)
        throw std::invalid_argument("duplicate recording id " + r.meta.id);
      if (!check_files)
        continue;
      auto check = [&](const std::string &p) {
        if (!p.empty() && !std::filesystem::exists(resolve(p)))
          throw std::runtime_error("recording " + r.meta.id +
                                   ": missing file " + resolve(p).string());
      };
      check(r.audio);
      check(r.labels);
      for (const auto &[kind, p] : r.matrices)
        check(p);
    }
  }
};

// ---------------------------------------------------------------------------
// JSON encodings

inline json to_json(const FrameLabelSeq &seq) {
  return json{{"rate_hz", seq.rate_hz()}, {"labels", seq.codes()}};
}

inline FrameLabelSeq label_seq_from_json(const json &j) {
  return FrameLabelSeq::from_codes(j.at("labels").get<std::vector<int>>(),
                                   j.value("rate_hz", kFrameRateHz));
}

inline json events_to_json(const std::vector<PauseEvent> &events,
                           int rate_hz = kFrameRateHz) {
  json arr = json::array();
  for (const auto &e : events)
    arr.push_back({{"onset_s", static_cast<double>(e.onset) / rate_hz},
                   {"offset_s", static_cast<double>(e.offset) / rate_hz},
                   {"type", std::string(to_string(e.type))}});
  return arr;
}

inline std::vector<PauseEvent> events_from_json(const json &arr,
                                                int rate_hz = kFrameRateHz) {
  std::vector<PauseEvent> out;
  for (const auto &j : arr) {
    PauseEvent e;
    e.onset = static_cast<int>(
        std::lround(j.at("onset_s").get<double>() * rate_hz));
    e.offset = static_cast<int>(
        std::lround(j.at("offset_s").get<double>() * rate_hz));
    e.type = pause_type_from_string(j.at("type").get<std::string>());
    if (e.type == PauseType::O)
      throw std::invalid_argument("event file may not contain type O");
    out.push_back(e);
  }
  return out;
}

inline json to_json(const RecordingMeta &m) {
  return json{{"id", m.id},
              {"subject_id", m.subject_id},
              {"duration_s", m.duration_s},
              {"exertion_level", m.exertion_level},
              {"task", std::string(to_string(m.task))}};
}

inline RecordingMeta recording_meta_from_json(const json &j) {
  RecordingMeta m;
  m.id = j.at("id").get<std::string>();
  m.subject_id = j.at("subject_id").get<std::string>();
  m.duration_s = j.at("duration_s").get<double>();
  m.exertion_level = j.at("exertion_level").get<int>();
  m.task = speech_task_from_string(j.value("task", "spontaneous"));
  m.validate();
  return m;
}

inline json to_json(const DatasetManifest &m) {
  json recs = json::array();
  for (const auto &r : m.records) {
    json j = to_json(r.meta);
    j["audio"] = r.audio;
    j["labels"] = r.labels;
    j["matrices"] = r.matrices;
    recs.push_back(std::move(j));
  }
  return json{{"records", recs}};
}

inline DatasetManifest manifest_from_json(const json &j,
                                          std::filesystem::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  for (const auto &r : j.at("records")) {
    ManifestEntry e;
    e.meta = recording_meta_from_json(r);
    e.audio = r.value("audio", "");
    e.labels = r.value("labels", "");
    if (r.contains("matrices"))
      e.matrices = r.at("matrices").get<std::map<std::string, std::string>>();
    m.records.push_back(std::move(e));
  }
  return m;
}

inline json read_json_file(const std::filesystem::path &p) {
  std::ifstream in(p);
  if (!in)
    throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

inline void write_json_file(const std::filesystem::path &p, const json &j,
                            int indent = -1) {
  if (p.has_parent_path())
    std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
  out << j.dump(indent) << "\n";
}

/// Loads a manifest; PAUSEBENCH_DATA overrides the root directory.
inline DatasetManifest load_manifest(const std::filesystem::path &path,
                                     bool check_files = true) {
  std::filesystem::path root = path.parent_path();
  if (const char *env = std::getenv("PAUSEBENCH_DATA"); env && *env)
    root = env;
  auto m = manifest_from_json(read_json_file(path), root);
  m.validate(check_files);
  return m;
}

inline void save_manifest(const std::filesystem::path &path,
                          const DatasetManifest &m) {
  write_json_file(path, to_json(m), 2);
}

inline FrameLabelSeq load_labels(const std::filesystem::path &p) {
  return label_seq_from_json(read_json_file(p));
}

inline void save_labels(const std::filesystem::path &p,
                        const FrameLabelSeq &seq) {
  write_json_file(p, to_json(seq));
}

} // namespace pausebench
