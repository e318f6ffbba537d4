// SPDX-License-Identifier: Apache-2.0
/**
 * @file   service.hpp
 * @brief  Local HTTP backend for the annotation tool: recording list, audio
 *         bytes, per-annotator label tracks and majority-vote merging.
 *
 * Route handlers are plain member functions returning a Reply so they can be
 * exercised without sockets; bind() attaches them to an httplib::Server.
 */
#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "annotation.hpp"
#include "core.hpp"
#include "features.hpp"
#include "wav.hpp"

#include <httplib.h>

// <resolv.h>, pulled in by httplib, defines _res as a macro; Eigen uses the
// same name for parameters, so headers included later would not compile.
#ifdef _res
#undef _res
#endif

namespace pausebench {

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class AnnotationService {
public:
  /// store_dir holds one file per (recording, annotator); empty disables
  /// persistence. Existing files are loaded at start-up.
  explicit AnnotationService(DatasetManifest manifest, std::filesystem::path store_dir = {})
      : manifest_(std::move(manifest)), store_dir_(std::move(store_dir)) {
    manifest_.validate(false);
    for (const auto &r : manifest_.records)
      slots_.emplace(r.meta.id, std::make_unique<RecordingSlot>());
    if (!store_dir_.empty())
      load_store();
  }

  const DatasetManifest &manifest() const { return manifest_; }

  Reply list_recordings() const {
    json out = json::array();
    for (const auto &r : manifest_.records) {
      json j = to_json(r.meta);
      j["has_audio"] = !r.audio.empty();
      std::vector<std::string> kinds;
      for (const auto &[k, p] : r.matrices)
        kinds.push_back(k);
      j["features"] = kinds;
      const auto &slot = *slots_.at(r.meta.id);
      std::shared_lock lock(slot.mutex);
      std::vector<std::string> annotators;
      for (const auto &[a, body] : slot.tracks)
        annotators.push_back(a);
      j["annotators"] = annotators;
      j["version"] = slot.version;
      out.push_back(j);
    }
    return json_reply(200, out);
  }

  Reply get_audio(const std::string &id) const {
    const ManifestEntry *e = manifest_.try_find(id);
    if (!e)
      return error(404, "unknown recording " + id);
    if (e->audio.empty())
      return error(404, "recording " + id + " has no audio");
    Reply r;
    r.content_type = "audio/wav";
    r.body = read_file_bytes(manifest_.resolve(e->audio));
    return r;
  }

  Reply get_labels(const std::string &id, const std::string &annotator) const {
    const ManifestEntry *e = manifest_.try_find(id);
    if (!e)
      return error(404, "unknown recording " + id);
    const auto &slot = *slots_.at(id);
    std::shared_lock lock(slot.mutex);
    auto it = slot.tracks.find(annotator);
    if (it == slot.tracks.end())
      return error(404, "no labels from annotator " + annotator + " for " + id);
    Reply r;
    r.body = it->second;
    r.headers["X-Version"] = std::to_string(slot.version);
    return r;
  }

  /**
   * Stores the body verbatim after validating it. Writers to one recording
   * are serialized; the last writer wins. A stale If-Match version is
   * reported as a conflict in the response but does not block the write.
   */
  Reply put_labels(const std::string &id, const std::string &annotator,
                   const std::string &body, std::optional<long> if_match = {}) {
    const ManifestEntry *e = manifest_.try_find(id);
    if (!e)
      return error(404, "unknown recording " + id);
    if (!valid_name(annotator))
      return error(400, "invalid annotator id");
    FrameLabelSeq seq;
    try {
      seq = label_seq_from_json(json::parse(body));
    } catch (const std::exception &ex) {
      return error(400, std::string("invalid label document: ") + ex.what());
    }
    if (seq.frames() != e->meta.frames())
      return error(422, "label track has " + std::to_string(seq.frames()) +
                            " frames, recording has " + std::to_string(e->meta.frames()));
    auto &slot = *slots_.at(id);
    std::unique_lock lock(slot.mutex);
    const long previous = slot.version;
    slot.tracks[annotator] = body;
    ++slot.version;
    if (!store_dir_.empty())
      persist(id, annotator, body);
    json out{{"recording", id},
             {"annotator", annotator},
             {"version", slot.version},
             {"previous_version", previous},
             {"conflict", if_match.has_value() && *if_match != previous}};
    Reply r = json_reply(200, out);
    r.headers["X-Version"] = std::to_string(slot.version);
    return r;
  }

  /// Majority vote over the named annotators (default: all stored tracks).
  Reply merge(const std::string &id, const std::string &body) const {
    const ManifestEntry *e = manifest_.try_find(id);
    if (!e)
      return error(404, "unknown recording " + id);
    std::vector<std::string> wanted;
    if (!body.empty()) {
      try {
        const json j = json::parse(body);
        if (j.contains("annotators"))
          wanted = j.at("annotators").get<std::vector<std::string>>();
      } catch (const std::exception &ex) {
        return error(400, std::string("invalid merge request: ") + ex.what());
      }
    }
    std::vector<AnnotationTrack> tracks;
    {
      const auto &slot = *slots_.at(id);
      std::shared_lock lock(slot.mutex);
      if (wanted.empty())
        for (const auto &[a, b] : slot.tracks)
          wanted.push_back(a);
      for (const auto &a : wanted) {
        auto it = slot.tracks.find(a);
        if (it == slot.tracks.end())
          return error(404, "no labels from annotator " + a + " for " + id);
        tracks.push_back({id, a, label_seq_from_json(json::parse(it->second))});
      }
    }
    try {
      json out = merged_to_json(majority_vote(tracks));
      out["annotators"] = wanted;
      out["recording"] = id;
      return json_reply(200, out);
    } catch (const std::exception &ex) {
      return error(422, ex.what());
    }
  }

  /// Feature preview: block-averaged rows, at most max_frames of them.
  Reply get_features(const std::string &id, const std::string &kind_name,
                     int max_frames = 500) const {
    const ManifestEntry *e = manifest_.try_find(id);
    if (!e)
      return error(404, "unknown recording " + id);
    try {
      const FeatureKind kind = feature_kind_from_string(kind_name);
      FeatureMatrix m = load(*e, kind);
      const int frames = m.frames();
      const int step = std::max(1, (frames + std::max(1, max_frames) - 1) / std::max(1, max_frames));
      json rows = json::array();
      for (int b = 0; b < frames; b += step) {
        const int n = std::min(step, frames - b);
        const Vector avg = m.data().middleRows(b, n).colwise().mean().transpose();
        rows.push_back(std::vector<double>(avg.data(), avg.data() + avg.size()));
      }
      return json_reply(200, json{{"recording", id},
                                  {"kind", kind_name},
                                  {"rate_hz", static_cast<double>(m.rate_hz()) / step},
                                  {"frames", frames},
                                  {"step", step},
                                  {"dims", m.dims()},
                                  {"data", rows}});
    } catch (const std::exception &ex) {
      return error(404, ex.what());
    }
  }

  void bind(httplib::Server &srv) {
    auto send = [](httplib::Response &res, const Reply &r) {
      res.status = r.status;
      for (const auto &[k, v] : r.headers)
        res.set_header(k, v);
      res.set_content(r.body, r.content_type);
    };
    srv.Get("/recordings", [this, send](const httplib::Request &, httplib::Response &res) {
      send(res, list_recordings());
    });
    srv.Get(R"(/recordings/([^/]+)/audio)",
            [this, send](const httplib::Request &req, httplib::Response &res) {
              send(res, get_audio(req.matches[1]));
            });
    srv.Get(R"(/recordings/([^/]+)/labels/([^/]+))",
            [this, send](const httplib::Request &req, httplib::Response &res) {
              send(res, get_labels(req.matches[1], req.matches[2]));
            });
    srv.Put(R"(/recordings/([^/]+)/labels/([^/]+))",
            [this, send](const httplib::Request &req, httplib::Response &res) {
              std::optional<long> if_match;
              if (req.has_header("If-Match")) {
                try {
                  if_match = std::stol(req.get_header_value("If-Match"));
                } catch (const std::exception &) {
                  send(res, error(400, "If-Match must be a version number"));
                  return;
                }
              }
              send(res, put_labels(req.matches[1], req.matches[2], req.body, if_match));
            });
    srv.Post(R"(/recordings/([^/]+)/merge)",
             [this, send](const httplib::Request &req, httplib::Response &res) {
               send(res, merge(req.matches[1], req.body));
             });
    srv.Get(R"(/recordings/([^/]+)/features)",
            [this, send](const httplib::Request &req, httplib::Response &res) {
              const std::string kind =
                  req.has_param("kind") ? req.get_param_value("kind") : "mfb";
              int max_frames = 500;
              if (req.has_param("max_frames"))
                max_frames = std::atoi(req.get_param_value("max_frames").c_str());
              send(res, get_features(req.matches[1], kind, max_frames));
            });
  }

private:
  struct RecordingSlot {
    mutable std::shared_mutex mutex;
    std::map<std::string, std::string> tracks; ///< annotator -> verbatim body
    long version = 0;
  };

  DatasetManifest manifest_;
  std::filesystem::path store_dir_;
  std::map<std::string, std::unique_ptr<RecordingSlot>> slots_;

  static bool valid_name(const std::string &s) {
    if (s.empty() || s.size() > 64)
      return false;
    for (char c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
        return false;
    return true;
  }

  static Reply json_reply(int status, const json &j) {
    Reply r;
    r.status = status;
    r.body = j.dump();
    return r;
  }

  static Reply error(int status, const std::string &msg) {
    return json_reply(status, json{{"error", msg}});
  }

  FeatureMatrix load(const ManifestEntry &e, FeatureKind kind) const {
    const std::string key(to_string(kind));
    if (auto it = e.matrices.find(key); it != e.matrices.end())
      return read_matrix(manifest_.resolve(it->second));
    if (kind == FeatureKind::MFCC)
      if (auto it = e.matrices.find("mfb"); it != e.matrices.end())
        return mfcc_from_mfb(read_matrix(manifest_.resolve(it->second)));
    if (is_acoustic(kind) && !e.audio.empty()) {
      return extract_acoustic(load_audio(manifest_.resolve(e.audio)), kind);
    }
    throw std::runtime_error("recording " + e.meta.id + " has no " + key + " features");
  }

  void persist(const std::string &id, const std::string &annotator,
               const std::string &body) const {
    const auto dir = store_dir_ / id;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (annotator + ".json"), std::ios::binary);
    out << body;
  }

  void load_store() {
    for (const auto &[id, slot] : slots_) {
      const auto dir = store_dir_ / id;
      if (!std::filesystem::is_directory(dir))
        continue;
      for (const auto &f : std::filesystem::directory_iterator(dir)) {
        if (f.path().extension() != ".json")
          continue;
        slot->tracks[f.path().stem().string()] = read_file_bytes(f.path());
      }
    }
  }
};

} // namespace pausebench
