// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pipeline.hpp
 * @brief  End-to-end runs: features -> (fuse | reweight) -> train -> predict
 *         -> post-process -> tail mask -> match -> report, for the three
 *         setups, plus the snippet-level exertion experiment.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "annotation.hpp"
#include "core.hpp"
#include "dataprep.hpp"
#include "evaluation.hpp"
#include "exertion.hpp"
#include "features.hpp"
#include "losses.hpp"
#include "models.hpp"
#include "postproc.hpp"
#include "training.hpp"

namespace pausebench {

/// Raised by run_pipeline; carries the stage and (when known) the record.
class PipelineError : public std::runtime_error {
public:
  PipelineError(std::string stage, std::string record, const std::string &what)
      : std::runtime_error("[" + stage + (record.empty() ? "" : " " + record) +
                           "] " + what),
        stage_(std::move(stage)), record_(std::move(record)) {}
  const std::string &stage() const { return stage_; }
  const std::string &record() const { return record_; }

private:
  std::string stage_, record_;
};

enum class TaskKind { Classification, Regression };

inline std::string_view to_string(TaskKind t) {
  return t == TaskKind::Classification ? "c" : "r";
}

inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "c" || s == "classification")
    return TaskKind::Classification;
  if (s == "r" || s == "regression")
    return TaskKind::Regression;
  throw std::invalid_argument("unknown task: " + std::string(s));
}

struct PipelineConfig {
  std::filesystem::path manifest;
  int setup = 1;
  TaskKind task = TaskKind::Classification;
  /// Setup 1 input; may be an acoustic kind or an embedding kind.
  FeatureKind feature = FeatureKind::MFB;
  /// Setups 2 and 3 fuse this acoustic kind with `embedding`.
  FeatureKind acoustic = FeatureKind::MFB;
  FeatureKind embedding = FeatureKind::EMB4;
  ModelConfig model{};
  TrainConfig train{};
  LossKind regression_loss = LossKind::Huber;
  bool auto_class_weights = true; ///< DAF weights from inverse frequency
  ModelConfig detector{kAcousticDims, 128, 2, true, HeadKind::Binary, 0, 0, 0};
  TrainConfig detector_train{};
  bool stage1_stub_ones = false; ///< omega == 1 instead of a trained detector
  PostprocConfig postproc{};
  MatchConfig match{};
  std::array<double, 3> split_fractions{0.70, 0.15, 0.15};
  std::uint64_t split_seed = 0;
  double train_stride_s = 1.0;
  double test_stride_s = kWindowSeconds;
  bool standardize = true;

  void validate() const {
    if (setup < 1 || setup > 3)
      throw std::invalid_argument("setup must be 1, 2 or 3");
    if (setup == 1 && feature == FeatureKind::FUSED)
      throw std::invalid_argument("setup 1 takes a single feature, not fused");
    if (setup >= 2 && (!is_acoustic(acoustic) || !is_embedding(embedding)))
      throw std::invalid_argument(
          "setups 2 and 3 require an acoustic feature and an embedding");
    if (task == TaskKind::Regression && regression_loss != LossKind::Huber &&
        regression_loss != LossKind::DAF)
      throw std::invalid_argument("regression trains with huber or daf");
    if (detector.head != HeadKind::Binary)
      throw std::invalid_argument("stage-1 detector must use a binary head");
    if (!(train_stride_s > 0.0 && test_stride_s > 0.0))
      throw std::invalid_argument("window strides must be positive");
    train.validate();
    detector_train.validate();
    postproc.validate();
    match.validate();
  }

  HeadKind head() const {
    return task == TaskKind::Classification ? HeadKind::Classification
                                            : HeadKind::Regression;
  }
  int input_dim() const {
    return setup == 1 ? expected_dims(feature) : kFusedDims;
  }
};

inline json to_json(const PipelineConfig &c) {
  json model = to_json(c.model);
  model["input_dim"] = c.input_dim();
  model["head"] = std::string(to_string(c.head()));
  return json{{"manifest", c.manifest.string()},
              {"setup", c.setup},
              {"task", std::string(to_string(c.task))},
              {"feature", std::string(to_string(c.feature))},
              {"acoustic", std::string(to_string(c.acoustic))},
              {"embedding", std::string(to_string(c.embedding))},
              {"model", model},
              {"train", to_json(c.train)},
              {"regression_loss", std::string(to_string(c.regression_loss))},
              {"auto_class_weights", c.auto_class_weights},
              {"detector", to_json(c.detector)},
              {"detector_train", to_json(c.detector_train)},
              {"stage1_stub_ones", c.stage1_stub_ones},
              {"postproc", to_json(c.postproc)},
              {"match", to_json(c.match)},
              {"split_fractions", c.split_fractions},
              {"split_seed", c.split_seed},
              {"train_stride_s", c.train_stride_s},
              {"test_stride_s", c.test_stride_s},
              {"standardize", c.standardize}};
}

inline PipelineConfig pipeline_config_from_json(const json &j) {
  PipelineConfig c;
  c.manifest = j.value("manifest", std::string{});
  c.setup = j.value("setup", 1);
  c.task = task_kind_from_string(j.value("task", "c"));
  c.feature = feature_kind_from_string(j.value("feature", "mfb"));
  c.acoustic = feature_kind_from_string(j.value("acoustic", "mfb"));
  c.embedding = feature_kind_from_string(j.value("embedding", "emb4"));
  if (j.contains("model"))
    c.model = model_config_from_json(j.at("model"));
  if (j.contains("train"))
    c.train = train_config_from_json(j.at("train"));
  c.regression_loss = loss_kind_from_string(j.value("regression_loss", "huber"));
  c.auto_class_weights = j.value("auto_class_weights", true);
  if (j.contains("detector"))
    c.detector = model_config_from_json(j.at("detector"));
  if (j.contains("detector_train"))
    c.detector_train = train_config_from_json(j.at("detector_train"));
  c.stage1_stub_ones = j.value("stage1_stub_ones", false);
  if (j.contains("postproc"))
    c.postproc = postproc_config_from_json(j.at("postproc"));
  if (j.contains("match"))
    c.match = match_config_from_json(j.at("match"));
  if (j.contains("split_fractions"))
    c.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  c.split_seed = j.value("split_seed", std::uint64_t{0});
  c.train_stride_s = j.value("train_stride_s", 1.0);
  c.test_stride_s = j.value("test_stride_s", kWindowSeconds);
  c.standardize = j.value("standardize", true);
  c.validate();
  return c;
}

/// Effective protocol constants of a run, echoed into every report.
inline json protocol_block(const PipelineConfig &c) {
  return json{{"frame_rate_hz", kFrameRateHz},
              {"window_frames", kWindowFrames},
              {"window_s", kWindowSeconds},
              {"train_stride_s", c.train_stride_s},
              {"test_stride_s", c.test_stride_s},
              {"tolerance_frames", c.match.tolerance_frames},
              {"min_overlap_ratio", c.match.min_overlap_ratio},
              {"mask_tail_frames", c.postproc.mask_tail_frames},
              {"batch_size", c.train.batch_size},
              {"learning_rate", c.train.adam.learning_rate},
              {"exertion_clustering", {{"Low", {1, 2}}, {"High", {3, 4, 5}}}}};
}

// ---------------------------------------------------------------------------
// Data preparation

struct RecordingData {
  RecordingMeta meta;
  FrameLabelSeq labels;
  Matrix primary; ///< setup 1 feature, or the acoustic half of the fusion
  std::optional<Matrix> embedding;
};

namespace detail {

template <class F> auto at_stage(const std::string &stage, const std::string &record, F &&fn) {
  try {
    return fn();
  } catch (const PipelineError &) {
    throw;
  } catch (const std::exception &e) {
    throw PipelineError(stage, record, e.what());
  }
}

inline FeatureMatrix load_feature(const DatasetManifest &m, const ManifestEntry &e,
                                  FeatureKind kind) {
  const std::string key(to_string(kind));
  if (auto it = e.matrices.find(key); it != e.matrices.end())
    return read_matrix(m.resolve(it->second));
  if (kind == FeatureKind::MFCC) {
    if (auto it = e.matrices.find("mfb"); it != e.matrices.end())
      return mfcc_from_mfb(read_matrix(m.resolve(it->second)));
  }
  if (is_acoustic(kind) && !e.audio.empty()) {
    return extract_acoustic(load_audio(m.resolve(e.audio)), kind);
  }
  throw std::runtime_error("no source for feature " + key);
}

inline Matrix frame_aligned(const FeatureMatrix &f, int frames) {
  if (f.frames() == frames)
    return f.data();
  if (is_embedding(f.kind()))
    return resample_embedding(f, frames).data();
  throw std::runtime_error("feature has " + std::to_string(f.frames()) +
                           " frames, labels have " + std::to_string(frames));
}

struct ColumnStats {
  Vector mean, scale;

  void apply(Matrix &x) const {
    x = ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
            .matrix();
  }
};

inline ColumnStats column_stats(const std::vector<const Matrix *> &mats) {
  const Eigen::Index dims = mats.front()->cols();
  Vector sum = Vector::Zero(dims), sq = Vector::Zero(dims);
  double n = 0.0;
  for (const Matrix *m : mats) {
    sum += m->colwise().sum().transpose();
    n += static_cast<double>(m->rows());
  }
  const Vector mean = sum / n;
  for (const Matrix *m : mats)
    sq += (m->rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  Vector scale = (sq / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < dims; ++j)
    if (!(scale(j) > 1e-12))
      scale(j) = 1.0;
  return {mean, scale};
}

} // namespace detail

struct PreparedCorpus {
  std::vector<RecordingData> records;
  SplitSpec split;
  std::vector<std::size_t> by_split[3]; ///< indices into records
};

inline PreparedCorpus prepare_corpus(const PipelineConfig &cfg) {
  const DatasetManifest manifest = detail::at_stage("manifest", "", [&] {
    DatasetManifest m = load_manifest(cfg.manifest);
    m.validate(true);
    return m;
  });
  PreparedCorpus pc;
  std::vector<RecordingMeta> metas;
  for (const auto &e : manifest.records)
    metas.push_back(e.meta);
  pc.split = detail::at_stage("split", "", [&] {
    return split_by_subject(metas, cfg.split_fractions, cfg.split_seed);
  });

  for (const auto &e : manifest.records) {
    RecordingData r = detail::at_stage("features", e.meta.id, [&] {
      if (e.labels.empty())
        throw std::runtime_error("recording has no labels");
      RecordingData d{e.meta, load_labels(manifest.resolve(e.labels)), Matrix(), std::nullopt};
      const int frames = d.labels.frames();
      const FeatureKind first = cfg.setup == 1 ? cfg.feature : cfg.acoustic;
      d.primary = detail::frame_aligned(detail::load_feature(manifest, e, first), frames);
      if (cfg.setup >= 2)
        d.embedding = detail::frame_aligned(
            detail::load_feature(manifest, e, cfg.embedding), frames);
      return d;
    });
    const auto s = static_cast<std::size_t>(pc.split.of(r.meta.subject_id));
    pc.by_split[s].push_back(pc.records.size());
    pc.records.push_back(std::move(r));
  }
  for (int s = 0; s < 3; ++s)
    if (pc.by_split[s].empty())
      throw PipelineError("split", "", std::string("split ") +
                                           std::string(to_string(static_cast<Split>(s))) +
                                           " has no recordings");

  if (cfg.standardize) {
    std::vector<const Matrix *> prim, emb;
    for (auto i : pc.by_split[0]) {
      prim.push_back(&pc.records[i].primary);
      if (pc.records[i].embedding)
        emb.push_back(&*pc.records[i].embedding);
    }
    const auto ps = detail::column_stats(prim);
    std::optional<detail::ColumnStats> es;
    if (!emb.empty())
      es = detail::column_stats(emb);
    for (auto &r : pc.records) {
      ps.apply(r.primary);
      if (r.embedding)
        es->apply(*r.embedding);
    }
  }
  return pc;
}

/// One window's inputs before stage-specific combination.
struct WindowData {
  Window window;
  Matrix primary;
  std::optional<Matrix> embedding;
  FrameLabelSeq labels;
};

inline std::vector<WindowData> cut_windows(const PreparedCorpus &pc, Split split,
                                           double stride_s) {
  std::vector<WindowData> out;
  for (auto i : pc.by_split[static_cast<std::size_t>(split)]) {
    const auto &r = pc.records[i];
    for (const auto &w : segment_windows(r.meta, stride_s)) {
      if (w.frame_end > r.labels.frames())
        continue;
      const int len = w.frame_end - w.frame_begin;
      std::vector<PauseType> lab(r.labels.labels().begin() + w.frame_begin,
                                 r.labels.labels().begin() + w.frame_end);
      WindowData d{w, r.primary.middleRows(w.frame_begin, len), std::nullopt,
                   FrameLabelSeq(std::move(lab), r.labels.rate_hz())};
      if (r.embedding)
        d.embedding = r.embedding->middleRows(w.frame_begin, len);
      out.push_back(std::move(d));
    }
  }
  return out;
}

/// Model input per setup: the single feature, fuse(A,E) or reweight(omega,A,E).
inline Matrix model_input(const PipelineConfig &cfg, const WindowData &w,
                          const SequenceModel *detector) {
  if (cfg.setup == 1)
    return w.primary;
  const FeatureMatrix a(w.primary, cfg.acoustic);
  const FeatureMatrix e(*w.embedding, cfg.embedding);
  if (cfg.setup == 2)
    return fuse(a, e).data();
  Stage1Output omega;
  if (cfg.stage1_stub_ones || detector == nullptr)
    omega.omega.assign(static_cast<std::size_t>(a.frames()), 1.0);
  else
    omega = stage1_detect(*detector, a);
  return reweight(omega, a, e).data();
}

inline std::vector<Sample> to_samples(const std::vector<WindowData> &windows,
                                      const PipelineConfig &cfg,
                                      const SequenceModel *detector) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (const auto &w : windows)
    out.push_back({w.window.recording_id + "@" + std::to_string(w.window.frame_begin),
                   model_input(cfg, w, detector), w.labels});
  return out;
}

inline std::vector<Sample> acoustic_samples(const std::vector<WindowData> &windows) {
  std::vector<Sample> out;
  for (const auto &w : windows)
    out.push_back({w.window.recording_id + "@" + std::to_string(w.window.frame_begin),
                   w.primary, w.labels});
  return out;
}

inline LossConfig task_loss(const PipelineConfig &cfg, const std::vector<Sample> &train) {
  LossConfig l = cfg.train.loss;
  if (cfg.task == TaskKind::Classification) {
    l.kind = LossKind::CE;
    return l;
  }
  l.kind = cfg.regression_loss;
  if (l.kind == LossKind::DAF && cfg.auto_class_weights) {
    std::vector<FrameLabelSeq> labels;
    for (const auto &s : train)
      labels.push_back(s.labels);
    l.daf.class_weights = inverse_frequency_weights(labels);
  }
  return l;
}

// ---------------------------------------------------------------------------
// Prediction and scoring

/// Cleaned frame labels from one window's raw output.
inline FrameLabelSeq postprocess_output(const Matrix &out, TaskKind task,
                                        const PostprocConfig &pp,
                                        const std::array<double, 3> &thresholds) {
  if (task == TaskKind::Classification)
    return clean_classification(output_to_labels(out, HeadKind::Classification), pp);
  std::vector<double> raw(out.col(0).data(), out.col(0).data() + out.rows());
  return regression_labels(lowpass(raw, pp.cutoff_hz, pp.rate_hz), thresholds, pp);
}

struct Backbone {
  SequenceModel model;
  std::optional<SequenceModel> detector;
  TrainResult history;
  std::optional<TrainResult> detector_history;
  LossConfig loss;
};

inline Backbone train_backbone(const PipelineConfig &cfg, const PreparedCorpus &pc) {
  const auto train_w = cut_windows(pc, Split::Train, cfg.train_stride_s);
  const auto val_w = cut_windows(pc, Split::Val, cfg.train_stride_s);
  if (train_w.empty() || val_w.empty())
    throw PipelineError("segment", "", "train or validation split yields no windows");

  std::optional<SequenceModel> detector;
  std::optional<TrainResult> det_hist;
  if (cfg.setup == 3 && !cfg.stage1_stub_ones) {
    detail::at_stage("stage1", "", [&] {
      ModelConfig dc = cfg.detector;
      dc.input_dim = expected_dims(cfg.acoustic);
      dc.head = HeadKind::Binary;
      detector.emplace(dc);
      TrainConfig tc = cfg.detector_train;
      tc.loss.kind = LossKind::BCE;
      det_hist = train(*detector, acoustic_samples(train_w), acoustic_samples(val_w), tc);
      return 0;
    });
  }
  const SequenceModel *det = detector ? &*detector : nullptr;
  const auto train_s = to_samples(train_w, cfg, det);
  const auto val_s = to_samples(val_w, cfg, det);

  ModelConfig mc = cfg.model;
  mc.input_dim = cfg.input_dim();
  mc.head = cfg.head();
  Backbone b{SequenceModel(mc), std::move(detector), {}, std::move(det_hist), {}};
  b.loss = task_loss(cfg, train_s);
  TrainConfig tc = cfg.train;
  tc.loss = b.loss;
  b.history = detail::at_stage("train", "", [&] { return train(b.model, train_s, val_s, tc); });
  return b;
}

/// Runs the configured setup end to end and returns the report document.
inline json run_pipeline(const PipelineConfig &cfg) {
  detail::at_stage("config", "", [&] {
    cfg.validate();
    return 0;
  });
  const PreparedCorpus pc = prepare_corpus(cfg);
  const Backbone b = train_backbone(cfg, pc);
  const SequenceModel *det = b.detector ? &*b.detector : nullptr;

  std::array<double, 3> thresholds =
      cfg.postproc.thresholds.value_or(std::array<double, 3>{0.5, 1.5, 2.5});
  json sweep_info = nullptr;
  if (cfg.task == TaskKind::Regression && cfg.postproc.sweep) {
    const auto val_w = cut_windows(pc, Split::Val, cfg.test_stride_s);
    std::vector<std::vector<double>> filtered;
    std::vector<FrameLabelSeq> gt;
    for (const auto &w : val_w) {
      const Matrix out = b.model.forward(model_input(cfg, w, det));
      std::vector<double> raw(out.col(0).data(), out.col(0).data() + out.rows());
      filtered.push_back(lowpass(raw, cfg.postproc.cutoff_hz, cfg.postproc.rate_hz));
      gt.push_back(w.labels);
    }
    const SweepResult sr = detail::at_stage("postproc", "", [&] {
      return sweep_thresholds(filtered, gt, cfg.postproc, cfg.match);
    });
    thresholds = sr.thresholds;
    sweep_info = {{"validation_overall_accuracy", sr.overall_accuracy},
                  {"evaluated", sr.evaluated}};
  }

  const auto test_w = cut_windows(pc, Split::Test, cfg.test_stride_s);
  if (test_w.empty())
    throw PipelineError("segment", "", "test split yields no windows");
  EventCounts counts;
  json windows = json::array();
  for (const auto &w : test_w) {
    detail::at_stage("predict", w.window.recording_id, [&] {
      const Matrix out = b.model.forward(model_input(cfg, w, det));
      const FrameLabelSeq pred = postprocess_output(out, cfg.task, cfg.postproc, thresholds);
      const EventCounts c = score_window(pred, w.labels, cfg.postproc.mask_tail_frames, cfg.match);
      counts += c;
      windows.push_back({{"recording_id", w.window.recording_id},
                         {"start_s", w.window.start_s},
                         {"predicted", events_to_json(decode_events(pred))},
                         {"correct", c.total_correct()},
                         {"gt_events", c.total_gt()}});
      return 0;
    });
  }

  json report;
  report["config"] = to_json(cfg);
  report["protocol"] = protocol_block(cfg);
  report["split"] = to_json(pc.split);
  report["data"] = {{"recordings", pc.records.size()},
                    {"train_recordings", pc.by_split[0].size()},
                    {"val_recordings", pc.by_split[1].size()},
                    {"test_recordings", pc.by_split[2].size()},
                    {"test_windows", test_w.size()}};
  report["training"] = to_json(b.history);
  report["training"]["loss"] = to_json(b.loss);
  if (b.detector_history)
    report["stage1_training"] = to_json(*b.detector_history);
  report["postproc"] = {{"thresholds", cfg.task == TaskKind::Regression ? json(thresholds)
                                                                       : json(nullptr)},
                        {"sweep", sweep_info}};
  report["results"] = {{"metrics", to_json(metrics_from_counts(counts))},
                       {"windows", windows}};
  return report;
}

// ---------------------------------------------------------------------------
// Exertion experiment

struct ExertionConfig {
  PipelineConfig base;      ///< corpus, features and backbone settings
  bool spontaneous_only = false;
  bool use_backbone = true; ///< pool backbone states instead of raw features
  int num_classes = 2;
  CoralTrainConfig coral{};
  std::uint64_t seed = 0;
};

/**
 * Per-snippet exertion accuracy. Snippets are the pipeline windows; each
 * is pooled over time and scored independently.
 */
inline json run_exertion(const ExertionConfig &cfg) {
  cfg.base.validate();
  if (cfg.num_classes != 2 && cfg.num_classes != 5)
    throw std::invalid_argument("exertion task uses 2 (Low/High) or 5 classes");
  const PreparedCorpus pc = prepare_corpus(cfg.base);
  std::optional<Backbone> b;
  if (cfg.use_backbone)
    b.emplace(train_backbone(cfg.base, pc));
  const SequenceModel *det = b && b->detector ? &*b->detector : nullptr;

  auto pooled = [&](Split split, double stride, std::vector<int> &classes) {
    std::vector<Vector> rows;
    for (const auto &w : cut_windows(pc, split, stride)) {
      const auto &meta = [&]() -> const RecordingMeta & {
        for (const auto &r : pc.records)
          if (r.meta.id == w.window.recording_id)
            return r.meta;
        throw std::logic_error("window without recording");
      }();
      if (cfg.spontaneous_only && meta.task != SpeechTask::Spontaneous)
        continue;
      const Matrix x = model_input(cfg.base, w, det);
      rows.push_back(pool_features(b ? b->model.hidden_states(x) : x));
      classes.push_back(cfg.num_classes == 2 ? cluster_exertion(meta.exertion_level).rank()
                                             : meta.exertion_level);
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return m;
  };
  std::vector<int> train_y, test_y;
  const Matrix train_x = pooled(Split::Train, cfg.base.train_stride_s, train_y);
  const Matrix test_x = pooled(Split::Test, cfg.base.test_stride_s, test_y);
  if (train_x.rows() == 0 || test_x.rows() == 0)
    throw PipelineError("exertion", "", "no snippets in the selected subset");
  const CoralModel head = train_coral(train_x, train_y, cfg.num_classes, cfg.coral, cfg.seed);
  int hit = 0;
  for (Eigen::Index i = 0; i < test_x.rows(); ++i)
    hit += head.predict(test_x.row(i).transpose()) == test_y[static_cast<std::size_t>(i)] ? 1 : 0;

  const std::string layer = cfg.base.setup == 1 ? "none"
                                                 : std::string(to_string(cfg.base.embedding))
                                                       .substr(3);
  const std::string feature(to_string(cfg.base.setup == 1 ? cfg.base.feature : cfg.base.acoustic));
  json report;
  report["config"] = to_json(cfg.base);
  report["config"]["exertion"] = {{"subset", cfg.spontaneous_only ? "spontaneous" : "both"},
                                  {"use_backbone", cfg.use_backbone},
                                  {"num_classes", cfg.num_classes},
                                  {"coral_epochs", cfg.coral.epochs},
                                  {"coral_learning_rate", cfg.coral.adam.learning_rate},
                                  {"seed", cfg.seed}};
  report["protocol"] = protocol_block(cfg.base);
  report["results"] = {{cfg.spontaneous_only ? "spontaneous" : "both",
                        {{layer, {{feature,
                                   {{"accuracy", static_cast<double>(hit) / test_x.rows()},
                                    {"snippets", test_x.rows()},
                                    {"train_snippets", train_x.rows()}}}}}}}};
  report["aggregation"] = "per-snippet";
  return report;
}

} // namespace pausebench
