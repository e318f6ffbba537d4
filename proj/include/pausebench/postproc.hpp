// SPDX-License-Identifier: Apache-2.0
/**
 * @file   postproc.hpp
 * @brief  Turns raw frame-wise model outputs into clean pause events.
 *
 * Regression branch: zero-phase low-pass -> threshold mapping -> merging of
 * S runs into neighbouring B/BS runs. Classification branch: zero-gap
 * bridging, minimum-length pruning and per-segment majority relabelling.
 * Both end with the tail mask applied before scoring.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "evaluation.hpp"
#include "features.hpp"

namespace pausebench {

struct PostprocConfig {
  double cutoff_hz = 0.05;
  std::optional<std::array<double, 3>> thresholds =
      std::array<double, 3>{0.5, 1.5, 2.5};
  bool sweep = false;
  double sweep_step = 0.05;
  int merge_gap_frames = 5;
  int min_event_frames = 3;
  int bridge_gap_frames = 2;
  int mask_tail_frames = 50;
  int rate_hz = kFrameRateHz;

  void validate() const {
    if (!(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0))
      throw std::invalid_argument("cutoff must lie in (0, Nyquist)");
    if (thresholds) {
      const auto &t = *thresholds;
      if (!(0.0 <= t[0] && t[0] < t[1] && t[1] < t[2] && t[2] <= 3.0))
        throw std::invalid_argument("thresholds must satisfy 0<=t1<t2<t3<=3");
    }
    if (!(sweep_step > 0.0))
      throw std::invalid_argument("sweep step must be positive");
    if (merge_gap_frames < 0 || min_event_frames < 0 || bridge_gap_frames < 0 ||
        mask_tail_frames < 0)
      throw std::invalid_argument("frame counts must be >= 0");
  }
};

inline json to_json(const PostprocConfig &c) {
  json j{{"cutoff_hz", c.cutoff_hz},
         {"sweep", c.sweep},
         {"sweep_step", c.sweep_step},
         {"merge_gap_frames", c.merge_gap_frames},
         {"min_event_frames", c.min_event_frames},
         {"bridge_gap_frames", c.bridge_gap_frames},
         {"mask_tail_frames", c.mask_tail_frames},
         {"rate_hz", c.rate_hz}};
  j["thresholds"] = c.thresholds ? json(*c.thresholds) : json(nullptr);
  return j;
}

inline PostprocConfig postproc_config_from_json(const json &j) {
  PostprocConfig c;
  c.cutoff_hz = j.value("cutoff_hz", c.cutoff_hz);
  c.sweep = j.value("sweep", c.sweep);
  c.sweep_step = j.value("sweep_step", c.sweep_step);
  c.merge_gap_frames = j.value("merge_gap_frames", c.merge_gap_frames);
  c.min_event_frames = j.value("min_event_frames", c.min_event_frames);
  c.bridge_gap_frames = j.value("bridge_gap_frames", c.bridge_gap_frames);
  c.mask_tail_frames = j.value("mask_tail_frames", c.mask_tail_frames);
  c.rate_hz = j.value("rate_hz", c.rate_hz);
  if (j.contains("thresholds")) {
    if (j.at("thresholds").is_null())
      c.thresholds.reset();
    else
      c.thresholds = j.at("thresholds").get<std::array<double, 3>>();
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Low-pass filtering

/// Second-order Butterworth section in transposed direct form II.
struct Biquad {
  double b0, b1, b2, a1, a2;

  static Biquad butterworth_lowpass(double cutoff_hz, double rate_hz) {
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    const double q = std::numbers::sqrt2;
    const double norm = 1.0 / (1.0 + q * k + k * k);
    Biquad f;
    f.b0 = k * k * norm;
    f.b1 = 2.0 * f.b0;
    f.b2 = f.b0;
    f.a1 = 2.0 * (k * k - 1.0) * norm;
    f.a2 = (1.0 - q * k + k * k) * norm;
    return f;
  }

  /// Filters in place starting from the steady state for constant input x[0].
  void run(std::vector<double> &x) const {
    if (x.empty())
      return;
    const double x0 = x.front();
    double z2 = (b2 - a2) * x0;
    double z1 = (b1 - a1) * x0 + z2;
    for (double &v : x) {
      const double in = v;
      const double y = b0 * in + z1;
      z1 = b1 * in - a1 * y + z2;
      z2 = b2 * in - a2 * y;
      v = y;
    }
  }
};

/**
 * Zero-phase low-pass: one Butterworth biquad run forward then backward
 * over an odd-reflection padded copy of the sequence.
 */
inline std::vector<double> lowpass(const std::vector<double> &seq,
                                   double cutoff_hz,
                                   double rate_hz = kFrameRateHz) {
  if (seq.size() < 8)
    throw std::invalid_argument("lowpass needs at least 8 samples");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0)
    throw std::invalid_argument("cutoff must lie in (0, Nyquist)");
  const auto n = static_cast<long>(seq.size());
  const long pad = n - 1;
  std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
  // Filtering the offset from the first sample keeps constants exact.
  const double base = seq.front();
  auto at = [&](long i) { return seq[static_cast<std::size_t>(i)] - base; };
  const double first = 0.0, last = at(n - 1);
  for (long i = 0; i < pad; ++i)
    ext[static_cast<std::size_t>(i)] = 2.0 * first - at(pad - i);
  for (long i = 0; i < n; ++i)
    ext[static_cast<std::size_t>(pad + i)] = at(i);
  for (long i = 0; i < pad; ++i)
    ext[static_cast<std::size_t>(pad + n + i)] = 2.0 * last - at(n - 2 - i);

  const Biquad f = Biquad::butterworth_lowpass(cutoff_hz, rate_hz);
  f.run(ext);
  std::reverse(ext.begin(), ext.end());
  f.run(ext);
  std::reverse(ext.begin(), ext.end());
  std::vector<double> out(ext.begin() + pad, ext.begin() + pad + n);
  for (double &v : out)
    v += base;
  return out;
}

struct SpectrumProfile {
  std::vector<double> freq_hz;
  std::vector<double> magnitude;
};

/// Mean DFT magnitude (scaled by 1/T) across equal-length sequences.
inline SpectrumProfile spectrum_profile(const std::vector<std::vector<double>> &seqs,
                                        double rate_hz = kFrameRateHz) {
  if (seqs.empty())
    throw std::invalid_argument("spectrum_profile needs at least one sequence");
  const auto n = static_cast<int>(seqs.front().size());
  if (n < 2)
    throw std::invalid_argument("sequences must have at least 2 samples");
  for (const auto &s : seqs)
    if (static_cast<int>(s.size()) != n)
      throw std::invalid_argument("spectrum_profile needs equal lengths");
  detail::RealFft fft(n);
  SpectrumProfile out;
  out.freq_hz.resize(static_cast<std::size_t>(fft.bins()));
  out.magnitude.assign(static_cast<std::size_t>(fft.bins()), 0.0);
  for (int k = 0; k < fft.bins(); ++k)
    out.freq_hz[static_cast<std::size_t>(k)] = k * rate_hz / n;
  for (const auto &s : seqs) {
    const auto spec = fft.transform(s.data(), n);
    for (int k = 0; k < fft.bins(); ++k)
      out.magnitude[static_cast<std::size_t>(k)] +=
          std::abs(spec[static_cast<std::size_t>(k)]) / n;
  }
  for (double &m : out.magnitude)
    m /= static_cast<double>(seqs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Label-sequence transforms

namespace detail {

struct Run {
  int begin, end;
  PauseType type;
};

inline std::vector<Run> runs_of(const std::vector<PauseType> &v) {
  std::vector<Run> runs;
  const int n = static_cast<int>(v.size());
  for (int t = 0; t < n;) {
    int e = t + 1;
    while (e < n && v[static_cast<std::size_t>(e)] == v[static_cast<std::size_t>(t)])
      ++e;
    runs.push_back({t, e, v[static_cast<std::size_t>(t)]});
    t = e;
  }
  return runs;
}

/// Modal label among non-zero frames; ties resolved BS > B > S.
inline PauseType majority_label(const std::vector<PauseType> &v, int begin,
                                int end) {
  std::array<int, kNumPauseTypes> counts{};
  for (int t = begin; t < end; ++t)
    ++counts[static_cast<std::size_t>(code(v[static_cast<std::size_t>(t)]))];
  int best = 3;
  for (int c = 3; c >= 1; --c)
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)])
      best = c;
  return static_cast<PauseType>(best);
}

/// Maximal non-zero segments as [begin, end) pairs.
inline std::vector<std::pair<int, int>> nonzero_segments(const std::vector<PauseType> &v) {
  std::vector<std::pair<int, int>> segs;
  const int n = static_cast<int>(v.size());
  for (int t = 0; t < n;) {
    if (v[static_cast<std::size_t>(t)] == PauseType::O) {
      ++t;
      continue;
    }
    int e = t;
    while (e < n && v[static_cast<std::size_t>(e)] != PauseType::O)
      ++e;
    segs.emplace_back(t, e);
    t = e;
  }
  return segs;
}

} // namespace detail

/// Class = number of thresholds strictly below the value.
inline FrameLabelSeq regression_to_classes(const std::vector<double> &values,
                                           const std::array<double, 3> &th,
                                           int rate_hz = kFrameRateHz) {
  std::vector<PauseType> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    int c = 0;
    for (double thr : th)
      c += thr < values[t] ? 1 : 0;
    out[t] = static_cast<PauseType>(c);
  }
  return FrameLabelSeq(std::move(out), rate_hz);
}

/**
 * Every S run whose nearest non-zero neighbour on either side is a B or BS
 * run at most gap_frames away takes that neighbour's label, gap included.
 * The closer neighbour wins; on equal distance the higher label wins.
 * Decisions are taken on the input sequence, so merges do not cascade.
 */
inline FrameLabelSeq merge_low_high(const FrameLabelSeq &seq, int gap_frames) {
  const auto &in = seq.labels();
  std::vector<PauseType> out = in;
  const auto runs = detail::runs_of(in);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].type != PauseType::S)
      continue;
    struct Side {
      int gap = -1;
      PauseType type = PauseType::O;
      int fill_begin = 0, fill_end = 0;
    };
    auto look = [&](int dir) {
      Side s;
      long k = static_cast<long>(r) + dir;
      int gap = 0;
      if (k >= 0 && k < static_cast<long>(runs.size()) &&
          runs[static_cast<std::size_t>(k)].type == PauseType::O) {
        const auto &z = runs[static_cast<std::size_t>(k)];
        gap = z.end - z.begin;
        k += dir;
      }
      if (k < 0 || k >= static_cast<long>(runs.size()))
        return s;
      const auto &nb = runs[static_cast<std::size_t>(k)];
      if (nb.type != PauseType::B && nb.type != PauseType::BS)
        return s;
      if (gap > gap_frames)
        return s;
      s.gap = gap;
      s.type = nb.type;
      if (dir < 0) {
        s.fill_begin = nb.end;
        s.fill_end = runs[r].end;
      } else {
        s.fill_begin = runs[r].begin;
        s.fill_end = nb.begin;
      }
      return s;
    };
    const Side left = look(-1), right = look(+1);
    const Side *pick = nullptr;
    if (left.gap >= 0 && right.gap >= 0) {
      if (left.gap != right.gap)
        pick = left.gap < right.gap ? &left : &right;
      else
        pick = code(left.type) >= code(right.type) ? &left : &right;
    } else if (left.gap >= 0) {
      pick = &left;
    } else if (right.gap >= 0) {
      pick = &right;
    }
    if (pick)
      std::fill(out.begin() + pick->fill_begin, out.begin() + pick->fill_end,
                pick->type);
  }
  return FrameLabelSeq(std::move(out), seq.rate_hz());
}

namespace detail {

inline std::vector<PauseType> clean_pass(std::vector<PauseType> v,
                                         const PostprocConfig &cfg) {
  // bridge interior zero gaps between identical labels
  const auto runs = runs_of(v);
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    const auto &z = runs[r];
    if (z.type == PauseType::O && z.end - z.begin <= cfg.bridge_gap_frames &&
        runs[r - 1].type == runs[r + 1].type)
      std::fill(v.begin() + z.begin, v.begin() + z.end, runs[r - 1].type);
  }
  // drop short segments
  for (const auto &[b, e] : nonzero_segments(v))
    if (e - b < cfg.min_event_frames)
      std::fill(v.begin() + b, v.begin() + e, PauseType::O);
  // unify each segment to its majority label
  for (const auto &[b, e] : nonzero_segments(v)) {
    const PauseType m = majority_label(v, b, e);
    std::fill(v.begin() + b, v.begin() + e, m);
  }
  return v;
}

} // namespace detail

/**
 * Bridge, prune and unify, repeated until the sequence stops changing so
 * that the result is a fixed point (relabelling can expose new bridgeable
 * gaps between segments that previously ended in different labels).
 */
inline FrameLabelSeq clean_classification(const FrameLabelSeq &seq,
                                          const PostprocConfig &cfg = {}) {
  std::vector<PauseType> cur = seq.labels();
  for (;;) {
    auto next = detail::clean_pass(cur, cfg);
    if (next == cur)
      break;
    cur = std::move(next);
  }
  return FrameLabelSeq(std::move(cur), seq.rate_hz());
}

/// Keeps only the evaluation region [0, T - mask).
inline FrameLabelSeq mask_tail(const FrameLabelSeq &seq, int mask_frames) {
  if (mask_frames < 0 || mask_frames >= seq.frames())
    throw std::invalid_argument("tail mask must be in [0, T)");
  std::vector<PauseType> v(seq.labels().begin(),
                           seq.labels().end() - mask_frames);
  return FrameLabelSeq(std::move(v), seq.rate_hz());
}

/// Drops events inside the tail mask and truncates events straddling it.
inline std::vector<PauseEvent> mask_tail(const std::vector<PauseEvent> &events,
                                         int mask_frames, int frames) {
  if (mask_frames < 0 || mask_frames >= frames)
    throw std::invalid_argument("tail mask must be in [0, T)");
  const int limit = frames - mask_frames;
  std::vector<PauseEvent> out;
  for (auto e : events) {
    if (e.onset >= limit)
      continue;
    e.offset = std::min(e.offset, limit);
    out.push_back(e);
  }
  return out;
}

/// Masks both sides and scores one window.
inline EventCounts score_window(const FrameLabelSeq &pred,
                                const FrameLabelSeq &gt, int mask_frames,
                                const MatchConfig &mcfg) {
  if (pred.frames() != gt.frames())
    throw std::invalid_argument("prediction/ground-truth length mismatch");
  const auto gt_events = decode_events(mask_tail(gt, mask_frames));
  const auto pred_events = decode_events(mask_tail(pred, mask_frames));
  const auto r = greedy_match(gt_events, pred_events, mcfg);
  return count_events(r, gt_events, pred_events.size());
}

/// Regression branch: thresholds then S->B/BS merging.
inline FrameLabelSeq regression_labels(const std::vector<double> &filtered,
                                       const std::array<double, 3> &th,
                                       const PostprocConfig &cfg) {
  return merge_low_high(regression_to_classes(filtered, th, cfg.rate_hz),
                        cfg.merge_gap_frames);
}

struct SweepResult {
  std::array<double, 3> thresholds{};
  double overall_accuracy = 0.0;
  int evaluated = 0;
};

/**
 * Exhaustive threshold search over the grid {0, step, ..., 3} with
 * t1 < t2 < t3, maximizing overall event accuracy on validation windows.
 * The first optimum in lexicographic order wins.
 */
inline SweepResult sweep_thresholds(const std::vector<std::vector<double>> &filtered,
                                    const std::vector<FrameLabelSeq> &gt,
                                    const PostprocConfig &cfg,
                                    const MatchConfig &mcfg = {}) {
  if (filtered.empty() || filtered.size() != gt.size())
    throw std::invalid_argument(
        "threshold sweep requires non-empty validation predictions and labels");
  const int points = static_cast<int>(std::floor(3.0 / cfg.sweep_step + 1e-9)) + 1;
  SweepResult best;
  best.overall_accuracy = -1.0;
  for (int a = 0; a < points; ++a)
    for (int b = a + 1; b < points; ++b)
      for (int c = b + 1; c < points; ++c) {
        const std::array<double, 3> th{std::min(3.0, a * cfg.sweep_step),
                                       std::min(3.0, b * cfg.sweep_step),
                                       std::min(3.0, c * cfg.sweep_step)};
        EventCounts total;
        for (std::size_t i = 0; i < filtered.size(); ++i)
          total += score_window(regression_labels(filtered[i], th, cfg), gt[i],
                                cfg.mask_tail_frames, mcfg);
        const double acc =
            total.total_gt() > 0
                ? static_cast<double>(total.total_correct()) / total.total_gt()
                : 0.0;
        ++best.evaluated;
        if (acc > best.overall_accuracy) {
          best.overall_accuracy = acc;
          best.thresholds = th;
        }
      }
  return best;
}

} // namespace pausebench
