// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Event-based scoring: greedy one-to-one matching of predicted to
 *         ground-truth pause events, an exhaustive matching oracle, and
 *         recall-style per-type accuracy.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "core.hpp"

namespace pausebench {

struct MatchConfig {
  int tolerance_frames = 10;
  double min_overlap_ratio = 0.30; ///< relative to the ground-truth duration
  bool require_both_boundaries = true;

  void validate() const {
    if (tolerance_frames < 0)
      throw std::invalid_argument("tolerance must be >= 0");
    if (!(min_overlap_ratio > 0.0 && min_overlap_ratio <= 1.0))
      throw std::invalid_argument("overlap ratio must be in (0,1]");
  }
};

struct MatchedPair {
  int gt_index = 0;
  int pred_index = 0;
  PauseEvent gt;
  PauseEvent pred;
  bool label_agree = false;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<int> unmatched_gt;
  std::vector<int> unmatched_pred;

  int agreeing_pairs() const {
    return static_cast<int>(std::count_if(pairs.begin(), pairs.end(),
                                          [](auto &p) { return p.label_agree; }));
  }
};

inline int overlap_frames(const PauseEvent &a, const PauseEvent &b) {
  return std::max(0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

inline int boundary_distance(const PauseEvent &gt, const PauseEvent &pred) {
  return std::abs(gt.onset - pred.onset) + std::abs(gt.offset - pred.offset);
}

/// Whether (gt, pred) may be paired under the tolerance and overlap rules.
inline bool is_candidate(const PauseEvent &gt, const PauseEvent &pred,
                         const MatchConfig &cfg) {
  const bool on_ok = std::abs(gt.onset - pred.onset) <= cfg.tolerance_frames;
  const bool off_ok = std::abs(gt.offset - pred.offset) <= cfg.tolerance_frames;
  const bool bounds = cfg.require_both_boundaries ? (on_ok && off_ok)
                                                  : (on_ok || off_ok);
  if (!bounds)
    return false;
  return overlap_frames(gt, pred) >= cfg.min_overlap_ratio * gt.length();
}

namespace detail {

inline MatchResult finish_match(const std::vector<PauseEvent> &gt,
                                const std::vector<PauseEvent> &pred,
                                std::vector<MatchedPair> pairs) {
  MatchResult r;
  std::vector<bool> gt_used(gt.size(), false), pred_used(pred.size(), false);
  for (const auto &p : pairs) {
    gt_used[static_cast<std::size_t>(p.gt_index)] = true;
    pred_used[static_cast<std::size_t>(p.pred_index)] = true;
  }
  std::sort(pairs.begin(), pairs.end(),
            [](auto &a, auto &b) { return a.gt_index < b.gt_index; });
  r.pairs = std::move(pairs);
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!gt_used[i])
      r.unmatched_gt.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (!pred_used[j])
      r.unmatched_pred.push_back(static_cast<int>(j));
  return r;
}

inline MatchedPair make_pair(const std::vector<PauseEvent> &gt,
                             const std::vector<PauseEvent> &pred, int i,
                             int j) {
  const auto &g = gt[static_cast<std::size_t>(i)];
  const auto &p = pred[static_cast<std::size_t>(j)];
  return {i, j, g, p, g.type == p.type};
}

} // namespace detail

/**
 * Candidate pairs are consumed in order of label agreement first, then the
 * smallest onset+offset distance, then the largest overlap. Each event is
 * used at most once.
 */
inline MatchResult greedy_match(const std::vector<PauseEvent> &gt,
                                const std::vector<PauseEvent> &pred,
                                const MatchConfig &cfg = {}) {
  cfg.validate();
  struct Candidate {
    int agree, dist, overlap, i, j;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < gt.size(); ++i)
    for (std::size_t j = 0; j < pred.size(); ++j)
      if (is_candidate(gt[i], pred[j], cfg))
        cands.push_back({gt[i].type == pred[j].type ? 1 : 0,
                         boundary_distance(gt[i], pred[j]),
                         overlap_frames(gt[i], pred[j]), static_cast<int>(i),
                         static_cast<int>(j)});
  std::sort(cands.begin(), cands.end(), [](const auto &a, const auto &b) {
    return std::tuple(-a.agree, a.dist, -a.overlap, a.i, a.j) <
           std::tuple(-b.agree, b.dist, -b.overlap, b.i, b.j);
  });
  std::vector<bool> gt_used(gt.size(), false), pred_used(pred.size(), false);
  std::vector<MatchedPair> pairs;
  for (const auto &c : cands) {
    if (gt_used[static_cast<std::size_t>(c.i)] ||
        pred_used[static_cast<std::size_t>(c.j)])
      continue;
    gt_used[static_cast<std::size_t>(c.i)] = true;
    pred_used[static_cast<std::size_t>(c.j)] = true;
    pairs.push_back(detail::make_pair(gt, pred, c.i, c.j));
  }
  return detail::finish_match(gt, pred, std::move(pairs));
}

inline constexpr std::size_t kOracleMaxEvents = 10;

/**
 * Exhaustive optimum over all one-to-one matchings of candidate pairs,
 * maximizing (label-agreeing pairs, total pairs, -total boundary distance).
 * Dynamic program over ground-truth index and the set of used predictions.
 */
inline MatchResult oracle_match(const std::vector<PauseEvent> &gt,
                                const std::vector<PauseEvent> &pred,
                                const MatchConfig &cfg = {}) {
  cfg.validate();
  if (gt.size() > kOracleMaxEvents || pred.size() > kOracleMaxEvents)
    throw std::invalid_argument("oracle_match supports at most 10 events per side");
  using Score = std::tuple<int, int, int>;
  const std::size_t ng = gt.size(), np = pred.size();
  const std::size_t masks = std::size_t{1} << np;
  // best[i][mask]: best score achievable from gt[i..] given used preds mask
  std::vector<std::vector<Score>> best(ng + 1, std::vector<Score>(masks));
  std::vector<std::vector<int>> choice(ng + 1, std::vector<int>(masks, -1));
  for (std::size_t i = ng; i-- > 0;) {
    for (std::size_t mask = 0; mask < masks; ++mask) {
      Score s = best[i + 1][mask];
      int pick = -1;
      for (std::size_t j = 0; j < np; ++j) {
        if (mask & (std::size_t{1} << j) || !is_candidate(gt[i], pred[j], cfg))
          continue;
        const auto &[a, p, d] = best[i + 1][mask | (std::size_t{1} << j)];
        Score cand{a + (gt[i].type == pred[j].type ? 1 : 0), p + 1,
                   d - boundary_distance(gt[i], pred[j])};
        if (cand > s) {
          s = cand;
          pick = static_cast<int>(j);
        }
      }
      best[i][mask] = s;
      choice[i][mask] = pick;
    }
  }
  std::vector<MatchedPair> pairs;
  std::size_t mask = 0;
  for (std::size_t i = 0; i < ng; ++i) {
    const int j = choice[i][mask];
    if (j >= 0) {
      pairs.push_back(detail::make_pair(gt, pred, static_cast<int>(i), j));
      mask |= std::size_t{1} << j;
    }
  }
  return detail::finish_match(gt, pred, std::move(pairs));
}

/// Additive count tuple; index by pause type code (0 unused).
struct EventCounts {
  std::array<int, kNumPauseTypes> gt{};
  std::array<int, kNumPauseTypes> correct{};
  int pred_events = 0;

  EventCounts &operator+=(const EventCounts &o) {
    for (int c = 0; c < kNumPauseTypes; ++c) {
      gt[static_cast<std::size_t>(c)] += o.gt[static_cast<std::size_t>(c)];
      correct[static_cast<std::size_t>(c)] += o.correct[static_cast<std::size_t>(c)];
    }
    pred_events += o.pred_events;
    return *this;
  }

  int total_gt() const { return gt[1] + gt[2] + gt[3]; }
  int total_correct() const { return correct[1] + correct[2] + correct[3]; }
  bool operator==(const EventCounts &) const = default;
};

inline EventCounts count_events(const MatchResult &result,
                                const std::vector<PauseEvent> &gt,
                                std::size_t pred_count) {
  EventCounts c;
  for (const auto &e : gt)
    ++c.gt[static_cast<std::size_t>(code(e.type))];
  for (const auto &p : result.pairs)
    if (p.label_agree)
      ++c.correct[static_cast<std::size_t>(code(p.gt.type))];
  c.pred_events = static_cast<int>(pred_count);
  return c;
}

/// Accuracy values; nullopt stands for "n/a" (no ground-truth events).
struct EventMetrics {
  std::array<std::optional<double>, kNumPauseTypes> per_type{};
  std::optional<double> overall;
  EventCounts counts;
};

inline EventMetrics metrics_from_counts(const EventCounts &c) {
  EventMetrics m;
  m.counts = c;
  for (int t = 1; t < kNumPauseTypes; ++t) {
    const auto k = static_cast<std::size_t>(t);
    if (c.gt[k] > 0)
      m.per_type[k] = static_cast<double>(c.correct[k]) / c.gt[k];
  }
  if (c.total_gt() > 0)
    m.overall = static_cast<double>(c.total_correct()) / c.total_gt();
  return m;
}

inline EventMetrics event_accuracy(const MatchResult &result,
                                   const std::vector<PauseEvent> &gt) {
  return metrics_from_counts(
      count_events(result, gt, result.pairs.size() + result.unmatched_pred.size()));
}

inline json to_json(const EventMetrics &m) {
  auto val = [](const std::optional<double> &v) {
    return v ? json(*v) : json("n/a");
  };
  json per_type;
  json counts;
  for (auto t : {PauseType::S, PauseType::B, PauseType::BS}) {
    const auto k = static_cast<std::size_t>(code(t));
    per_type[std::string(to_string(t))] = val(m.per_type[k]);
    counts[std::string(to_string(t))] = {{"gt", m.counts.gt[k]},
                                         {"correct", m.counts.correct[k]}};
  }
  counts["pred_events"] = m.counts.pred_events;
  return json{{"per_type", per_type}, {"overall", val(m.overall)},
              {"counts", counts}};
}

inline json to_json(const MatchConfig &c) {
  return json{{"tolerance_frames", c.tolerance_frames},
              {"min_overlap_ratio", c.min_overlap_ratio},
              {"require_both_boundaries", c.require_both_boundaries}};
}

inline MatchConfig match_config_from_json(const json &j) {
  MatchConfig c;
  c.tolerance_frames = j.value("tolerance_frames", c.tolerance_frames);
  c.min_overlap_ratio = j.value("min_overlap_ratio", c.min_overlap_ratio);
  c.require_both_boundaries =
      j.value("require_both_boundaries", c.require_both_boundaries);
  c.validate();
  return c;
}

} // namespace pausebench
