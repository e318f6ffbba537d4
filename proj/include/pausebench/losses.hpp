// SPDX-License-Identifier: Apache-2.0
/**
 * @file   losses.hpp
 * @brief  Frame-wise objectives with analytic gradients: Huber, the
 *         duration-aware focal (DAF) variant of Huber, softmax cross-entropy
 *         and binary cross-entropy.
 *
 * All losses average over every element of the prediction (N windows x T
 * frames) and return d(loss)/d(prediction) in the prediction's shape.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"

namespace pausebench {

using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::MatrixXi;

inline constexpr double kProbEpsilon = 1e-7;

struct LossOutput {
  double value = 0.0;
  Matrix grad;
};

struct DafParams {
  double alpha = 1.0;
  double gamma = 2.0;
  double delta = 1.0;
  std::map<int, double> class_weights{{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}};

  void validate() const {
    if (!(alpha > 0.0))
      throw std::invalid_argument("DAF alpha must be > 0");
    if (!(gamma >= 0.0))
      throw std::invalid_argument("DAF gamma must be >= 0");
    if (!(delta > 0.0))
      throw std::invalid_argument("DAF delta must be > 0");
    for (const auto &[c, w] : class_weights)
      if (!(w > 0.0))
        throw std::invalid_argument("class weight for " + std::to_string(c) +
                                    " must be > 0");
  }

  double weight(int c) const {
    auto it = class_weights.find(c);
    if (it == class_weights.end())
      throw std::invalid_argument("missing class weight for class " +
                                  std::to_string(c));
    return it->second;
  }
};

namespace detail {

inline void require_same_shape(const Matrix &a, const Matrix &b,
                               const char *what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

inline double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_grad(double e, double delta) {
  return std::clamp(e, -delta, delta);
}

inline double bce_term(double p, double t) {
  const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
}

inline double bce_term_grad(double p, double t) {
  if (p < kProbEpsilon || p > 1.0 - kProbEpsilon)
    return 0.0;
  return (p - t) / (p * (1.0 - p));
}

inline void require_binary(double t, const char *what) {
  if (t != 0.0 && t != 1.0)
    throw std::invalid_argument(std::string(what) + ": targets must be 0 or 1");
}

} // namespace detail

inline LossOutput huber_loss(const Matrix &pred, const Matrix &target,
                             double delta = 1.0) {
  detail::require_same_shape(pred, target, "huber_loss");
  if (!(delta > 0.0))
    throw std::invalid_argument("huber_loss: delta must be > 0");
  const double n = static_cast<double>(pred.size());
  LossOutput out;
  out.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double e = pred(i, j) - target(i, j);
      sum += detail::huber(e, delta);
      out.grad(i, j) = detail::huber_grad(e, delta) / n;
    }
  out.value = sum / n;
  return out;
}

/**
 * alpha * w_c * (|e|/delta)^gamma * Huber_delta(e), averaged. The gradient
 * follows the product rule and is zero where e == 0.
 */
inline LossOutput daf_loss(const Matrix &pred, const Matrix &target,
                           const DafParams &params, const IntMatrix &class_of) {
  detail::require_same_shape(pred, target, "daf_loss");
  if (class_of.rows() != pred.rows() || class_of.cols() != pred.cols())
    throw std::invalid_argument("daf_loss: class map shape mismatch");
  params.validate();
  const double n = static_cast<double>(pred.size());
  const double d = params.delta, g = params.gamma;
  LossOutput out;
  out.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double e = pred(i, j) - target(i, j);
      const double scale = params.alpha * params.weight(class_of(i, j));
      const double ratio = std::abs(e) / d;
      const double focal = std::pow(ratio, g);
      const double h = detail::huber(e, d);
      sum += scale * focal * h;
      if (e == 0.0) {
        out.grad(i, j) = 0.0;
        continue;
      }
      const double dfocal =
          g == 0.0 ? 0.0 : g * std::pow(ratio, g - 1.0) * (e > 0 ? 1.0 : -1.0) / d;
      out.grad(i, j) = scale * (dfocal * h + focal * detail::huber_grad(e, d)) / n;
    }
  out.value = sum / n;
  return out;
}

/// Mean softmax cross-entropy over rows of an M x C logit matrix.
inline LossOutput ce_loss(const Matrix &logits, const std::vector<int> &target) {
  if (static_cast<Eigen::Index>(target.size()) != logits.rows())
    throw std::invalid_argument("ce_loss: target count mismatch");
  const Eigen::Index classes = logits.cols();
  const double n = static_cast<double>(logits.rows());
  LossOutput out;
  out.grad.resize(logits.rows(), classes);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int t = target[static_cast<std::size_t>(i)];
    if (t < 0 || t >= classes)
      throw std::out_of_range("ce_loss: target " + std::to_string(t) +
                              " out of range");
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c)
      z += std::exp(logits(i, c) - mx);
    const double lse = mx + std::log(z);
    sum += lse - logits(i, t);
    for (Eigen::Index c = 0; c < classes; ++c)
      out.grad(i, c) =
          (std::exp(logits(i, c) - lse) - (c == t ? 1.0 : 0.0)) / n;
  }
  out.value = sum / n;
  return out;
}

/// Mean binary cross-entropy; probabilities clamped to [1e-7, 1 - 1e-7].
inline LossOutput bce_loss(const Matrix &prob, const Matrix &target) {
  detail::require_same_shape(prob, target, "bce_loss");
  const double n = static_cast<double>(prob.size());
  LossOutput out;
  out.grad.resize(prob.rows(), prob.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < prob.cols(); ++j)
    for (Eigen::Index i = 0; i < prob.rows(); ++i) {
      detail::require_binary(target(i, j), "bce_loss");
      sum += detail::bce_term(prob(i, j), target(i, j));
      out.grad(i, j) = detail::bce_term_grad(prob(i, j), target(i, j)) / n;
    }
  out.value = sum / n;
  return out;
}

// ---------------------------------------------------------------------------
// Loss configuration block

enum class LossKind { CE, Huber, DAF, BCE };

inline std::string_view to_string(LossKind k) {
  switch (k) {
  case LossKind::CE:
    return "ce";
  case LossKind::Huber:
    return "huber";
  case LossKind::DAF:
    return "daf";
  case LossKind::BCE:
    return "bce";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  for (auto k : {LossKind::CE, LossKind::Huber, LossKind::DAF, LossKind::BCE})
    if (to_string(k) == s)
      return k;
  throw std::invalid_argument("unknown loss: " + std::string(s));
}

struct LossConfig {
  LossKind kind = LossKind::CE;
  DafParams daf; ///< delta is shared with plain Huber
};

inline json to_json(const LossConfig &c) {
  json w = json::object();
  for (const auto &[k, v] : c.daf.class_weights)
    w[std::to_string(k)] = v;
  return json{{"loss", std::string(to_string(c.kind))},
              {"delta", c.daf.delta},
              {"alpha", c.daf.alpha},
              {"gamma", c.daf.gamma},
              {"class_weights", w}};
}

inline LossConfig loss_config_from_json(const json &j) {
  LossConfig c;
  c.kind = loss_kind_from_string(j.value("loss", "ce"));
  c.daf.delta = j.value("delta", 1.0);
  c.daf.alpha = j.value("alpha", 1.0);
  c.daf.gamma = j.value("gamma", 2.0);
  if (j.contains("class_weights")) {
    c.daf.class_weights.clear();
    for (const auto &[k, v] : j.at("class_weights").items())
      c.daf.class_weights[std::stoi(k)] = v.get<double>();
  }
  c.daf.validate();
  return c;
}

/// Inverse class frequency over the given label sequences, normalized to
/// mean 1 across the four classes. Absent classes get the largest weight.
inline std::map<int, double>
inverse_frequency_weights(const std::vector<FrameLabelSeq> &labels) {
  std::array<double, kNumPauseTypes> counts{};
  double total = 0.0;
  for (const auto &s : labels)
    for (auto p : s.labels()) {
      counts[static_cast<std::size_t>(code(p))] += 1.0;
      total += 1.0;
    }
  std::array<double, kNumPauseTypes> inv{};
  double max_inv = 0.0;
  for (std::size_t c = 0; c < inv.size(); ++c)
    if (counts[c] > 0) {
      inv[c] = total / counts[c];
      max_inv = std::max(max_inv, inv[c]);
    }
  if (max_inv == 0.0)
    max_inv = 1.0;
  double mean = 0.0;
  for (auto &v : inv) {
    if (v == 0.0)
      v = max_inv;
    mean += v;
  }
  mean /= kNumPauseTypes;
  std::map<int, double> out;
  for (std::size_t c = 0; c < inv.size(); ++c)
    out[static_cast<int>(c)] = inv[c] / mean;
  return out;
}

} // namespace pausebench
