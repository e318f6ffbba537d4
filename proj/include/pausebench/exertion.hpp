// SPDX-License-Identifier: Apache-2.0
/**
 * @file   exertion.hpp
 * @brief  Exertion-level classification: Low/High clustering, temporal
 *         pooling and an ordinal (CORAL) output head.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "features.hpp"
#include "losses.hpp"
#include "models.hpp"

namespace pausebench {

enum class ExertionClass { Low, High };

inline std::string_view to_string(ExertionClass c) {
  return c == ExertionClass::Low ? "Low" : "High";
}

struct ExertionLabel {
  int raw_level = 1;
  ExertionClass binary = ExertionClass::Low;

  /// Ordinal class in 1..2 for the binary task.
  int rank() const { return binary == ExertionClass::Low ? 1 : 2; }
};

inline ExertionLabel cluster_exertion(int raw) {
  if (raw < 1 || raw > 5)
    throw std::out_of_range("exertion level " + std::to_string(raw) +
                            " outside [1,5]");
  return {raw, raw <= 2 ? ExertionClass::Low : ExertionClass::High};
}

inline Vector pool_features(const Matrix &x) {
  if (x.rows() == 0)
    throw std::invalid_argument("pool_features: empty input");
  return x.colwise().mean().transpose();
}

/// Cumulative encoding of an ordinal class y in 1..K: t_k = [y > k].
inline Matrix ordinal_targets(const std::vector<int> &classes, int num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("ordinal encoding needs K >= 2");
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), num_classes - 1);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int y = classes[i];
    if (y < 1 || y > num_classes)
      throw std::out_of_range("ordinal class " + std::to_string(y) + " outside [1," +
                              std::to_string(num_classes) + "]");
    for (int k = 0; k < y - 1; ++k)
      t(static_cast<Eigen::Index>(i), k) = 1.0;
  }
  return t;
}

/// Sum over thresholds of the binary cross-entropy terms, averaged over rows.
inline LossOutput coral_loss(const Matrix &prob, const Matrix &target) {
  detail::require_same_shape(prob, target, "coral_loss");
  if (prob.rows() == 0 || prob.cols() == 0)
    throw std::invalid_argument("coral_loss: empty input");
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    for (Eigen::Index k = 0; k < target.cols(); ++k) {
      detail::require_binary(target(i, k), "coral_loss");
      if (k > 0 && target(i, k) > target(i, k - 1))
        throw std::invalid_argument("coral_loss: row " + std::to_string(i) +
                                    " is not a valid ordinal encoding");
    }
  const double n = static_cast<double>(prob.rows());
  LossOutput out;
  out.grad.resize(prob.rows(), prob.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < prob.cols(); ++j)
    for (Eigen::Index i = 0; i < prob.rows(); ++i) {
      sum += detail::bce_term(prob(i, j), target(i, j));
      out.grad(i, j) = detail::bce_term_grad(prob(i, j), target(i, j)) / n;
    }
  out.value = sum / n;
  return out;
}

namespace detail {
inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
} // namespace detail

/**
 * Shared weight vector plus K-1 biases. Only the first bias is free; the
 * rest step down by softplus increments, so b_1 >= b_2 >= ... and the
 * cumulative probabilities never cross.
 *
 * Flat parameter layout: [w (F), b_1, d_1 .. d_{K-2}].
 */
class CoralHead {
public:
  CoralHead(int input_dim, int num_classes, std::uint64_t seed = 0)
      : dim_(input_dim), classes_(num_classes) {
    if (input_dim < 1 || num_classes < 2)
      throw std::invalid_argument("CORAL head needs F >= 1 and K >= 2");
    params_ = Vector::Zero(input_dim + num_classes - 1);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = 0; i < input_dim; ++i)
      params_(i) = u(rng);
  }

  int input_dim() const { return dim_; }
  int num_classes() const { return classes_; }
  Vector &parameters() { return params_; }
  const Vector &parameters() const { return params_; }

  Vector thresholds() const {
    Vector b(classes_ - 1);
    b(0) = params_(dim_);
    for (int k = 1; k < classes_ - 1; ++k)
      b(k) = b(k - 1) - detail::softplus(params_(dim_ + k));
    return b;
  }

  /// Cumulative probabilities p_k = sigma(w.x + b_k), N x (K-1).
  Matrix probabilities(const Matrix &x) const {
    check_input(x);
    const Vector score = x * params_.head(dim_);
    const Vector b = thresholds();
    Matrix p(x.rows(), classes_ - 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (int k = 0; k < classes_ - 1; ++k)
        p(i, k) = detail::logistic(score(i) + b(k));
    return p;
  }

  /// Loss and parameter gradient on pooled inputs (N x F) and classes 1..K.
  std::pair<double, Vector> loss_and_gradient(const Matrix &x,
                                              const std::vector<int> &classes) const {
    const Matrix p = probabilities(x);
    const LossOutput l = coral_loss(p, ordinal_targets(classes, classes_));
    // d loss / d logit_{ik}
    Matrix dz = l.grad.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
    Vector grad = Vector::Zero(params_.size());
    grad.head(dim_) = x.transpose() * dz.rowwise().sum();
    const Vector db = dz.colwise().sum().transpose();
    // b_k = b_1 - sum_{j<k} softplus(d_j)
    grad(dim_) = db.sum();
    for (int j = 1; j < classes_ - 1; ++j) {
      const double s = detail::logistic(params_(dim_ + j));
      grad(dim_ + j) = -s * db.tail(classes_ - 1 - j).sum();
    }
    return {l.value, grad};
  }

private:
  int dim_;
  int classes_;
  Vector params_;

  void check_input(const Matrix &x) const {
    if (x.cols() != dim_)
      throw std::invalid_argument("CORAL head expects " + std::to_string(dim_) +
                                  " input dims, got " + std::to_string(x.cols()));
  }
};

inline int coral_predict_from_probabilities(const Eigen::Ref<const Vector> &p) {
  int c = 1;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    c += p(k) > 0.5 ? 1 : 0;
  return c;
}

inline int coral_predict(const CoralHead &head, const Vector &pooled) {
  const Matrix p = head.probabilities(pooled.transpose());
  return coral_predict_from_probabilities(p.row(0).transpose());
}

struct CoralTrainConfig {
  AdamConfig adam{0.05, 0.9, 0.999, 1e-8};
  int epochs = 300;
  bool standardize = true;
};

struct CoralModel {
  CoralHead head;
  Vector mean, scale; ///< input standardization learned on the training set

  Matrix prepare(const Matrix &x) const {
    return ((x.rowwise() - mean.transpose()).array().rowwise() /
            scale.transpose().array())
        .matrix();
  }
  int predict(const Vector &pooled) const {
    return coral_predict(head, prepare(pooled.transpose()).row(0).transpose());
  }
};

/// Full-batch Adam on the CORAL loss over pooled snippet vectors.
inline CoralModel train_coral(const Matrix &x, const std::vector<int> &classes,
                              int num_classes, const CoralTrainConfig &cfg,
                              std::uint64_t seed = 0) {
  if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != classes.size())
    throw std::invalid_argument("train_coral: inputs and classes disagree");
  CoralModel m{CoralHead(static_cast<int>(x.cols()), num_classes, seed),
               x.colwise().mean().transpose(), Vector::Ones(x.cols())};
  if (cfg.standardize) {
    const Matrix centered = x.rowwise() - m.mean.transpose();
    m.scale = (centered.array().square().colwise().mean().sqrt()).transpose();
    for (Eigen::Index j = 0; j < m.scale.size(); ++j)
      if (!(m.scale(j) > 1e-12))
        m.scale(j) = 1.0;
  } else {
    m.mean.setZero();
  }
  const Matrix xs = m.prepare(x);
  Adam opt(m.head.parameters().size(), cfg.adam);
  for (int e = 0; e < cfg.epochs; ++e) {
    auto [loss, grad] = m.head.loss_and_gradient(xs, classes);
    (void)loss;
    opt.step(m.head.parameters(), grad);
  }
  return m;
}

} // namespace pausebench
