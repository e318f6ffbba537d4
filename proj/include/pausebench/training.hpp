// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Mini-batch training with Adam and early stopping, Stage-1 pause
 *         probabilities and the soft re-weighting of fused features.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "features.hpp"
#include "losses.hpp"
#include "models.hpp"

namespace pausebench {

struct TrainConfig {
  int batch_size = 64;
  AdamConfig adam{};
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 0;
  LossConfig loss{};
  int threads = 1; ///< >1 computes per-window gradients concurrently

  void validate() const {
    if (batch_size < 1)
      throw std::invalid_argument("batch size must be >= 1");
    if (!(adam.learning_rate >= 0.0))
      throw std::invalid_argument("learning rate must be >= 0");
    if (max_epochs < 1 || patience < 0 || threads < 1)
      throw std::invalid_argument("invalid epoch/patience/thread settings");
  }
};

inline json to_json(const TrainConfig &c) {
  return json{{"batch_size", c.batch_size},
              {"learning_rate", c.adam.learning_rate},
              {"optimizer", "adam"},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"epsilon", c.adam.epsilon},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"threads", c.threads},
              {"loss", to_json(c.loss)}};
}

inline TrainConfig train_config_from_json(const json &j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", 64);
  c.adam.learning_rate = j.value("learning_rate", 1e-4);
  c.adam.beta1 = j.value("beta1", 0.9);
  c.adam.beta2 = j.value("beta2", 0.999);
  c.adam.epsilon = j.value("epsilon", 1e-8);
  c.max_epochs = j.value("max_epochs", 30);
  c.patience = j.value("patience", 5);
  c.seed = j.value("seed", std::uint64_t{0});
  c.threads = j.value("threads", 1);
  if (j.contains("loss"))
    c.loss = loss_config_from_json(j.at("loss"));
  c.validate();
  return c;
}

/// One training example: a T x F window and its frame labels.
struct Sample {
  std::string id;
  Matrix x;
  FrameLabelSeq labels;
};

inline void check_loss_head(LossKind loss, HeadKind head) {
  const bool ok = (loss == LossKind::CE && head == HeadKind::Classification) ||
                  ((loss == LossKind::Huber || loss == LossKind::DAF) &&
                   head == HeadKind::Regression) ||
                  (loss == LossKind::BCE && head == HeadKind::Binary);
  if (!ok)
    throw std::invalid_argument("loss " + std::string(to_string(loss)) +
                                " is incompatible with a " +
                                std::string(to_string(head)) + " head");
}

/// Loss of one window's output against its labels (mean over its frames).
inline LossOutput window_loss(const Matrix &output, const FrameLabelSeq &labels,
                              const LossConfig &cfg) {
  const auto steps = static_cast<Eigen::Index>(labels.size());
  if (output.rows() != steps)
    throw std::invalid_argument("output/label length mismatch");
  switch (cfg.kind) {
  case LossKind::CE:
    return ce_loss(output, labels.codes());
  case LossKind::Huber:
  case LossKind::DAF: {
    Matrix target(steps, 1);
    IntMatrix cls(steps, 1);
    for (Eigen::Index t = 0; t < steps; ++t) {
      cls(t, 0) = code(labels[static_cast<std::size_t>(t)]);
      target(t, 0) = cls(t, 0);
    }
    return cfg.kind == LossKind::Huber ? huber_loss(output, target, cfg.daf.delta)
                                       : daf_loss(output, target, cfg.daf, cls);
  }
  case LossKind::BCE: {
    Matrix target(steps, 1);
    for (Eigen::Index t = 0; t < steps; ++t)
      target(t, 0) = labels[static_cast<std::size_t>(t)] == PauseType::O ? 0.0 : 1.0;
    return bce_loss(output, target);
  }
  }
  throw std::logic_error("unhandled loss kind");
}

/// Frame labels decoded from raw model output.
inline FrameLabelSeq output_to_labels(const Matrix &output, HeadKind head) {
  std::vector<PauseType> out(static_cast<std::size_t>(output.rows()));
  for (Eigen::Index t = 0; t < output.rows(); ++t) {
    int c = 0;
    if (head == HeadKind::Classification) {
      Eigen::Index arg;
      output.row(t).maxCoeff(&arg);
      c = static_cast<int>(arg);
    } else if (head == HeadKind::Regression) {
      c = static_cast<int>(std::lround(std::clamp(output(t, 0), 0.0, 3.0)));
    } else {
      c = output(t, 0) > 0.5 ? 1 : 0;
    }
    out[static_cast<std::size_t>(t)] = static_cast<PauseType>(c);
  }
  return FrameLabelSeq(std::move(out));
}

inline double frame_accuracy(const FrameLabelSeq &pred, const FrameLabelSeq &gt,
                             HeadKind head) {
  std::size_t hit = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const bool ok = head == HeadKind::Binary
                        ? ((pred[t] != PauseType::O) == (gt[t] != PauseType::O))
                        : pred[t] == gt[t];
    hit += ok ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_frame_accuracy = 0.0;
};

struct TrainResult {
  Vector best_parameters;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
};

inline json to_json(const TrainResult &r) {
  json h = json::array();
  for (const auto &e : r.history)
    h.push_back({{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"val_loss", e.val_loss},
                 {"val_frame_accuracy", e.val_frame_accuracy}});
  return json{{"best_epoch", r.best_epoch}, {"best_val_loss", r.best_val_loss},
              {"history", h}};
}

namespace detail {

struct WindowGrad {
  double loss = 0.0;
  Vector grad;
};

inline WindowGrad window_gradient(const SequenceModel &model, const Sample &s,
                                  const LossConfig &loss) {
  ForwardCache cache;
  const Matrix out = model.forward(s.x, &cache);
  LossOutput l = window_loss(out, s.labels, loss);
  if (!std::isfinite(l.value))
    throw std::runtime_error("non-finite loss on window " + s.id);
  return {l.value, model.backward(cache, l.grad)};
}

} // namespace detail

struct Evaluation {
  double loss = 0.0;
  double frame_accuracy = 0.0;
};

inline Evaluation evaluate_samples(const SequenceModel &model,
                                   const std::vector<Sample> &samples,
                                   const LossConfig &loss) {
  Evaluation e;
  for (const auto &s : samples) {
    const Matrix out = model.forward(s.x);
    e.loss += window_loss(out, s.labels, loss).value;
    e.frame_accuracy +=
        frame_accuracy(output_to_labels(out, model.config().head), s.labels,
                       model.config().head);
  }
  e.loss /= static_cast<double>(samples.size());
  e.frame_accuracy /= static_cast<double>(samples.size());
  return e;
}

/**
 * Trains in place and restores the best-validation parameters before
 * returning. Batch gradients are the mean of per-window gradients, summed in
 * window order regardless of the thread count.
 */
inline TrainResult train(SequenceModel &model, const std::vector<Sample> &train_set,
                         const std::vector<Sample> &val_set, const TrainConfig &cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("training needs non-empty train and validation sets");
  check_loss_head(cfg.loss.kind, model.config().head);

  Adam opt(model.parameter_count(), cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best_parameters = model.parameters();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t count = end - start;
      std::vector<detail::WindowGrad> parts(count);
      auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
          parts[i] = detail::window_gradient(model, train_set[order[start + i]], cfg.loss);
      };
      if (cfg.threads > 1 && count > 1) {
        const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), count);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nt);
        for (std::size_t k = 0; k < nt; ++k)
          pool.emplace_back([&, k] {
            try {
              work(k * count / nt, (k + 1) * count / nt);
            } catch (...) {
              errors[k] = std::current_exception();
            }
          });
        for (auto &t : pool)
          t.join();
        for (auto &e : errors)
          if (e)
            std::rethrow_exception(e);
      } else {
        work(0, count);
      }
      Vector grad = Vector::Zero(model.parameter_count());
      double batch_loss = 0.0;
      for (const auto &p : parts) {
        grad += p.grad;
        batch_loss += p.loss;
      }
      grad /= static_cast<double>(count);
      if (!grad.allFinite()) {
        std::ostringstream os;
        os << "non-finite gradient at epoch " << epoch << ", batch starting at "
           << start << " (loss " << batch_loss / count << ")";
        throw std::runtime_error(os.str());
      }
      opt.step(model.parameters(), grad);
      epoch_loss += batch_loss;
    }
    const Evaluation val = evaluate_samples(model, val_set, cfg.loss);
    if (!std::isfinite(val.loss))
      throw std::runtime_error("validation loss became non-finite at epoch " +
                               std::to_string(epoch));
    result.history.push_back({epoch, epoch_loss / static_cast<double>(order.size()),
                              val.loss, val.frame_accuracy});
    if (val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      result.best_parameters = model.parameters();
      stale = 0;
    } else if (++stale > cfg.patience) {
      break;
    }
  }
  model.set_parameters(result.best_parameters);
  return result;
}

// ---------------------------------------------------------------------------
// Two-stage setup

struct Stage1Output {
  std::vector<double> omega; ///< frame-wise pause probability in [0,1]
};

inline Stage1Output stage1_detect(const SequenceModel &detector, const Matrix &acoustic) {
  if (detector.config().head != HeadKind::Binary)
    throw std::invalid_argument("stage-1 detector needs a binary head");
  const Matrix p = detector.forward(acoustic);
  Stage1Output out;
  out.omega.resize(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    out.omega[static_cast<std::size_t>(t)] = std::clamp(p(t, 0), 0.0, 1.0);
  return out;
}

inline Stage1Output stage1_detect(const SequenceModel &detector,
                                  const FeatureMatrix &acoustic) {
  if (!is_acoustic(acoustic.kind()))
    throw std::invalid_argument("stage-1 detector consumes an acoustic feature");
  return stage1_detect(detector, acoustic.data());
}

/// Row t of [A;E] scaled by omega_t.
inline FeatureMatrix reweight(const Stage1Output &w, const FeatureMatrix &acoustic,
                              const FeatureMatrix &emb) {
  if (static_cast<int>(w.omega.size()) != acoustic.frames())
    throw std::invalid_argument("reweight: omega has " + std::to_string(w.omega.size()) +
                                " frames, features have " +
                                std::to_string(acoustic.frames()));
  Matrix x = fuse(acoustic, emb).data();
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    x.row(t) *= w.omega[static_cast<std::size_t>(t)];
  return FeatureMatrix(std::move(x), FeatureKind::FUSED, acoustic.rate_hz());
}

} // namespace pausebench
