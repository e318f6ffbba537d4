// SPDX-License-Identifier: Apache-2.0
/**
 * @file   models.hpp
 * @brief  Frame-wise sequence predictor: optional temporal convolution,
 *         stacked (bi)directional GRU layers and a per-frame output head,
 *         with hand-written backpropagation through time.
 *
 * GRU cell (reset applied after the recurrent product):
 *
 *   r  = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
 *   z  = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
 *   n  = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
 *   h' = (1 - z) * n + z * h
 *
 * Sequences are held feature-major internally (D x T) so that one time step
 * is one contiguous column.
 */
#pragma once

#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"

namespace pausebench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class HeadKind { Classification, Regression, Binary };

inline std::string_view to_string(HeadKind h) {
  switch (h) {
  case HeadKind::Classification:
    return "classification";
  case HeadKind::Regression:
    return "regression";
  case HeadKind::Binary:
    return "binary";
  }
  return "?";
}

inline HeadKind head_kind_from_string(std::string_view s) {
  for (auto h : {HeadKind::Classification, HeadKind::Regression, HeadKind::Binary})
    if (to_string(h) == s)
      return h;
  throw std::invalid_argument("unknown head: " + std::string(s));
}

inline int head_outputs(HeadKind h) {
  return h == HeadKind::Classification ? kNumPauseTypes : 1;
}

struct ModelConfig {
  int input_dim = 40;
  int hidden_dim = 32;
  int layers = 2;
  bool bidirectional = true;
  HeadKind head = HeadKind::Classification;
  int conv_kernel = 0; ///< 0 disables the convolutional front-end; must be odd
  int conv_channels = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim <= 0 || hidden_dim <= 0 || layers <= 0)
      throw std::invalid_argument("model dimensions must be positive");
    if (conv_kernel < 0 || (conv_kernel > 0 && (conv_kernel % 2 == 0 || conv_channels <= 0)))
      throw std::invalid_argument("conv kernel must be odd with positive channel count");
  }

  bool has_conv() const { return conv_kernel > 0; }
  int directions() const { return bidirectional ? 2 : 1; }
  int recurrent_input_dim() const { return has_conv() ? conv_channels : input_dim; }
  int feature_dim() const { return directions() * hidden_dim; }
};

inline json to_json(const ModelConfig &c) {
  return json{{"input_dim", c.input_dim},     {"hidden_dim", c.hidden_dim},
              {"layers", c.layers},           {"bidirectional", c.bidirectional},
              {"head", std::string(to_string(c.head))},
              {"conv_kernel", c.conv_kernel}, {"conv_channels", c.conv_channels},
              {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json &j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.layers = j.value("layers", 2);
  c.bidirectional = j.value("bidirectional", true);
  c.head = head_kind_from_string(j.value("head", "classification"));
  c.conv_kernel = j.value("conv_kernel", 0);
  c.conv_channels = j.value("conv_channels", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

namespace detail {

inline Vector sigmoid(const Vector &x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

} // namespace detail

/// One GRU update for a single step; h' given input x and state h.
inline Vector gru_cell(const Matrix &wx, const Matrix &wh, const Vector &bx,
                       const Vector &bh, const Vector &x, const Vector &h) {
  const auto hd = h.size();
  const Vector gx = wx * x + bx;
  const Vector gh = wh * h + bh;
  const Vector r = detail::sigmoid(gx.head(hd) + gh.head(hd));
  const Vector z = detail::sigmoid(gx.segment(hd, hd) + gh.segment(hd, hd));
  const Vector n =
      (gx.tail(hd).array() + r.array() * gh.tail(hd).array()).tanh().matrix();
  return ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
}

/// Named slice of the flat parameter vector (column-major rows x cols).
struct TensorSlot {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
  double init_bound = 0.0;
  Eigen::Index size() const { return rows * cols; }
};

struct DirectionCache {
  Matrix hprev, r, z, n, ghn; ///< each H x T
};

struct LayerCache {
  Matrix input; ///< in x T
  std::vector<DirectionCache> dirs;
};

struct ForwardCache {
  bool valid = false;
  Matrix conv_cols; ///< (k*F) x T
  Matrix conv_pre;  ///< C x T
  std::vector<LayerCache> layers;
  Matrix head_in;   ///< D x T
  Matrix output;    ///< T x K, post-activation
};

class SequenceModel {
public:
  explicit SequenceModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_layout();
    params_ = Vector::Zero(total_);
    std::mt19937_64 rng(cfg_.seed);
    for (const auto &s : slots_) {
      std::uniform_real_distribution<double> u(-s.init_bound, s.init_bound);
      for (Eigen::Index i = 0; i < s.size(); ++i)
        params_(s.offset + i) = u(rng);
    }
  }

  const ModelConfig &config() const { return cfg_; }
  int output_dim() const { return head_outputs(cfg_.head); }
  Eigen::Index parameter_count() const { return total_; }
  const Vector &parameters() const { return params_; }
  Vector &parameters() { return params_; }
  const std::vector<TensorSlot> &slots() const { return slots_; }

  void set_parameters(const Vector &p) {
    if (p.size() != total_)
      throw std::invalid_argument("parameter vector size mismatch");
    params_ = p;
  }

  const TensorSlot &slot(const std::string &name) const {
    for (const auto &s : slots_)
      if (s.name == name)
        return s;
    throw std::out_of_range("no parameter tensor " + name);
  }

  Eigen::Map<Matrix> tensor(const std::string &name) {
    const auto &s = slot(name);
    return {params_.data() + s.offset, s.rows, s.cols};
  }

  /// T x F input to T x K output. Classification: logits; regression: scalar;
  /// binary: probability in (0,1).
  Matrix forward(const Matrix &x, ForwardCache *cache = nullptr) const {
    return run(params_, x, cache);
  }

  /// Last recurrent layer's states, T x (directions * H).
  Matrix hidden_states(const Matrix &x) const {
    ForwardCache c;
    run(params_, x, &c);
    return c.head_in.transpose();
  }

  /// Parameter gradient for an upstream gradient d(loss)/d(output), T x K.
  Vector backward(const ForwardCache &cache, const Matrix &upstream) const {
    if (!cache.valid)
      throw std::logic_error("backward called without a forward cache");
    if (upstream.rows() != cache.output.rows() || upstream.cols() != output_dim())
      throw std::invalid_argument("upstream gradient shape mismatch");
    Vector grad = Vector::Zero(total_);
    backprop(cache, upstream, grad);
    return grad;
  }

private:
  ModelConfig cfg_;
  std::vector<TensorSlot> slots_;
  Eigen::Index total_ = 0;
  Vector params_;

  // Slot indices
  int conv_w_ = -1, conv_b_ = -1;
  struct DirSlots {
    int wx, wh, bx, bh;
  };
  std::vector<std::vector<DirSlots>> gru_;
  int head_w_ = -1, head_b_ = -1;

  int add_slot(std::string name, Eigen::Index rows, Eigen::Index cols, double fan_in) {
    slots_.push_back({std::move(name), total_, rows, cols, 1.0 / std::sqrt(fan_in)});
    total_ += rows * cols;
    return static_cast<int>(slots_.size() - 1);
  }

  void build_layout() {
    const int h = cfg_.hidden_dim;
    if (cfg_.has_conv()) {
      const int fan = cfg_.conv_kernel * cfg_.input_dim;
      conv_w_ = add_slot("conv.weight", cfg_.conv_channels, fan, fan);
      conv_b_ = add_slot("conv.bias", cfg_.conv_channels, 1, fan);
    }
    int in = cfg_.recurrent_input_dim();
    for (int l = 0; l < cfg_.layers; ++l) {
      std::vector<DirSlots> dirs;
      for (int d = 0; d < cfg_.directions(); ++d) {
        const std::string p = "gru" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
        DirSlots s{};
        s.wx = add_slot(p + "wx", 3 * h, in, in);
        s.wh = add_slot(p + "wh", 3 * h, h, h);
        s.bx = add_slot(p + "bx", 3 * h, 1, in);
        s.bh = add_slot(p + "bh", 3 * h, 1, h);
        dirs.push_back(s);
      }
      gru_.push_back(std::move(dirs));
      in = cfg_.feature_dim();
    }
    head_w_ = add_slot("head.weight", output_dim(), in, in);
    head_b_ = add_slot("head.bias", output_dim(), 1, in);
  }

  template <class V>
  static Eigen::Map<const Matrix> view(const V &p, const TensorSlot &s) {
    return {p.data() + s.offset, s.rows, s.cols};
  }
  static Eigen::Map<Matrix> view_mut(Vector &p, const TensorSlot &s) {
    return {p.data() + s.offset, s.rows, s.cols};
  }

  const TensorSlot &at(int i) const { return slots_[static_cast<std::size_t>(i)]; }

  Matrix run(const Vector &p, const Matrix &x, ForwardCache *cache) const {
    if (x.cols() != cfg_.input_dim)
      throw std::invalid_argument("input has " + std::to_string(x.cols()) +
                                  " features, model expects " +
                                  std::to_string(cfg_.input_dim));
    if (x.rows() < 1)
      throw std::invalid_argument("input sequence is empty");
    const Eigen::Index steps = x.rows();
    ForwardCache local;
    ForwardCache &c = cache ? *cache : local;
    c.layers.clear();

    Matrix seq = x.transpose(); // F x T
    if (cfg_.has_conv()) {
      const int k = cfg_.conv_kernel, f = cfg_.input_dim, pad = k / 2;
      c.conv_cols = Matrix::Zero(static_cast<Eigen::Index>(k) * f, steps);
      for (Eigen::Index t = 0; t < steps; ++t)
        for (int j = 0; j < k; ++j) {
          const Eigen::Index src = t + j - pad;
          if (src >= 0 && src < steps)
            c.conv_cols.block(static_cast<Eigen::Index>(j) * f, t, f, 1) = seq.col(src);
        }
      c.conv_pre = view(p, at(conv_w_)) * c.conv_cols;
      c.conv_pre.colwise() += Vector(view(p, at(conv_b_)));
      seq = c.conv_pre.cwiseMax(0.0);
    }

    const int h = cfg_.hidden_dim;
    for (std::size_t l = 0; l < gru_.size(); ++l) {
      LayerCache lc;
      lc.input = seq;
      Matrix out(cfg_.feature_dim(), steps);
      for (std::size_t d = 0; d < gru_[l].size(); ++d) {
        const auto &s = gru_[l][d];
        const auto wx = view(p, at(s.wx));
        const auto wh = view(p, at(s.wh));
        const Vector bx = view(p, at(s.bx));
        const Vector bh = view(p, at(s.bh));
        DirectionCache dc;
        dc.hprev.resize(h, steps);
        dc.r.resize(h, steps);
        dc.z.resize(h, steps);
        dc.n.resize(h, steps);
        dc.ghn.resize(h, steps);
        Matrix gx = wx * seq;
        gx.colwise() += bx;
        Vector state = Vector::Zero(h);
        Vector gh(3 * h);
        for (Eigen::Index i = 0; i < steps; ++i) {
          const Eigen::Index t = d == 0 ? i : steps - 1 - i;
          dc.hprev.col(t) = state;
          gh.noalias() = wh * state;
          gh += bh;
          const auto g = gx.col(t);
          auto r = dc.r.col(t);
          auto z = dc.z.col(t);
          auto n = dc.n.col(t);
          r = (1.0 / (1.0 + (-(g.head(h) + gh.head(h)).array()).exp())).matrix();
          z = (1.0 / (1.0 + (-(g.segment(h, h) + gh.segment(h, h)).array()).exp())).matrix();
          dc.ghn.col(t) = gh.tail(h);
          n = (g.tail(h).array() + r.array() * gh.tail(h).array()).tanh().matrix();
          state = ((1.0 - z.array()) * n.array() + z.array() * state.array()).matrix();
          out.block(static_cast<Eigen::Index>(d) * h, t, h, 1) = state;
        }
        lc.dirs.push_back(std::move(dc));
      }
      c.layers.push_back(std::move(lc));
      seq = std::move(out);
    }
    c.head_in = seq;
    Matrix y = (view(p, at(head_w_)) * seq).transpose(); // T x K
    y.rowwise() += Vector(view(p, at(head_b_))).transpose();
    if (cfg_.head == HeadKind::Binary)
      y = (1.0 / (1.0 + (-y.array()).exp())).matrix();
    c.output = y;
    c.valid = true;
    return y;
  }

  void backprop(const ForwardCache &c, const Matrix &upstream, Vector &grad) const {
    // head
    Matrix dpre = upstream.transpose(); // K x T
    if (cfg_.head == HeadKind::Binary) {
      const Matrix pt = c.output.transpose();
      dpre = (dpre.array() * pt.array() * (1.0 - pt.array())).matrix();
    }
    view_mut(grad, at(head_w_)).noalias() += dpre * c.head_in.transpose();
    view_mut(grad, at(head_b_)) += dpre.rowwise().sum();
    Matrix dseq = view(params_, at(head_w_)).transpose() * dpre; // D x T

    const int h = cfg_.hidden_dim;
    const Eigen::Index steps = dseq.cols();
    for (std::size_t l = gru_.size(); l-- > 0;) {
      const LayerCache &lc = c.layers[l];
      Matrix din = Matrix::Zero(lc.input.rows(), steps);
      for (std::size_t d = 0; d < gru_[l].size(); ++d) {
        const auto &s = gru_[l][d];
        const DirectionCache &dc = lc.dirs[d];
        const auto wx = view(params_, at(s.wx));
        const auto wh = view(params_, at(s.wh));
        Matrix dgx(3 * h, steps), dgh(3 * h, steps);
        Vector carry = Vector::Zero(h);
        for (Eigen::Index i = steps; i-- > 0;) {
          const Eigen::Index t = d == 0 ? i : steps - 1 - i;
          const Vector dh =
              dseq.block(static_cast<Eigen::Index>(d) * h, t, h, 1) + carry;
          const auto r = dc.r.col(t).array();
          const auto z = dc.z.col(t).array();
          const auto n = dc.n.col(t).array();
          const auto hp = dc.hprev.col(t).array();
          const auto ghn = dc.ghn.col(t).array();
          const Eigen::ArrayXd dn = dh.array() * (1.0 - z);
          const Eigen::ArrayXd dz = dh.array() * (hp - n);
          const Eigen::ArrayXd dan = dn * (1.0 - n * n);
          const Eigen::ArrayXd dar = dan * ghn * r * (1.0 - r);
          const Eigen::ArrayXd daz = dz * z * (1.0 - z);
          dgx.col(t) << dar.matrix(), daz.matrix(), dan.matrix();
          dgh.col(t) << dar.matrix(), daz.matrix(), (dan * r).matrix();
          carry = (dh.array() * z).matrix();
          carry.noalias() += wh.transpose() * dgh.col(t);
        }
        view_mut(grad, at(s.wx)).noalias() += dgx * lc.input.transpose();
        view_mut(grad, at(s.bx)) += dgx.rowwise().sum();
        view_mut(grad, at(s.wh)).noalias() += dgh * dc.hprev.transpose();
        view_mut(grad, at(s.bh)) += dgh.rowwise().sum();
        din.noalias() += wx.transpose() * dgx;
      }
      dseq = std::move(din);
    }

    if (cfg_.has_conv()) {
      const Matrix dact = (c.conv_pre.array() > 0.0).cast<double>().matrix().cwiseProduct(dseq);
      view_mut(grad, at(conv_w_)).noalias() += dact * c.conv_cols.transpose();
      view_mut(grad, at(conv_b_)) += dact.rowwise().sum();
    }
  }
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
public:
  Adam(Eigen::Index n, AdamConfig cfg)
      : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Vector &params, const Vector &grad) {
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    params.array() -= cfg_.learning_rate * (m_.array() / c1) /
                      ((v_.array() / c2).sqrt() + cfg_.epsilon);
  }

  long steps() const { return t_; }

private:
  AdamConfig cfg_;
  Vector m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then little-endian float32 parameters.

inline void save_checkpoint(const std::filesystem::path &path,
                            const SequenceModel &model, const json &extra = {}) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  json header{{"format", "pausebench-checkpoint-v1"},
              {"model", to_json(model.config())},
              {"parameter_count", model.parameter_count()}};
  json shapes = json::array();
  for (const auto &s : model.slots())
    shapes.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  header["shapes"] = shapes;
  if (!extra.is_null())
    header["extra"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write checkpoint " + path.string());
  out << header.dump() << "\n";
  const Vector &p = model.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const float v = static_cast<float>(p(i));
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff),
                       static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
}

struct LoadedCheckpoint {
  SequenceModel model;
  json header;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  json header = json::parse(line);
  SequenceModel model(model_config_from_json(header.at("model")));
  Vector p(model.parameter_count());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char *>(b), 4))
      throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                               std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
    float v;
    std::memcpy(&v, &bits, 4);
    p(i) = v;
  }
  model.set_parameters(p);
  return {std::move(model), std::move(header)};
}

} // namespace pausebench
