// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <random>

#include <pausebench/losses.hpp>

using namespace pausebench;
using Catch::Approx;

namespace {

Matrix one(double v) { return Matrix::Constant(1, 1, v); }
IntMatrix one_class(int c) { return IntMatrix::Constant(1, 1, c); }

DafParams plain_daf() {
  DafParams p;
  p.gamma = 0.0;
  return p;
}

// Relative error against a central difference; entries whose derivative is
// tiny are compared in absolute terms.
template <class F>
void check_gradient(const Matrix &x, const Matrix &analytic, F &&value) {
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix up = x, down = x;
    up(i) += h;
    down(i) -= h;
    const double numeric = (value(up) - value(down)) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-6});
    CHECK(std::abs(numeric - analytic(i)) / scale < 1e-4);
  }
}

} // namespace

TEST_CASE("huber examples") {
  CHECK(huber_loss(one(0.5), one(0.0)).value == 0.125);
  CHECK(huber_loss(one(2.0), one(0.0)).value == 1.5);
  for (double d : {0.3, 1.0, 2.5}) {
    CHECK(detail::huber(d, d) == Approx(0.5 * d * d));
    CHECK(detail::huber(std::nextafter(d, 10.0), d) == Approx(0.5 * d * d));
  }
  CHECK_THROWS(huber_loss(Matrix::Zero(2, 3), Matrix::Zero(3, 2)));
  CHECK_THROWS(huber_loss(one(0), one(0), 0.0));
}

TEST_CASE("DAF examples") {
  DafParams p;
  p.alpha = 2.0;
  p.gamma = 1.0;
  p.class_weights[2] = 3.0;
  CHECK(daf_loss(one(2.0), one(0.0), p, one_class(2)).value == Approx(18.0));

  const auto zero = daf_loss(one(1.0), one(1.0), p, one_class(1));
  CHECK(zero.value == 0.0);
  CHECK(zero.grad(0, 0) == 0.0);

  DafParams missing;
  missing.class_weights.erase(3);
  CHECK_THROWS_WITH(daf_loss(one(1.0), one(0.0), missing, one_class(3)),
                    Catch::Matchers::ContainsSubstring("class weight"));
}

TEST_CASE("DAF with unit focus equals Huber exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix pred(3, 7), target(3, 7);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      pred(i) = n(rng);
      target(i) = n(rng);
    }
    const IntMatrix cls = IntMatrix::Zero(3, 7);
    const auto h = huber_loss(pred, target);
    const auto d = daf_loss(pred, target, plain_daf(), cls);
    CHECK(h.value == d.value);
    CHECK(h.grad == d.grad);
  }
}

TEST_CASE("DAF scaling and sign") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_int_distribution<int> c(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix pred(2, 9), target(2, 9);
    IntMatrix cls(2, 9);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      pred(i) = n(rng);
      target(i) = c(rng);
      cls(i) = c(rng);
    }
    DafParams p;
    p.class_weights = {{0, 0.5}, {1, 2.0}, {2, 1.5}, {3, 3.0}};
    const double base = daf_loss(pred, target, p, cls).value;
    CHECK(base > 0.0);
    p.alpha = 3.5;
    CHECK(daf_loss(pred, target, p, cls).value == Approx(3.5 * base).epsilon(1e-12));
    CHECK(daf_loss(target, target, p, cls).value == 0.0);
  }
}

TEST_CASE("cross-entropy examples") {
  const Matrix uniform = Matrix::Zero(5, 4);
  const auto u = ce_loss(uniform, {0, 1, 2, 3, 1});
  CHECK(u.value == Approx(std::log(4.0)));
  Matrix confident = Matrix::Zero(2, 4);
  confident(0, 2) = 30.0;
  confident(1, 0) = 30.0;
  CHECK(ce_loss(confident, {2, 0}).value < 1e-4);
  CHECK_THROWS_AS(ce_loss(uniform, {0, 1, 2, 4, 0}), std::out_of_range);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  Matrix logits(20, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    logits(i) = n(rng);
  std::vector<int> t(20);
  for (int i = 0; i < 20; ++i)
    t[static_cast<std::size_t>(i)] = i % 4;
  const auto g = ce_loss(logits, t).grad;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    CHECK(std::abs(g.row(i).sum()) < 1e-15);
}

TEST_CASE("binary cross-entropy examples") {
  CHECK(bce_loss(one(0.5), one(1.0)).value == Approx(std::log(2.0)));
  CHECK(bce_loss(one(1.0), one(1.0)).value <= 1e-6);
  CHECK(bce_loss(one(0.0), one(0.0)).value <= 1e-6);
  CHECK(bce_loss(one(0.9), one(0.0)).value == Approx(2.302585).epsilon(1e-6));
  CHECK(std::isfinite(bce_loss(one(0.0), one(1.0)).value));
  CHECK_THROWS(bce_loss(one(0.5), one(0.5)));
}

TEST_CASE("huber is convex along segments") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(1, 6), b(1, 6), t(1, 6);
    for (int i = 0; i < 6; ++i) {
      a(i) = n(rng);
      b(i) = n(rng);
      t(i) = n(rng);
    }
    const double lam = u(rng);
    const Matrix mid = lam * a + (1 - lam) * b;
    const double chord = lam * huber_loss(a, t).value + (1 - lam) * huber_loss(b, t).value;
    CHECK(huber_loss(mid, t).value <= chord + 1e-12);
  }
}

TEST_CASE("analytic loss gradients match finite differences") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 3);
  std::uniform_real_distribution<double> prob(0.02, 0.98);

  auto away_from_kinks = [](const Matrix &pred, const Matrix &target, double delta) {
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      const double e = std::abs(pred(i) - target(i));
      if (e < 1e-3 || std::abs(e - delta) < 1e-3)
        return false;
    }
    return true;
  };

  for (int draw = 0; draw < 20; ++draw) {
    Matrix pred(2, 5), target(2, 5);
    IntMatrix classes(2, 5);
    do {
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        pred(i) = n(rng);
        target(i) = cls(rng);
        classes(i) = cls(rng);
      }
    } while (!away_from_kinks(pred, target, 1.0));

    check_gradient(pred, huber_loss(pred, target).grad,
                   [&](const Matrix &p) { return huber_loss(p, target).value; });

    DafParams dp;
    dp.alpha = 1.3;
    dp.gamma = 1.5;
    dp.class_weights = {{0, 0.7}, {1, 1.2}, {2, 2.0}, {3, 0.4}};
    check_gradient(pred, daf_loss(pred, target, dp, classes).grad,
                   [&](const Matrix &p) { return daf_loss(p, target, dp, classes).value; });

    Matrix logits(6, 4);
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      logits(i) = n(rng);
    std::vector<int> labels(6);
    for (auto &l : labels)
      l = cls(rng);
    check_gradient(logits, ce_loss(logits, labels).grad,
                   [&](const Matrix &l) { return ce_loss(l, labels).value; });

    Matrix p(3, 4), t(3, 4);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) = prob(rng);
      t(i) = cls(rng) % 2;
    }
    check_gradient(p, bce_loss(p, t).grad,
                   [&](const Matrix &q) { return bce_loss(q, t).value; });
  }
}

TEST_CASE("loss configuration round trip and class weights") {
  LossConfig c;
  c.kind = LossKind::DAF;
  c.daf.gamma = 1.0;
  c.daf.class_weights = {{0, 0.5}, {1, 1.0}, {2, 1.5}, {3, 1.0}};
  const auto back = loss_config_from_json(to_json(c));
  CHECK(back.kind == LossKind::DAF);
  CHECK(back.daf.gamma == 1.0);
  CHECK(back.daf.class_weights == c.daf.class_weights);
  CHECK_THROWS(loss_config_from_json(json{{"loss", "mse"}}));
  CHECK_THROWS(loss_config_from_json(json{{"loss", "daf"}, {"gamma", -1.0}}));

  const auto w = inverse_frequency_weights({FrameLabelSeq::from_codes({0, 0, 0, 1, 1, 2})});
  double mean = 0.0;
  for (const auto &[k, v] : w)
    mean += v / 4.0;
  CHECK(mean == Approx(1.0));
  CHECK(w.at(1) == Approx(1.5 * w.at(0)));
  CHECK(w.at(3) == w.at(2));
}
