// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <random>

#include <pausebench/exertion.hpp>

using namespace pausebench;

TEST_CASE("exertion clustering") {
  CHECK(cluster_exertion(1).binary == ExertionClass::Low);
  CHECK(cluster_exertion(2).binary == ExertionClass::Low);
  CHECK(cluster_exertion(3).binary == ExertionClass::High);
  CHECK(cluster_exertion(4).binary == ExertionClass::High);
  CHECK(cluster_exertion(5).binary == ExertionClass::High);
  CHECK(cluster_exertion(4).raw_level == 4);
  CHECK(cluster_exertion(2).rank() == 1);
  CHECK(cluster_exertion(5).rank() == 2);
  CHECK_THROWS_AS(cluster_exertion(0), std::out_of_range);
  CHECK_THROWS_AS(cluster_exertion(6), std::out_of_range);
  // idempotent on its image: a representative level of each class maps back to it
  for (int raw = 1; raw <= 5; ++raw) {
    const auto c = cluster_exertion(raw).binary;
    CHECK(cluster_exertion(c == ExertionClass::Low ? 1 : 5).binary == c);
  }
}

TEST_CASE("temporal pooling") {
  Matrix constant(5, 3);
  constant.rowwise() = Eigen::RowVector3d(1.0, -2.0, 0.5);
  CHECK(pool_features(constant) == Eigen::Vector3d(1.0, -2.0, 0.5));
  Matrix two(2, 2);
  two << 1.0, 4.0, 3.0, -2.0;
  CHECK(pool_features(two).isApprox(Eigen::Vector2d(2.0, 1.0)));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix x(7, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = n(rng);
  Matrix reversed = x.colwise().reverse();
  CHECK(pool_features(reversed).isApprox(pool_features(x), 1e-14));
  CHECK_THROWS(pool_features(Matrix(0, 4)));
}

TEST_CASE("ordinal targets") {
  const Matrix t = ordinal_targets({1, 2, 3}, 3);
  Matrix expected(3, 2);
  expected << 0, 0, 1, 0, 1, 1;
  CHECK(t == expected);
  CHECK_THROWS(ordinal_targets({4}, 3));
  CHECK_THROWS(ordinal_targets({1}, 1));
}

TEST_CASE("CORAL loss examples") {
  CHECK(coral_loss(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0)).value ==
        Catch::Approx(std::log(2.0)));
  Matrix perfect(2, 2), target(2, 2);
  perfect << 1.0, 0.0, 1.0, 1.0;
  target = perfect;
  CHECK(coral_loss(perfect, target).value <= 1e-6);
  Matrix bad(1, 2), p(1, 2);
  bad << 0.0, 1.0;
  p << 0.4, 0.6;
  CHECK_THROWS_WITH(coral_loss(p, bad), Catch::Matchers::ContainsSubstring("ordinal"));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 100; ++i) {
    Matrix q(6, 1), t(6, 1);
    for (int r = 0; r < 6; ++r) {
      q(r) = u(rng);
      t(r) = u(rng) > 0.5 ? 1.0 : 0.0;
    }
    const auto c = coral_loss(q, t), b = bce_loss(q, t);
    CHECK(c.value == b.value);
    CHECK(c.grad == b.grad);
  }
}

TEST_CASE("CORAL prediction rule") {
  CHECK(coral_predict_from_probabilities(Eigen::Vector2d(0.9, 0.2)) == 2);
  CHECK(coral_predict_from_probabilities(Eigen::Vector3d(0.1, 0.05, 0.0)) == 1);
  CHECK(coral_predict_from_probabilities(Eigen::Vector3d(0.9, 0.8, 0.7)) == 4);
}

TEST_CASE("CORAL probabilities are rank consistent") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    CoralHead head(5, 5, static_cast<std::uint64_t>(trial));
    for (Eigen::Index i = 0; i < head.parameters().size(); ++i)
      head.parameters()(i) = n(rng);
    Matrix x(4, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x(i) = n(rng);
    const Vector b = head.thresholds();
    for (Eigen::Index k = 1; k < b.size(); ++k)
      CHECK(b(k) <= b(k - 1));
    const Matrix p = head.probabilities(x);
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index k = 1; k < p.cols(); ++k)
        CHECK(p(r, k) <= p(r, k - 1));
  }
}

TEST_CASE("CORAL gradients match finite differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> cls(1, 4);
  for (int draw = 0; draw < 100; ++draw) {
    CoralHead head(3, 4, static_cast<std::uint64_t>(draw));
    for (Eigen::Index i = 0; i < head.parameters().size(); ++i)
      head.parameters()(i) = n(rng);
    Matrix x(5, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x(i) = n(rng);
    std::vector<int> y(5);
    for (auto &v : y)
      v = cls(rng);
    const auto [value, grad] = head.loss_and_gradient(x, y);
    const Vector base = head.parameters();
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      const double h = 1e-5;
      head.parameters() = base;
      head.parameters()(i) += h;
      const double plus = head.loss_and_gradient(x, y).first;
      head.parameters()(i) -= 2 * h;
      const double minus = head.loss_and_gradient(x, y).first;
      const double numeric = (plus - minus) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(grad(i)), 1e-6});
      CHECK(std::abs(numeric - grad(i)) / scale < 1e-4);
    }
    head.parameters() = base;
    CHECK(value > 0.0);
  }
}

TEST_CASE("CORAL training separates pooled features") {
  std::mt19937_64 rng(30);
  std::normal_distribution<double> n;
  Matrix x(80, 6);
  std::vector<int> y(80);
  for (int i = 0; i < 80; ++i) {
    y[static_cast<std::size_t>(i)] = cluster_exertion(1 + i % 5).rank();
    for (int j = 0; j < 6; ++j)
      x(i, j) = n(rng) + (j == 2 ? 5.0 * y[static_cast<std::size_t>(i)] : 0.0);
  }
  const auto model = train_coral(x, y, 2, CoralTrainConfig{});
  int hit = 0;
  for (int i = 0; i < 80; ++i)
    hit += model.predict(x.row(i).transpose()) == y[static_cast<std::size_t>(i)] ? 1 : 0;
  CHECK(hit >= 76);
  CHECK_THROWS(train_coral(x, {1, 2}, 2, CoralTrainConfig{}));
}
