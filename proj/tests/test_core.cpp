#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "segreg/lasso.hpp"
#include "segreg/rng.hpp"
#include "segreg/types.hpp"

using namespace segreg;

namespace {

Dataset random_dataset(Index n, Index p, std::uint64_t seed) {
  NormalStream stream(seed);
  RowMatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) x(i, j) = stream.next();
    y[i] = stream.next();
  }
  return make_dataset(std::move(x), std::move(y));
}

}  // namespace

TEST_CASE("alpha validation accepts the canonical two-segment vector") {
  Alpha alpha = alpha_from_fractions({0.0, 0.5, 1.0}, 10);
  auto res = validate_alpha(alpha, 10, 0.25);
  CHECK(res.ok);
  CHECK(alpha.segment_count() == 2);
  CHECK(alpha.min_spacing() == Catch::Approx(0.5));
}

TEST_CASE("alpha validation reports ordering violations") {
  Alpha alpha = alpha_from_fractions({0.0, 0.5, 0.4, 1.0}, 10);
  auto res = validate_alpha(alpha, 10, 0.1);
  CHECK_FALSE(res.ok);
  CHECK(res.message.find("not increasing") != std::string::npos);
}

TEST_CASE("alpha validation reports spacing violations") {
  Alpha alpha = alpha_from_fractions({0.0, 0.1, 1.0}, 10);
  auto res = validate_alpha(alpha, 10, 0.25);
  CHECK_FALSE(res.ok);
  CHECK(res.message.find("r(alpha)=0.1 < delta") != std::string::npos);
}

TEST_CASE("alpha validation checks endpoints and grid membership") {
  CHECK_FALSE(validate_alpha(alpha_from_fractions({0.0, 0.5}, 10), 10, 0.1).ok);
  CHECK_FALSE(validate_alpha(alpha_from_fractions({0.1, 0.5, 1.0}, 10), 10, 0.1).ok);
  CHECK_THROWS_AS(alpha_from_fractions({0.0, 0.15, 1.0}, 10), std::invalid_argument);
  // duplicate points are rejected (adding a change point at an existing one)
  auto res = validate_alpha(alpha_from_fractions({0.0, 0.5, 0.5, 1.0}, 10), 10, 0.1);
  CHECK_FALSE(res.ok);
  CHECK(res.message.find("not increasing") != std::string::npos);
}

TEST_CASE("grid roundings survive rational delta") {
  // 12 * (1/3) = 3.9999999999999996 in doubles; the guard keeps floor at 4.
  CHECK(min_segment_rows(12, 1.0 / 3.0) == 4);
  CHECK(max_segment_count(1.0 / 3.0) == 3);
  CHECK(split_margin_rows(12, 1.0 / 3.0) == 4);
  CHECK(min_segment_rows(10, 0.25) == 2);
  CHECK(max_segment_count(0.25) == 4);
  CHECK(split_margin_rows(319, 0.1) == 32);
}

TEST_CASE("segment_loss matches hand arithmetic") {
  RowMatrixXd x(2, 1);
  x << 1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 3.0;
  Dataset data = make_dataset(x, y);
  Eigen::VectorXd beta(1);
  beta << 2.0;
  // ((1-2)^2 + (3-2)^2) / 2 = 1
  CHECK(segment_loss(data, make_interval(0, 2, 2), beta) == Catch::Approx(1.0));
}

TEST_CASE("segment_loss is zero on a noise-free fit and ||Y||^2/n at beta = 0") {
  NormalStream stream(7);
  RowMatrixXd x(6, 2);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 2; ++j) x(i, j) = stream.next();
  Eigen::VectorXd beta0(2);
  beta0 << 1.5, -0.5;
  Eigen::VectorXd y = x * beta0;
  Dataset data = make_dataset(x, y);

  CHECK(segment_loss(data, make_interval(1, 5, 6), beta0) == 0.0);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const Interval iv = make_interval(2, 6, 6);
  double expect = 0.0;
  for (Index i = 2; i < 6; ++i) expect += y[i] * y[i];
  CHECK(segment_loss(data, iv, zero) == Catch::Approx(expect / 6.0));
}

TEST_CASE("segment_loss rejects dimension mismatches") {
  Dataset data = random_dataset(4, 2, 3);
  Eigen::VectorXd beta(3);
  beta.setZero();
  CHECK_THROWS_AS(segment_loss(data, make_interval(0, 4, 4), beta),
                  std::invalid_argument);
}

TEST_CASE("segment_loss is additive across a cut") {
  // Integer-valued rows and n = 8 keep every partial sum and the division
  // exact, so additivity holds bit for bit.
  RowMatrixXd x(8, 1);
  Eigen::VectorXd y(8);
  for (Index i = 0; i < 8; ++i) {
    x(i, 0) = static_cast<double>(i % 3);
    y[i] = static_cast<double>(2 * (i % 4));
  }
  Dataset data = make_dataset(x, y);
  Eigen::VectorXd beta(1);
  beta << 2.0;
  for (Index w = 1; w < 8; ++w) {
    double whole = segment_loss(data, make_interval(0, 8, 8), beta);
    double left = segment_loss(data, make_interval(0, w, 8), beta);
    double right = segment_loss(data, make_interval(w, 8, 8), beta);
    CHECK(whole == left + right);
  }

  // Random data: additivity up to roundoff.
  Dataset rnd = random_dataset(9, 2, 11);
  Eigen::VectorXd b(2);
  b << 0.3, -1.2;
  double whole = segment_loss(rnd, make_interval(0, 9, 9), b);
  double parts = segment_loss(rnd, make_interval(0, 4, 9), b) +
                 segment_loss(rnd, make_interval(4, 9, 9), b);
  CHECK(whole == Catch::Approx(parts).epsilon(1e-13));
}

TEST_CASE("dataset construction validates shapes and finiteness") {
  RowMatrixXd x(3, 2);
  x.setOnes();
  Eigen::VectorXd y(2);
  y.setOnes();
  CHECK_THROWS_AS(make_dataset(x, y), std::invalid_argument);

  Eigen::VectorXd y3(3);
  y3 << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK_THROWS_AS(make_dataset(x, y3), std::invalid_argument);

  RowMatrixXd x1(1, 2);
  x1.setOnes();
  Eigen::VectorXd y1(1);
  y1.setOnes();
  CHECK_THROWS_AS(make_dataset(x1, y1), std::invalid_argument);
}

TEST_CASE("detector config validation") {
  DetectorConfig cfg;
  cfg.delta = 0.25;
  CHECK_NOTHROW(cfg.validate(10));
  cfg.delta = 0.7;
  CHECK_THROWS_AS(cfg.validate(10), std::invalid_argument);
  cfg.delta = 0.05;  // floor(0.05 * 10) = 0
  CHECK_THROWS_AS(cfg.validate(10), std::invalid_argument);
  cfg.delta = 0.25;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(10), std::invalid_argument);
}

TEST_CASE("objective_G equals loss + gamma on a single segment") {
  Dataset data = random_dataset(10, 2, 21);
  DetectorConfig cfg;
  cfg.lambda = 0.3;
  cfg.gamma = 0.7;
  cfg.delta = 0.25;
  Alpha whole = alpha_from_fractions({0.0, 1.0}, 10);
  SegmentFit fit = interval_fit(data, make_interval(0, 10, 10), cfg.lambda, cfg.delta);
  CHECK(objective_g(data, whole, cfg) == fit.loss + cfg.gamma);
}

TEST_CASE("objective_G vanishes for a noise-free single segment at lambda 0") {
  NormalStream stream(5);
  RowMatrixXd x(12, 2);
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 2; ++j) x(i, j) = stream.next();
  Eigen::VectorXd beta0(2);
  beta0 << 1.0, -2.0;
  Dataset data = make_dataset(x, x * beta0);
  DetectorConfig cfg;
  cfg.lambda = 0.0;
  cfg.gamma = 0.0;
  cfg.delta = 0.5;
  Alpha whole = alpha_from_fractions({0.0, 1.0}, 12);
  CHECK(objective_g(data, whole, cfg) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("objective_G matches an independently assembled sum of interval fits") {
  Dataset data = random_dataset(12, 2, 33);
  DetectorConfig cfg;
  cfg.lambda = 0.2;
  cfg.gamma = 0.4;
  cfg.delta = 0.25;
  Alpha alpha = alpha_from_fractions({0.0, 0.25, 0.75, 1.0}, 12);

  double expected = 0.0;
  for (Index j = 0; j < alpha.segment_count(); ++j) {
    Interval seg = alpha.segment(j);
    // independent route: block solve + direct loss evaluation
    RowMatrixXd xb = data.x.middleRows(seg.begin, seg.rows());
    Eigen::VectorXd yb = data.y.segment(seg.begin, seg.rows());
    double weight = cfg.lambda / std::sqrt(std::max(seg.length(), cfg.delta));
    LassoSolution sol = lasso_solve(xb, yb, weight);
    expected += segment_loss(data, seg, sol.beta) + cfg.gamma;
  }
  CHECK(objective_g(data, alpha, cfg) ==
        Catch::Approx(expected).epsilon(1e-10));

  // the extended form accepts segments shorter than delta
  Alpha tight = alpha_from_fractions({0.0, 1.0 / 12.0, 1.0}, 12);
  CHECK_NOTHROW(objective_g(data, tight, cfg));
}

TEST_CASE("objective_G is deterministic across repeated evaluation") {
  Dataset data = random_dataset(12, 3, 44);
  DetectorConfig cfg;
  cfg.lambda = 0.15;
  cfg.gamma = 0.3;
  cfg.delta = 0.25;
  Alpha alpha = alpha_from_fractions({0.0, 0.5, 1.0}, 12);
  double a = objective_g(data, alpha, cfg);
  double b = objective_g(data, alpha, cfg);
  CHECK(a == b);
}
