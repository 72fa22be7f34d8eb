#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "segreg/detect.hpp"
#include "segreg/parallel.hpp"
#include "segreg/rng.hpp"
#include "segreg/simulate.hpp"
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

Dataset noise_free_dataset(Index n, Index p, std::uint64_t seed) {
  NormalStream stream(seed);
  RowMatrixXd x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) x(i, j) = stream.next();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = 1.0;
  Eigen::VectorXd y = x * beta;
  return make_dataset(std::move(x), std::move(y));
}

struct EnumBest {
  double objective = 0.0;
  std::vector<Index> cuts;
  Index k() const { return static_cast<Index>(cuts.size()) - 1; }
};

// Exhaustive enumeration of every valid segmentation, mirroring the DP's
// accumulation order (acc += loss + gamma, left to right) and tie rules
// (smaller k first, then right-to-left lexicographically smaller cuts).
std::optional<EnumBest> exhaustive_minimum(Detector& det, Index n, Index min_rows,
                                           Index kmax, double gamma) {
  std::optional<EnumBest> best;
  auto right_lex_smaller = [](const std::vector<Index>& a, const std::vector<Index>& b) {
    for (std::size_t i = a.size() - 1; i >= 1; --i) {
      if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
  };
  auto consider = [&](const std::vector<Index>& cuts) {
    double acc = 0.0;
    for (std::size_t j = 1; j < cuts.size(); ++j)
      acc += det.cache().fit(cuts[j - 1], cuts[j]).loss + gamma;
    const Index k = static_cast<Index>(cuts.size()) - 1;
    if (!best || acc < best->objective ||
        (acc == best->objective &&
         (k < best->k() ||
          (k == best->k() && right_lex_smaller(cuts, best->cuts))))) {
      best = EnumBest{acc, cuts};
    }
  };
  std::vector<Index> cuts{0};
  auto rec = [&](auto&& self, Index last) -> void {
    if (static_cast<Index>(cuts.size()) - 1 >= kmax) return;
    for (Index next = last + min_rows; next <= n; ++next) {
      cuts.push_back(next);
      if (next == n)
        consider(cuts);
      else
        self(self, next);
      cuts.pop_back();
    }
  };
  rec(rec, 0);
  return best;
}

DetectorConfig make_config(double lambda, double gamma, double delta) {
  DetectorConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = gamma;
  cfg.delta = delta;
  return cfg;
}

}  // namespace

TEST_CASE("h_cost: empty interval is free, full shrinkage pays ||Y||^2/n + gamma") {
  Dataset data = random_dataset(12, 2, 1);
  Detector det(data, make_config(1e4, 0.3, 0.25));
  CHECK(det.h_cost(5, 5) == 0.0);
  double ysq = 0.0;
  for (Index i = 2; i < 9; ++i) ysq += data.y[i] * data.y[i];
  CHECK(det.h_cost(2, 9) == Catch::Approx(ysq / 12.0 + 0.3));
}

TEST_CASE("h_cost equals an independently recomputed fit cost") {
  Dataset data = random_dataset(12, 2, 2);
  DetectorConfig cfg = make_config(0.2, 0.45, 0.25);
  Detector det(data, cfg);
  SegmentFit fit = interval_fit(data, make_interval(3, 10, 12), cfg.lambda, cfg.delta);
  CHECK(det.h_cost(3, 10) == Catch::Approx(fit.loss + cfg.gamma).epsilon(1e-12));
}

TEST_CASE("best_split returns u when the split range is empty") {
  Dataset data = random_dataset(12, 2, 3);
  Detector det(data, make_config(0.1, 0.2, 0.25));
  // margin = 3 rows; (0,5] has lo=3 > hi=2
  CHECK(det.best_split(0, 5) == 0);
}

TEST_CASE("best_split refuses to split homogeneous noise-free data") {
  Dataset data = noise_free_dataset(12, 2, 4);
  Detector det(data, make_config(0.0, 0.5, 0.25));
  CHECK(det.best_split(0, 12) == 0);
}

TEST_CASE("best_split lands near the true break on the two-segment model") {
  const Index n = 400, p = 800;
  const double delta = 0.25;
  const double lambda =
      std::sqrt(std::log(static_cast<double>(p)) / (delta * static_cast<double>(n)));
  GroundTruthModel truth = two_segment_model(p);
  Dataset data = sample_dataset(truth, n, 42);
  Detector det(data, make_config(lambda, 0.25 * lambda, delta));
  Index s = det.best_split(0, n);
  REQUIRE(s > 0);
  CHECK(std::abs(static_cast<double>(s) / n - 0.5) <= 0.05);
}

TEST_CASE("dp collapses to one segment when gamma dominates") {
  Dataset data = random_dataset(12, 2, 5);
  double gamma = 10.0 + data.y.squaredNorm() / 12.0;
  SegmentedModel model = dp_detect(data, make_config(0.1, gamma, 0.25));
  CHECK(model.k() == 1);
  CHECK(model.alpha.cuts == std::vector<Index>{0, 12});
}

TEST_CASE("dp matches exhaustive enumeration exactly") {
  Xoshiro256pp picker(2024);
  for (int instance = 0; instance < 40; ++instance) {
    const Index n = 4 + static_cast<Index>(picker.next() % 9);   // 4..12
    const Index p = 1 + static_cast<Index>(picker.next() % 3);   // 1..3
    const double delta = (picker.next() % 2 == 0) ? 0.25 : 1.0 / 3.0;
    const double lambda = 0.5 * picker.next_unit();
    const double gamma = 0.3 * picker.next_unit();
    if (min_segment_rows(n, delta) < 1) continue;
    Dataset data = random_dataset(n, p, 9000 + static_cast<std::uint64_t>(instance));
    DetectorConfig cfg = make_config(lambda, gamma, delta);

    Detector det(data, cfg);
    SegmentedModel model = det.dp();
    auto brute = exhaustive_minimum(det, n, cfg.min_rows(n), cfg.kmax(), gamma);
    REQUIRE(brute.has_value());
    CHECK(model.objective == brute->objective);
    CHECK(model.alpha.cuts == brute->cuts);
  }
}

TEST_CASE("dp output satisfies grid closure and the spacing bound") {
  Dataset data = random_dataset(11, 2, 6);
  DetectorConfig cfg = make_config(0.05, 0.01, 1.0 / 3.0);
  SegmentedModel model = dp_detect(data, cfg);
  CHECK(validate_alpha(model.alpha, 11, cfg.delta).ok);
  CHECK(model.k() <= cfg.kmax());
}

TEST_CASE("dp objective equals the sum of its parts") {
  Dataset data = random_dataset(12, 3, 7);
  DetectorConfig cfg = make_config(0.15, 0.1, 0.25);
  SegmentedModel model = dp_detect(data, cfg);
  double recomputed = 0.0;
  for (const auto& fit : model.fits) recomputed += fit.loss + cfg.gamma;
  CHECK(model.objective == Catch::Approx(recomputed).epsilon(1e-10));
}

TEST_CASE("dp_fixed_k: k = 1 is the single-segment fit") {
  Dataset data = random_dataset(12, 2, 8);
  SegmentedModel model = dp_fixed_k(data, 0.1, 0.25, 1);
  CHECK(model.alpha.cuts == std::vector<Index>{0, 12});
  SegmentFit whole = interval_fit(data, make_interval(0, 12, 12), 0.1, 0.25);
  CHECK(model.objective == whole.loss);  // gamma = 0 convention
}

TEST_CASE("dp_fixed_k: k = 2 equals the exhaustive single-split search") {
  Dataset data = random_dataset(12, 2, 9);
  const double lambda = 0.2, delta = 0.25;
  SegmentedModel model = dp_fixed_k(data, lambda, delta, 2);

  Detector det(data, make_config(lambda, 0.0, delta));
  double best = std::numeric_limits<double>::infinity();
  Index best_s = -1;
  for (Index s = 3; s + 3 <= 12; ++s) {
    double acc = det.cache().fit(0, s).loss + 0.0;
    acc += det.cache().fit(s, 12).loss + 0.0;
    if (acc < best) {
      best = acc;
      best_s = s;
    }
  }
  CHECK(model.objective == best);
  CHECK(model.alpha.cuts == std::vector<Index>{0, best_s, 12});
}

TEST_CASE("dp_fixed_k rejects infeasible k") {
  Dataset data = random_dataset(12, 2, 10);
  CHECK_THROWS_AS(dp_fixed_k(data, 0.1, 0.25, 5), std::invalid_argument);
  CHECK_THROWS_AS(dp_fixed_k(data, 0.1, 0.25, 0), std::invalid_argument);
  CHECK_THROWS_AS(dp_fixed_k(data, 0.1, 0.4, 3), std::invalid_argument);  // kmax = 2
}

TEST_CASE("dp_fixed_k loss is non-increasing in k for loss-minimizing fits") {
  // With lambda = 0 the per-segment fits minimize the segment loss itself,
  // so refining a segmentation can only lower the total.
  Dataset data = random_dataset(12, 2, 11);
  double prev = std::numeric_limits<double>::infinity();
  for (Index k = 1; k <= 4; ++k) {
    SegmentedModel model = dp_fixed_k(data, 0.0, 0.25, k);
    CHECK(model.objective <= prev + 1e-12);
    prev = model.objective;
  }
}

TEST_CASE("bs refuses to split single-segment noise-free data") {
  Dataset data = noise_free_dataset(12, 2, 12);
  SegmentedModel model = bs_detect(data, make_config(0.0, 0.5, 0.25));
  CHECK(model.k() == 1);
  CHECK(model.alpha.cuts == std::vector<Index>{0, 12});
}

TEST_CASE("bs tree children respect the split margins and terminals partition") {
  const Index n = 400, p = 800;
  const double delta = 0.25;
  const double lambda =
      std::sqrt(std::log(static_cast<double>(p)) / (delta * static_cast<double>(n)));
  Dataset data = sample_dataset(two_segment_model(p), n, 7);
  Detector det(data, make_config(lambda, 0.25 * lambda, delta));
  BsTree tree;
  SegmentedModel model = det.bs(&tree);

  const Index margin = split_margin_rows(n, delta);
  std::vector<Index> covered;
  for (const auto& node : tree) {
    if (node.left >= 0) {
      const auto& l = tree[static_cast<std::size_t>(node.left)];
      const auto& r = tree[static_cast<std::size_t>(node.right)];
      CHECK(l.interval.begin == node.interval.begin);
      CHECK(l.interval.end == r.interval.begin);
      CHECK(r.interval.end == node.interval.end);
      CHECK(l.interval.rows() >= margin);
      CHECK(r.interval.rows() >= margin);
    }
    if (node.terminal)
      for (Index i = node.interval.begin; i < node.interval.end; ++i)
        covered.push_back(i);
  }
  std::sort(covered.begin(), covered.end());
  REQUIRE(covered.size() == static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) CHECK(covered[static_cast<std::size_t>(i)] == i);
  CHECK(model.k() <= max_segment_count(delta));
}

TEST_CASE("bs never beats dp and matches it on identical alphas") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Dataset data = random_dataset(12, 2, 7000 + seed);
    DetectorConfig cfg = make_config(0.1, 0.02, 0.25);
    Detector det(data, cfg);
    SegmentedModel dp_model = det.dp();
    SegmentedModel bs_model = det.bs();
    CHECK(bs_model.objective >= dp_model.objective);
    if (bs_model.objective == dp_model.objective)
      CHECK(bs_model.alpha.cuts == dp_model.alpha.cuts);
  }
}

TEST_CASE("dp and bs agree on strong two-segment data") {
  const Index n = 200, p = 400;
  const double delta = 0.25;
  const double lambda =
      std::sqrt(std::log(static_cast<double>(p)) / (delta * static_cast<double>(n)));
  GroundTruthModel truth = two_segment_model(p);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Dataset data = sample_dataset(truth, n, seed);
    Detector det(data, make_config(lambda, 0.25 * lambda, delta));
    SegmentedModel dp_model = det.dp();
    SegmentedModel bs_model = det.bs();
    CHECK(dp_model.k() == 2);
    CHECK(std::abs(dp_model.alpha.fraction(1) - 0.5) <= 0.05);
    CHECK(bs_model.alpha.cuts == dp_model.alpha.cuts);
  }
}

TEST_CASE("bs finds three segments in a majority of three-segment replications") {
  const Index n = 400, p = 800;
  const double delta = 0.25;
  const double lambda =
      std::sqrt(std::log(static_cast<double>(p)) / (delta * static_cast<double>(n)));
  GroundTruthModel truth = three_segment_model(p);
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Dataset data = sample_dataset(truth, n, 300 + seed);
    SegmentedModel model = bs_detect(data, make_config(lambda, 0.25 * lambda, delta));
    if (model.k() == 3) ++exact;
  }
  CHECK(exact >= 3);
}

TEST_CASE("results are identical with the cache disabled") {
  Dataset data = random_dataset(12, 2, 77);
  DetectorConfig cfg = make_config(0.12, 0.05, 0.25);
  Detector cached(data, cfg, /*use_cache=*/true);
  Detector fresh(data, cfg, /*use_cache=*/false);
  SegmentedModel a = cached.dp();
  SegmentedModel b = fresh.dp();
  CHECK(a.alpha.cuts == b.alpha.cuts);
  CHECK(a.objective == b.objective);
  REQUIRE(a.fits.size() == b.fits.size());
  for (std::size_t j = 0; j < a.fits.size(); ++j) {
    CHECK(a.fits[j].beta == b.fits[j].beta);
    CHECK(a.fits[j].loss == b.fits[j].loss);
  }
  SegmentedModel ab = cached.bs();
  SegmentedModel bb = fresh.bs();
  CHECK(ab.alpha.cuts == bb.alpha.cuts);
  CHECK(ab.objective == bb.objective);
}

TEST_CASE("dp cache misses grow quadratically, bs misses roughly linearly") {
  auto dp_misses = [](Index n) {
    Dataset data = noise_free_dataset(n, 2, 5000 + static_cast<std::uint64_t>(n));
    Detector det(data, make_config(0.05, 0.4, 0.25));
    det.dp();
    return static_cast<double>(det.cache().stats().misses);
  };
  auto bs_misses = [](Index n) {
    Dataset data = noise_free_dataset(n, 2, 5000 + static_cast<std::uint64_t>(n));
    Detector det(data, make_config(0.05, 0.4, 0.25));
    det.bs();
    return static_cast<double>(det.cache().stats().misses);
  };
  // expected distinct fits for the dp: the (0,v] column plus all (u,v] with
  // u >= L, v - u >= L
  auto dp_expected = [](Index n) {
    const Index L = min_segment_rows(n, 0.25);
    double count = static_cast<double>(n - L + 1);
    for (Index u = L; u + L <= n; ++u) count += static_cast<double>(n - (u + L) + 1);
    return count;
  };
  CHECK(dp_misses(40) == dp_expected(40));
  CHECK(dp_misses(80) == dp_expected(80));
  const double dp_ratio = dp_misses(80) / dp_misses(40);
  CHECK(dp_ratio > 3.2);
  CHECK(dp_ratio < 4.8);
  const double bs_ratio = bs_misses(80) / bs_misses(40);
  CHECK(bs_ratio > 1.2);
  CHECK(bs_ratio < 3.0);
}

TEST_CASE("outputs are identical at any thread count") {
  Dataset data = sample_dataset(two_segment_model(60), 60, 99);
  DetectorConfig cfg = make_config(0.3, 0.05, 0.25);

  parallel::set_max_threads(1);
  Detector det1(data, cfg);
  SegmentedModel dp1 = det1.dp();
  SegmentedModel bs1 = det1.bs();

  parallel::set_max_threads(4);
  Detector det4(data, cfg);
  SegmentedModel dp4 = det4.dp();
  SegmentedModel bs4 = det4.bs();
  parallel::set_max_threads(0);

  CHECK(dp1.alpha.cuts == dp4.alpha.cuts);
  CHECK(dp1.objective == dp4.objective);
  CHECK(bs1.alpha.cuts == bs4.alpha.cuts);
  CHECK(bs1.objective == bs4.objective);
  REQUIRE(dp1.fits.size() == dp4.fits.size());
  for (std::size_t j = 0; j < dp1.fits.size(); ++j)
    CHECK(dp1.fits[j].beta == dp4.fits[j].beta);
}
