#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "segreg/detect.hpp"
#include "segreg/simulate.hpp"
#include "segreg/types.hpp"

namespace segreg {

/// Train/test split for ordered data: odd positions (1-based) train, even
/// positions test, both preserving the original order.
inline std::pair<Dataset, Dataset> ordered_split(const Dataset& data) {
  const Index n = data.n();
  const Index n_train = (n + 1) / 2;
  const Index n_test = n / 2;
  RowMatrixXd x_train(n_train, data.p()), x_test(n_test, data.p());
  Eigen::VectorXd y_train(n_train), y_test(n_test);
  for (Index i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      x_train.row(i / 2) = data.x.row(i);
      y_train[i / 2] = data.y[i];
    } else {
      x_test.row(i / 2) = data.x.row(i);
      y_test[i / 2] = data.y[i];
    }
  }
  return {Dataset{std::move(x_train), std::move(y_train)},
          Dataset{std::move(x_test), std::move(y_test)}};
}

/// Test residual sum of squares under a fitted segmentation. Test row i
/// (1-based) belongs to segment j iff i/n_test lies in (alpha_{j-1}, alpha_j];
/// the membership test is exact integer arithmetic across the two grids.
inline double predict_rss(const Alpha& alpha_hat,
                          const std::vector<Eigen::VectorXd>& betas_hat,
                          const Dataset& test) {
  if (static_cast<Index>(betas_hat.size()) != alpha_hat.segment_count())
    throw std::invalid_argument("predict_rss: one beta per segment required");
  const Index n_test = test.n();
  const Index n_alpha = alpha_hat.n;
  double acc = 0.0;
  std::size_t seg = 0;
  for (Index i = 1; i <= n_test; ++i) {
    // advance while i/n_test > alpha_seg+1 = cuts[seg+1]/n_alpha
    while (seg + 1 < alpha_hat.cuts.size() - 1 &&
           i * n_alpha > alpha_hat.cuts[seg + 1] * n_test)
      ++seg;
    const double r = test.y[i - 1] - test.x.row(i - 1).dot(betas_hat[seg]);
    acc += r * r;
  }
  return acc;
}

inline double predict_rss(const SegmentedModel& model, const Dataset& test) {
  std::vector<Eigen::VectorXd> betas;
  betas.reserve(model.fits.size());
  for (const auto& fit : model.fits) betas.push_back(fit.dense(test.p()));
  return predict_rss(model.alpha, betas, test);
}

struct CvCell {
  double lambda = 0.0;
  Index k = 0;
  std::optional<double> test_rss;  // absent for infeasible k
  std::optional<Alpha> alpha;
};

/// Grid of (lambda, k) cells with the argmin under the tie rule
/// smallest k, then smallest lambda.
struct CvResult {
  std::vector<CvCell> cells;  // lambda-major, k-minor order
  std::size_t argmin = 0;     // index into cells

  const CvCell& best() const { return cells[argmin]; }
};

struct CvConfig {
  double delta = 0.1;
  double solver_tol = 1e-8;
  long solver_max_sweeps = 100000;
};

/// Ordered-data cross-validation: for each lambda, fit the exact DP with
/// k segments on the odd-row train split (k is the tuning knob; gamma drops
/// out) and score the residual sum of squares on the even-row test split.
inline CvResult cv_grid(const Dataset& data, const std::vector<double>& lambda_grid,
                        const std::vector<Index>& k_range, const CvConfig& cfg = {}) {
  if (lambda_grid.empty() || k_range.empty())
    throw std::invalid_argument("cv_grid: grids must be nonempty");
  auto [train, test] = ordered_split(data);

  CvResult result;
  result.cells.reserve(lambda_grid.size() * k_range.size());
  for (double lambda : lambda_grid) {
    DetectorConfig dcfg;
    dcfg.lambda = lambda;
    dcfg.gamma = 0.0;
    dcfg.delta = cfg.delta;
    dcfg.solver_tol = cfg.solver_tol;
    dcfg.solver_max_sweeps = cfg.solver_max_sweeps;
    Detector det(train, dcfg);
    for (Index k : k_range) {
      CvCell cell;
      cell.lambda = lambda;
      cell.k = k;
      try {
        SegmentedModel model = det.dp_fixed_k(k);
        cell.test_rss = predict_rss(model, test);
        cell.alpha = model.alpha;
      } catch (const std::invalid_argument&) {
        // infeasible k for this split: recorded as absent
      }
      result.cells.push_back(std::move(cell));
    }
  }

  bool found = false;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const CvCell& c = result.cells[i];
    if (!c.test_rss.has_value()) continue;
    const CvCell& b = result.cells[result.argmin];
    const bool better =
        !found || *c.test_rss < best ||
        (*c.test_rss == best && (c.k < b.k || (c.k == b.k && c.lambda < b.lambda)));
    if (better) {
      best = *c.test_rss;
      result.argmin = i;
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("cv_grid: every (lambda, k) cell infeasible");
  return result;
}

/// Comparison of an estimated segmentation with the generating truth.
struct EvalReport {
  Index k_hat = 0;
  Alpha alpha_hat;
  bool k_match = false;
  std::optional<double> alpha_l1_error;  // requires k_hat == k0
  std::optional<double> first_cp_error;  // requires k_hat >= 2
};

inline EvalReport evaluate(const SegmentedModel& estimated,
                           const GroundTruthModel& truth) {
  EvalReport report;
  report.k_hat = estimated.k();
  report.alpha_hat = estimated.alpha;
  report.k_match = (report.k_hat == truth.segment_count());
  if (report.k_match) {
    double acc = 0.0;
    for (std::size_t j = 0; j < truth.alpha0.size(); ++j)
      acc += std::abs(estimated.alpha.fraction(j) - truth.alpha0[j]);
    report.alpha_l1_error = acc;
  }
  if (report.k_hat >= 2)
    report.first_cp_error = std::abs(estimated.alpha.fraction(1) - truth.alpha0[1]);
  return report;
}

}  // namespace segreg
