#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace segreg {

using Index = Eigen::Index;
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Guard for grid roundings of tuning fractions that are rationals such as
/// 1/3: 12 * (1/3) evaluates to 3.9999999999999996 in doubles and must still
/// floor to 4.
inline constexpr double grid_round_eps = 1e-9;

/// Minimal segment length in rows, floor(delta * n).
inline Index min_segment_rows(Index n, double delta) {
  return static_cast<Index>(std::floor(delta * static_cast<double>(n) + grid_round_eps));
}

/// Upper bound on the number of segments, floor(1 / delta).
inline Index max_segment_count(double delta) {
  return static_cast<Index>(std::floor(1.0 / delta + grid_round_eps));
}

/// Margin in rows used by the binary-segmentation split search,
/// ceil(delta * n).
inline Index split_margin_rows(Index n, double delta) {
  return static_cast<Index>(std::ceil(delta * static_cast<double>(n) - grid_round_eps));
}

/// Ordered sample of (y_i, x_i) rows. Row order carries the change point
/// structure; there is no index column and no intercept.
struct Dataset {
  RowMatrixXd x;       // n x p covariates
  Eigen::VectorXd y;   // n responses

  Index n() const { return y.size(); }
  Index p() const { return x.cols(); }
};

/// Validates and assembles a Dataset: matching lengths, finite entries,
/// n >= 2, p >= 1.
inline Dataset make_dataset(RowMatrixXd x, Eigen::VectorXd y) {
  if (y.size() != x.rows()) {
    std::ostringstream msg;
    msg << "dataset: y has " << y.size() << " entries but x has " << x.rows()
        << " rows";
    throw std::invalid_argument(msg.str());
  }
  if (y.size() < 2) throw std::invalid_argument("dataset: need at least 2 rows");
  if (x.cols() < 1) throw std::invalid_argument("dataset: need at least 1 covariate");
  if (!y.allFinite()) throw std::invalid_argument("dataset: non-finite entry in y");
  if (!x.allFinite()) throw std::invalid_argument("dataset: non-finite entry in x");
  return Dataset{std::move(x), std::move(y)};
}

/// Half-open row range [begin, end) standing for the grid interval
/// (begin/n, end/n]. All interval arithmetic is integer; fractions appear
/// only at the API boundary.
struct Interval {
  Index begin = 0;
  Index end = 0;
  Index n = 0;

  Index rows() const { return end - begin; }
  double u() const { return static_cast<double>(begin) / static_cast<double>(n); }
  double v() const { return static_cast<double>(end) / static_cast<double>(n); }
  double length() const { return static_cast<double>(rows()) / static_cast<double>(n); }

  friend bool operator==(const Interval&, const Interval&) = default;
};

inline Interval make_interval(Index begin, Index end, Index n) {
  if (n < 1 || begin < 0 || end > n || begin >= end) {
    std::ostringstream msg;
    msg << "interval: (" << begin << ", " << end << "] is not a valid row range for n=" << n;
    throw std::invalid_argument(msg.str());
  }
  return Interval{begin, end, n};
}

/// Converts a fraction in [0,1] to its row index, requiring it to sit on the
/// grid {i/n} up to grid_round_eps.
inline Index fraction_to_row(double fraction, Index n) {
  double scaled = fraction * static_cast<double>(n);
  double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-6 || rounded < 0.0 ||
      rounded > static_cast<double>(n)) {
    std::ostringstream msg;
    msg << "fraction " << fraction << " is not a grid point i/" << n;
    throw std::invalid_argument(msg.str());
  }
  return static_cast<Index>(rounded);
}

inline Interval interval_from_fractions(double u, double v, Index n) {
  return make_interval(fraction_to_row(u, n), fraction_to_row(v, n), n);
}

/// Change point vector: cut rows 0 = c_0 <= ... <= c_k = n standing for grid
/// fractions. Construction does not enforce ordering; validate_alpha reports
/// the first violated invariant.
struct Alpha {
  std::vector<Index> cuts;  // row indices, expected 0 = first, n = last
  Index n = 0;

  Index segment_count() const {
    return static_cast<Index>(cuts.size()) - 1;
  }
  double fraction(std::size_t j) const {
    return static_cast<double>(cuts[j]) / static_cast<double>(n);
  }
  std::vector<double> fractions() const {
    std::vector<double> out(cuts.size());
    for (std::size_t j = 0; j < cuts.size(); ++j) out[j] = fraction(j);
    return out;
  }
  Interval segment(Index j) const {  // j in [0, segment_count)
    return Interval{cuts[static_cast<std::size_t>(j)],
                    cuts[static_cast<std::size_t>(j) + 1], n};
  }
  Index min_rows() const {
    Index best = std::numeric_limits<Index>::max();
    for (std::size_t j = 1; j < cuts.size(); ++j)
      best = std::min(best, cuts[j] - cuts[j - 1]);
    return best;
  }
  /// r(alpha): the smallest segment length as a fraction.
  double min_spacing() const {
    return static_cast<double>(min_rows()) / static_cast<double>(n);
  }

  friend bool operator==(const Alpha&, const Alpha&) = default;
};

inline Alpha alpha_from_rows(std::vector<Index> cuts, Index n) {
  return Alpha{std::move(cuts), n};
}

inline Alpha alpha_from_fractions(const std::vector<double>& fractions, Index n) {
  std::vector<Index> cuts(fractions.size());
  for (std::size_t j = 0; j < fractions.size(); ++j)
    cuts[j] = fraction_to_row(fractions[j], n);
  return Alpha{std::move(cuts), n};
}

struct ValidationResult {
  bool ok = true;
  std::string message;
};

/// Checks the Alpha invariants and the minimal spacing r(alpha) >= delta
/// (delta * n rounded down to whole rows). Returns the first violation.
inline ValidationResult validate_alpha(const Alpha& alpha, Index n, double delta) {
  std::ostringstream msg;
  if (alpha.n != n) {
    msg << "alpha grid size " << alpha.n << " does not match n=" << n;
    return {false, msg.str()};
  }
  if (alpha.cuts.size() < 2) return {false, "alpha needs at least two points"};
  if (alpha.cuts.front() != 0) {
    msg << "alpha[0] = " << alpha.fraction(0) << ", expected 0";
    return {false, msg.str()};
  }
  if (alpha.cuts.back() != n) {
    msg << "alpha[" << alpha.cuts.size() - 1 << "] = "
        << alpha.fraction(alpha.cuts.size() - 1) << ", expected 1";
    return {false, msg.str()};
  }
  for (std::size_t j = 1; j < alpha.cuts.size(); ++j) {
    if (alpha.cuts[j] <= alpha.cuts[j - 1]) {
      msg << "not increasing: alpha[" << j - 1 << "]=" << alpha.fraction(j - 1)
          << " >= alpha[" << j << "]=" << alpha.fraction(j);
      return {false, msg.str()};
    }
  }
  Index min_rows = min_segment_rows(n, delta);
  if (min_rows < 1) {
    msg << "floor(delta*n) = " << min_rows << " < 1 (delta=" << delta << ", n=" << n << ")";
    return {false, msg.str()};
  }
  if (alpha.min_rows() < min_rows) {
    msg << "r(alpha)=" << alpha.min_spacing() << " < delta=" << delta;
    return {false, msg.str()};
  }
  return {true, ""};
}

/// Tuning parameters shared by both detectors.
struct DetectorConfig {
  double lambda = 0.0;            // sparsity penalty
  double gamma = 0.0;             // per-segment penalty
  double delta = 0.25;            // minimal segment fraction, in (0, 0.5]
  double solver_tol = 1e-8;       // max coordinate change per sweep
  long solver_max_sweeps = 100000;

  void validate(Index n) const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("config: gamma must be >= 0");
    if (!(delta > 0.0) || delta > 0.5)
      throw std::invalid_argument("config: delta must be in (0, 0.5]");
    if (!(solver_tol > 0.0)) throw std::invalid_argument("config: solver_tol must be > 0");
    if (solver_max_sweeps < 1)
      throw std::invalid_argument("config: solver_max_sweeps must be >= 1");
    if (min_segment_rows(n, delta) < 1) {
      std::ostringstream msg;
      msg << "config: floor(delta*n) = 0 for delta=" << delta << ", n=" << n;
      throw std::invalid_argument(msg.str());
    }
  }

  Index min_rows(Index n) const { return min_segment_rows(n, delta); }
  Index kmax() const { return max_segment_count(delta); }
};

/// L_n: squared residual norm over the interval rows divided by the total
/// sample size n (not the segment size). Rows accumulate in ascending order.
inline double segment_loss(const Dataset& data, const Interval& iv,
                           const Eigen::Ref<const Eigen::VectorXd>& beta) {
  if (beta.size() != data.p()) {
    std::ostringstream msg;
    msg << "segment_loss: beta has " << beta.size() << " coefficients, expected "
        << data.p();
    throw std::invalid_argument(msg.str());
  }
  if (iv.n != data.n() || iv.begin < 0 || iv.end > data.n() || iv.begin >= iv.end)
    throw std::invalid_argument("segment_loss: interval not valid for dataset");
  double acc = 0.0;
  for (Index i = iv.begin; i < iv.end; ++i) {
    double r = data.y[i] - data.x.row(i).dot(beta);
    acc += r * r;
  }
  return acc / static_cast<double>(data.n());
}

}  // namespace segreg
