#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "segreg/rng.hpp"
#include "segreg/types.hpp"

namespace segreg {

enum class CovKind { identity, toeplitz, equicorr };

/// Covariance structure of the covariate rows. toeplitz: S_ij = rho^|i-j|;
/// equicorr: S_ij = 1 - c for i != j, 1 on the diagonal.
struct CovarianceSpec {
  CovKind kind = CovKind::identity;
  double param = 0.0;

  void validate() const {
    if (kind == CovKind::toeplitz && !(std::abs(param) < 1.0))
      throw std::invalid_argument("covariance: toeplitz requires |rho| < 1");
    if (kind == CovKind::equicorr && !(param >= 0.0 && param < 1.0))
      throw std::invalid_argument("covariance: equicorr requires 0 <= c < 1");
  }

  std::string name() const {
    switch (kind) {
      case CovKind::identity: return "identity";
      case CovKind::toeplitz: return "toeplitz";
      case CovKind::equicorr: return "equicorr";
    }
    return "?";
  }
};

inline Eigen::MatrixXd covariance_matrix(const CovarianceSpec& spec, Index p) {
  if (p < 1) throw std::invalid_argument("covariance: p must be >= 1");
  spec.validate();
  Eigen::MatrixXd sigma(p, p);
  switch (spec.kind) {
    case CovKind::identity:
      sigma.setIdentity();
      break;
    case CovKind::toeplitz:
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j)
          sigma(i, j) = std::pow(spec.param, std::abs(static_cast<double>(i - j)));
      break;
    case CovKind::equicorr:
      sigma.setConstant(1.0 - spec.param);
      sigma.diagonal().setOnes();
      break;
  }
  return sigma;
}

/// Lower Cholesky factor; fails fast naming the offending leading minor.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& sigma) {
  const Index p = sigma.rows();
  if (sigma.cols() != p) throw std::invalid_argument("cholesky: matrix not square");
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    double diag = sigma(j, j);
    for (Index k = 0; k < j; ++k) diag -= lower(j, k) * lower(j, k);
    if (!(diag > 0.0)) {
      std::ostringstream msg;
      msg << "covariance not positive definite: leading minor of order " << j + 1
          << " is not positive";
      throw std::runtime_error(msg.str());
    }
    lower(j, j) = std::sqrt(diag);
    for (Index i = j + 1; i < p; ++i) {
      double acc = sigma(i, j);
      for (Index k = 0; k < j; ++k) acc -= lower(i, k) * lower(j, k);
      lower(i, j) = acc / lower(j, j);
    }
  }
  return lower;
}

/// Ground truth for simulation: true change fractions, per-segment
/// coefficients, covariate covariance and noise level.
struct GroundTruthModel {
  std::vector<double> alpha0;            // 0 = a_0 < ... < a_k0 = 1
  std::vector<Eigen::VectorXd> betas0;   // one coefficient vector per segment
  CovarianceSpec cov;
  double sigma = 1.0;
  Index p = 0;

  Index segment_count() const { return static_cast<Index>(betas0.size()); }

  void validate() const {
    if (alpha0.size() < 2 || alpha0.front() != 0.0 || alpha0.back() != 1.0)
      throw std::invalid_argument("truth: alpha0 must run from 0 to 1");
    for (std::size_t j = 1; j < alpha0.size(); ++j)
      if (!(alpha0[j] > alpha0[j - 1]))
        throw std::invalid_argument("truth: alpha0 must be strictly increasing");
    if (betas0.size() + 1 != alpha0.size())
      throw std::invalid_argument("truth: need one beta per segment");
    if (p < 1) throw std::invalid_argument("truth: p must be >= 1");
    for (const auto& b : betas0)
      if (b.size() != p) throw std::invalid_argument("truth: beta length != p");
    for (std::size_t j = 1; j < betas0.size(); ++j)
      if ((betas0[j] - betas0[j - 1]).lpNorm<1>() == 0.0)
        throw std::invalid_argument("truth: consecutive segment betas must differ");
    if (!(sigma >= 0.0)) throw std::invalid_argument("truth: sigma must be >= 0");
    cov.validate();
  }
};

/// Two-segment model: beta(1) = (1,1,0,...,0), beta(2) = (0,...,0,1,1),
/// change point at 1/2.
inline GroundTruthModel two_segment_model(Index p, CovarianceSpec cov = {},
                                          double sigma = 1.0) {
  if (p < 4) throw std::invalid_argument("two-segment model needs p >= 4");
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(p);
  b1[0] = b1[1] = 1.0;
  Eigen::VectorXd b2 = Eigen::VectorXd::Zero(p);
  b2[p - 2] = b2[p - 1] = 1.0;
  return GroundTruthModel{{0.0, 0.5, 1.0}, {b1, b2}, cov, sigma, p};
}

/// Three-segment model: change points at 0.3 and 0.7, outer segments share
/// beta(1), the middle one uses beta(2).
inline GroundTruthModel three_segment_model(Index p, CovarianceSpec cov = {},
                                            double sigma = 1.0) {
  if (p < 4) throw std::invalid_argument("three-segment model needs p >= 4");
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(p);
  b1[0] = b1[1] = 1.0;
  Eigen::VectorXd b2 = Eigen::VectorXd::Zero(p);
  b2[p - 2] = b2[p - 1] = 1.0;
  return GroundTruthModel{{0.0, 0.3, 0.7, 1.0}, {b1, b2, b1}, cov, sigma, p};
}

/// True change rows on the grid {i/n}: nearest-integer rounding (half away
/// from zero) of alpha0_j * n.
inline std::vector<Index> truth_cut_rows(const GroundTruthModel& truth, Index n) {
  std::vector<Index> cuts(truth.alpha0.size());
  for (std::size_t j = 0; j < truth.alpha0.size(); ++j)
    cuts[j] = static_cast<Index>(std::llround(truth.alpha0[j] * static_cast<double>(n)));
  for (std::size_t j = 1; j < cuts.size(); ++j)
    if (cuts[j] <= cuts[j - 1])
      throw std::invalid_argument("truth: segments collapse on the grid at this n");
  return cuts;
}

/// Draws X_i iid N(0, Sigma) via the Cholesky transform and
/// Y_i = X_i^T beta0(segment(i)) + sigma * eps_i. Stream 0 feeds X (row by
/// row), stream 1 feeds eps; identical (truth, n, seed) give bit-identical
/// datasets within one build.
inline Dataset sample_dataset(const GroundTruthModel& truth, Index n,
                              std::uint64_t seed) {
  truth.validate();
  if (n < truth.segment_count())
    throw std::invalid_argument("sample: n must be at least the segment count");
  const std::vector<Index> cuts = truth_cut_rows(truth, n);
  const Index p = truth.p;

  NormalStream x_stream(derive_stream_seed(seed, 0));
  NormalStream e_stream(derive_stream_seed(seed, 1));

  const bool ident = truth.cov.kind == CovKind::identity;
  Eigen::MatrixXd lower;
  if (!ident) lower = cholesky_lower(covariance_matrix(truth.cov, p));

  RowMatrixXd x(n, p);
  Eigen::VectorXd z(p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) z[j] = x_stream.next();
    if (ident) {
      x.row(i) = z;
    } else {
      for (Index r = 0; r < p; ++r) {
        double acc = 0.0;
        for (Index c = 0; c <= r; ++c) acc += lower(r, c) * z[c];
        x(i, r) = acc;
      }
    }
  }

  Eigen::VectorXd y(n);
  std::size_t seg = 0;
  for (Index i = 0; i < n; ++i) {
    while (i + 1 > cuts[seg + 1]) ++seg;  // observation i+1 in (cuts[seg], cuts[seg+1]]
    y[i] = x.row(i).dot(truth.betas0[seg]) + truth.sigma * e_stream.next();
  }
  return Dataset{std::move(x), std::move(y)};
}

/// Overlap weights of the true segments on (u, v]:
/// |(u,v] ∩ (a_{j-1}, a_j]| / (v - u). Nonnegative, summing to one.
inline std::vector<double> overlap_weights(const GroundTruthModel& truth, double u,
                                           double v) {
  if (!(u >= 0.0 && v <= 1.0 && u < v))
    throw std::invalid_argument("overlap_weights: need 0 <= u < v <= 1");
  std::vector<double> w(truth.betas0.size());
  for (std::size_t j = 0; j < truth.betas0.size(); ++j) {
    const double lo = std::max(u, truth.alpha0[j]);
    const double hi = std::min(v, truth.alpha0[j + 1]);
    w[j] = std::max(0.0, hi - lo) / (v - u);
  }
  return w;
}

/// Population-optimal coefficient on an interval: the convex combination of
/// the true per-segment coefficients with overlap weights (requires a
/// positive definite covariance).
inline Eigen::VectorXd oracle_beta_star(const GroundTruthModel& truth, double u,
                                        double v) {
  const std::vector<double> w = overlap_weights(truth, u, v);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(truth.p);
  for (std::size_t j = 0; j < w.size(); ++j) out += w[j] * truth.betas0[j];
  return out;
}

inline Eigen::VectorXd oracle_beta_star(const GroundTruthModel& truth,
                                        const Interval& iv) {
  return oracle_beta_star(truth, iv.u(), iv.v());
}

}  // namespace segreg
