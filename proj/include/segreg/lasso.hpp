#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segreg/types.hpp"

namespace segreg {

/// Nonzero coefficients as (index, value) pairs with ascending indices.
using SparseCoeffs = std::vector<std::pair<Index, double>>;

inline Eigen::VectorXd densify(const SparseCoeffs& beta, Index p) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  for (const auto& [j, b] : beta) out[j] = b;
  return out;
}

/// One interval's Lasso solution plus diagnostics. `loss` is L_n (divides by
/// the total sample size), so G(alpha) assembles directly from fits.
struct SegmentFit {
  Interval interval;
  SparseCoeffs beta;
  double loss = 0.0;
  double penalty_scale = 0.0;  // lambda / sqrt(max(v-u, delta))
  double kkt_gap = 0.0;        // max(0, ||2 X^T r / n||_inf - lambda (v-u) / sqrt(max(v-u, delta)))
  long sweeps_used = 0;
  bool converged = true;
  bool zero_variance_pinned = false;
  bool possibly_nonunique = false;

  Eigen::VectorXd dense(Index p) const { return densify(beta, p); }
};

namespace detail {

/// Per-dataset tables shared by every interval fit: prefix sums of X^T y and
/// y^2 plus lazily built checkpointed Gram columns. Every table is a pure
/// function of the dataset, so concurrent fits read identical values no
/// matter which thread builds them first.
class DesignContext {
 public:
  // Gram column checkpoints every `gram_stride` rows; an interval column is
  // reconstructed from the bracketing checkpoints plus at most 2 * stride
  // row corrections.
  static constexpr Index gram_stride = 8;
  // Above this per-column footprint checkpoints are skipped and columns are
  // accumulated directly per interval. The mode depends only on (n, p),
  // never on runtime scheduling.
  static constexpr std::size_t gram_budget_bytes = std::size_t(16) << 20;

  explicit DesignContext(const Dataset& data)
      : data_(&data), n_(data.n()), p_(data.p()) {
    checkpoints_ = n_ / gram_stride + 1;
    prefix_gram_ = static_cast<std::size_t>(checkpoints_) *
                       static_cast<std::size_t>(p_) * sizeof(double) <=
                   gram_budget_bytes;
    const std::size_t np = static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(p_);
    xty_.assign(np, 0.0);
    ysq_.assign(static_cast<std::size_t>(n_ + 1), 0.0);
    for (Index i = 0; i < n_; ++i) {
      const double* xrow = data.x.row(i).data();
      const double yi = data.y[i];
      const double* prev = xty_.data() + static_cast<std::size_t>(i) * p_;
      double* out = xty_.data() + static_cast<std::size_t>(i + 1) * p_;
      for (Index l = 0; l < p_; ++l) out[l] = prev[l] + yi * xrow[l];
      ysq_[static_cast<std::size_t>(i + 1)] = ysq_[static_cast<std::size_t>(i)] + yi * yi;
    }
  }

  const Dataset& data() const { return *data_; }
  Index n() const { return n_; }
  Index p() const { return p_; }
  bool prefix_gram() const { return prefix_gram_; }
  std::size_t gram_columns_built() const {
    std::lock_guard<std::mutex> lock(gram_mu_);
    return gram_cols_.size();
  }

  /// out[j] = sum_{i in [u,v)} y_i x_{ij}
  void load_xty(Index u, Index v, double* out) const {
    const double* rv = xty_.data() + static_cast<std::size_t>(v) * p_;
    const double* ru = xty_.data() + static_cast<std::size_t>(u) * p_;
    for (Index l = 0; l < p_; ++l) out[l] = rv[l] - ru[l];
  }

  double ysq(Index u, Index v) const {
    return ysq_[static_cast<std::size_t>(v)] - ysq_[static_cast<std::size_t>(u)];
  }

  /// Gram column j over rows [u, v): out[l] = sum_{r in [u,v)} x_{rj} x_{rl}.
  /// Checkpoint mode reconstructs from the strided prefixes; otherwise the
  /// rows accumulate directly. Either way the arithmetic depends only on
  /// (data, j, u, v).
  void gram_col(Index j, Index u, Index v, double* out) const {
    if (!prefix_gram_ || v - u <= 3 * gram_stride) {
      std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(p_));
      accumulate_rows(j, u, v, +1.0, out);
      return;
    }
    const double* chk = checkpoint_prefix(j);
    const Index cu = u / gram_stride;
    const Index cv = v / gram_stride;
    const double* a = chk + static_cast<std::size_t>(cv) * p_;
    const double* b = chk + static_cast<std::size_t>(cu) * p_;
    for (Index l = 0; l < p_; ++l) out[l] = a[l] - b[l];
    accumulate_rows(j, cv * gram_stride, v, +1.0, out);
    accumulate_rows(j, cu * gram_stride, u, -1.0, out);
  }

 private:
  void accumulate_rows(Index j, Index from, Index to, double sign, double* out) const {
    for (Index i = from; i < to; ++i) {
      const double* xrow = data_->x.row(i).data();
      const double w = sign * xrow[j];
      for (Index l = 0; l < p_; ++l) out[l] += w * xrow[l];
    }
  }

  /// Strided prefix of Gram column j: checkpoint c holds
  /// sum_{r < c*stride} x_{rj} x_r. Built once per column under a lock; the
  /// pointer stays valid for the context lifetime.
  const double* checkpoint_prefix(Index j) const {
    {
      std::lock_guard<std::mutex> lock(gram_mu_);
      auto it = gram_cols_.find(j);
      if (it != gram_cols_.end()) return it->second->data();
    }
    auto col = std::make_unique<std::vector<double>>(
        static_cast<std::size_t>(checkpoints_) * static_cast<std::size_t>(p_), 0.0);
    double* buf = col->data();
    std::vector<double> acc(static_cast<std::size_t>(p_), 0.0);
    for (Index c = 1; c < checkpoints_; ++c) {
      accumulate_rows(j, (c - 1) * gram_stride, c * gram_stride, +1.0, acc.data());
      std::memcpy(buf + static_cast<std::size_t>(c) * p_, acc.data(),
                  sizeof(double) * static_cast<std::size_t>(p_));
    }
    std::lock_guard<std::mutex> lock(gram_mu_);
    auto it = gram_cols_.find(j);
    if (it != gram_cols_.end()) return it->second->data();
    const double* ptr = buf;
    gram_cols_.emplace(j, std::move(col));
    return ptr;
  }

  const Dataset* data_;
  Index n_, p_;
  Index checkpoints_;
  bool prefix_gram_;
  std::vector<double> xty_;
  std::vector<double> ysq_;
  mutable std::mutex gram_mu_;
  mutable std::unordered_map<Index, std::unique_ptr<std::vector<double>>> gram_cols_;
};

struct CdOptions {
  double soft_threshold = 0.0;  // t: raw-sum scale, weight * m / 2
  double tol = 1e-8;
  long max_sweeps = 100000;
  double kkt_target_raw = 0.0;  // extra sweeps until the raw gap drops below this
  bool trace_objective = false;
};

struct CdResult {
  long sweeps = 0;
  bool converged = false;
  bool zero_variance_pinned = false;
  double kkt_gap_raw = 0.0;  // max(0, ||g||_inf - t) at exit
};

/// Cyclic coordinate descent with covariance updates on raw sums.
/// State: g = X^T (y - X beta) over the block, beta dense, both owned by the
/// workspace. `Source` supplies Gram columns; sweeps visit coordinates in
/// ascending index order, so the iterate sequence is deterministic.
template <class Source>
class CoordinateDescent {
 public:
  CoordinateDescent(Source& source, Index p, const CdOptions& opts)
      : src_(source), p_(p), opts_(opts) {
    beta_.assign(static_cast<std::size_t>(p), 0.0);
    s2_.assign(static_cast<std::size_t>(p), -1.0);  // -1 = column not fetched yet
    known_.assign(static_cast<std::size_t>(p), 0);
    in_active_.assign(static_cast<std::size_t>(p), 0);
  }

  std::vector<double>& gradient() { return g_; }
  std::vector<double>& beta() { return beta_; }
  const std::vector<Index>& active() const { return active_; }
  const std::vector<double>& sweep_objectives() const { return sweep_objectives_; }

  /// Seeds a nonzero starting iterate. `g_` must already hold the block
  /// X^T y; this subtracts Gram * beta0 column by column (ascending).
  void warm_start(const Eigen::Ref<const Eigen::VectorXd>& beta0) {
    for (Index j = 0; j < p_; ++j) {
      if (beta0[j] == 0.0) continue;
      ensure_column(j);
      src_.apply_gram(j, beta0[j], g_.data());
      beta_[static_cast<std::size_t>(j)] = beta0[j];
      activate(j);
    }
  }

  CdResult run() {
    CdResult res;
    const double t = opts_.soft_threshold;
    if (opts_.trace_objective) record_objective();
    if (t == 0.0) {
      // Unpenalized path: every coordinate may move. Fetch all columns up
      // front (detecting zero-variance pins) and run plain cyclic sweeps.
      for (Index j = 0; j < p_; ++j) {
        ensure_column(j);
        if (s2_[static_cast<std::size_t>(j)] <= 0.0) res.zero_variance_pinned = true;
      }
      while (res.sweeps < opts_.max_sweeps) {
        ++res.sweeps;
        double maxd = 0.0;
        for (Index j = 0; j < p_; ++j) maxd = std::max(maxd, update(j));
        if (opts_.trace_objective) record_objective();
        if (maxd < opts_.tol && stationarity_gap() <= opts_.kkt_target_raw) {
          res.converged = true;
          break;
        }
      }
      res.kkt_gap_raw = feasibility_gap();
      return res;
    }

    // Penalized path: full sweeps admit violating coordinates in cyclic
    // order; between full sweeps the active set is polished on a compact
    // subproblem, loosely at first and down to the full tolerance as the
    // outer sweeps converge. The first two sweeps admit only clear
    // violators, sparing column fetches for borderline transients.
    int full_sweep_count = 0;
    while (res.sweeps < opts_.max_sweeps) {
      ++res.sweeps;
      ++full_sweep_count;
      admit_factor_ = full_sweep_count == 1 ? 1.5 : (full_sweep_count == 2 ? 1.1 : 1.0);
      double maxd = 0.0;
      for (Index j = 0; j < p_; ++j) maxd = std::max(maxd, update(j));
      admit_factor_ = 1.0;
      if (opts_.trace_objective) record_objective();
      if (maxd < opts_.tol) {
        if (stationarity_gap() <= opts_.kkt_target_raw) {
          res.converged = true;
          break;
        }
        continue;
      }
      const double until = std::max(opts_.tol, std::min(1e-5, 0.25 * maxd));
      if (opts_.trace_objective)
        polish_active_plain(res, until);
      else
        polish_active_compact(res, until);
    }
    res.kkt_gap_raw = feasibility_gap();
    return res;
  }

  /// max(0, ||g||_inf - t): the bound side of the stationarity conditions.
  double feasibility_gap() const {
    double worst = 0.0;
    for (Index j = 0; j < p_; ++j)
      worst = std::max(worst, std::abs(g_[static_cast<std::size_t>(j)]));
    return std::max(0.0, worst - opts_.soft_threshold);
  }

 private:
  /// Active-set sweeps against the full gradient (used when tracing; each
  /// coordinate change costs O(p)).
  void polish_active_plain(CdResult& res, double until_tol) {
    while (res.sweeps < opts_.max_sweeps) {
      ++res.sweeps;
      double mda = 0.0;
      for (Index j : active_) mda = std::max(mda, update(j));
      if (opts_.trace_objective) record_objective();
      if (mda < until_tol) break;
    }
  }

  /// Active-set sweeps on a compacted subproblem: the Gram restricted to the
  /// active set makes each coordinate change O(a). Net changes are synced
  /// into the full gradient once at the end of the phase.
  void polish_active_compact(CdResult& res, double until_tol) {
    const std::size_t a = active_.size();
    if (a == 0) return;
    const double t = opts_.soft_threshold;
    cg_.assign(a * a, 0.0);
    cgrad_.resize(a);
    cbeta_.resize(a);
    cstart_.resize(a);
    cs2_.resize(a);
    for (std::size_t r = 0; r < a; ++r) {
      const Index k = active_[r];
      src_.gram_entries(k, active_, &cg_[r * a]);
      cgrad_[r] = g_[static_cast<std::size_t>(k)];
      cbeta_[r] = beta_[static_cast<std::size_t>(k)];
      cstart_[r] = cbeta_[r];
      cs2_[r] = s2_[static_cast<std::size_t>(k)];
    }
    while (res.sweeps < opts_.max_sweeps) {
      ++res.sweeps;
      double mda = 0.0;
      for (std::size_t r = 0; r < a; ++r) {
        const double bj = cbeta_[r];
        const double s2j = cs2_[r];
        double bnew = 0.0;
        if (s2j > 0.0) {
          const double z = cgrad_[r] + s2j * bj;
          if (std::abs(z) > t) bnew = (z > 0.0 ? z - t : z + t) / s2j;
        }
        const double d = bnew - bj;
        if (d != 0.0) {
          const double* row = &cg_[r * a];
          for (std::size_t l = 0; l < a; ++l) cgrad_[l] -= d * row[l];
          cbeta_[r] = bnew;
          mda = std::max(mda, std::abs(d));
        }
      }
      if (mda < until_tol) break;
    }
    for (std::size_t r = 0; r < a; ++r) {
      const double net = cbeta_[r] - cstart_[r];
      if (net != 0.0) {
        src_.apply_gram(active_[r], net, g_.data());
        beta_[static_cast<std::size_t>(active_[r])] = cbeta_[r];
      }
    }
  }

  double update(Index j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    const double t = opts_.soft_threshold;
    double bj = beta_[ji];
    if (bj == 0.0 && std::abs(g_[ji]) <= t * admit_factor_) return 0.0;
    ensure_column(j);
    const double s2j = s2_[ji];
    double bnew;
    if (s2j > 0.0) {
      const double z = g_[ji] + s2j * bj;
      if (std::abs(z) <= t)
        bnew = 0.0;
      else
        bnew = (z > 0.0 ? z - t : z + t) / s2j;
    } else {
      bnew = 0.0;  // zero-variance column stays pinned
    }
    const double d = bnew - bj;
    if (d != 0.0) {
      src_.apply_gram(j, d, g_.data());
      beta_[ji] = bnew;
      if (bj == 0.0) activate(j);
    }
    return std::abs(d);
  }

  /// Full per-coordinate stationarity violation (equality at nonzeros).
  double stationarity_gap() const {
    const double t = opts_.soft_threshold;
    double worst = 0.0;
    for (Index j = 0; j < p_; ++j) {
      const std::size_t ji = static_cast<std::size_t>(j);
      double v;
      if (beta_[ji] != 0.0)
        v = std::abs(g_[ji] - (beta_[ji] > 0.0 ? t : -t));
      else
        v = std::max(0.0, std::abs(g_[ji]) - t);
      worst = std::max(worst, v);
    }
    return worst;
  }

  void ensure_column(Index j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    if (known_[ji]) return;
    s2_[ji] = src_.fetch_column(j);
    known_[ji] = 1;
  }

  void activate(Index j) {
    if (in_active_[static_cast<std::size_t>(j)]) return;
    in_active_[static_cast<std::size_t>(j)] = 1;
    auto it = std::lower_bound(active_.begin(), active_.end(), j);
    active_.insert(it, j);
  }

  void record_objective() {
    // rss = y^T y - beta^T (g0 + g); valid because g = g0 - Gram * beta.
    double dot = 0.0;
    for (Index j : active_) {
      const std::size_t ji = static_cast<std::size_t>(j);
      dot += beta_[ji] * (src_.g0(j) + g_[ji]);
    }
    double l1 = 0.0;
    for (Index j : active_) l1 += std::abs(beta_[static_cast<std::size_t>(j)]);
    const double m = src_.block_rows();
    sweep_objectives_.push_back((src_.block_ysq() - dot) / m +
                                (2.0 * opts_.soft_threshold / m) * l1);
  }

  Source& src_;
  Index p_;
  CdOptions opts_;
  double admit_factor_ = 1.0;
  std::vector<double> g_;
  std::vector<double> beta_;
  std::vector<double> s2_;
  std::vector<char> known_;
  std::vector<char> in_active_;
  std::vector<Index> active_;
  std::vector<double> sweep_objectives_;
  // compact active-set workspace
  std::vector<double> cg_, cgrad_, cbeta_, cstart_, cs2_;
};

/// Gram source backed by a DesignContext interval. Needed columns are
/// materialized once per solve into contiguous local buffers.
class IntervalSource {
 public:
  IntervalSource(const DesignContext& ctx, Index u, Index v)
      : ctx_(ctx), u_(u), v_(v), p_(ctx.p()) {
    g0_.resize(static_cast<std::size_t>(p_));
    ctx.load_xty(u, v, g0_.data());
  }

  const std::vector<double>& initial_gradient() const { return g0_; }
  double g0(Index j) const { return g0_[static_cast<std::size_t>(j)]; }
  double block_rows() const { return static_cast<double>(v_ - u_); }
  double block_ysq() const { return ctx_.ysq(u_, v_); }

  double fetch_column(Index j) {
    auto& buf = local_[j];
    buf.resize(static_cast<std::size_t>(p_));
    ctx_.gram_col(j, u_, v_, buf.data());
    return buf[static_cast<std::size_t>(j)];
  }

  void apply_gram(Index j, double d, double* g) const {
    const double* col = local_.at(j).data();
    for (Index l = 0; l < p_; ++l) g[l] -= d * col[l];
  }

  /// Gram column j sampled at the given coordinates.
  void gram_entries(Index j, const std::vector<Index>& at, double* out) const {
    const double* col = local_.at(j).data();
    for (std::size_t i = 0; i < at.size(); ++i) out[i] = col[at[i]];
  }

 private:
  const DesignContext& ctx_;
  Index u_, v_, p_;
  std::vector<double> g0_;
  std::unordered_map<Index, std::vector<double>> local_;
};

/// Gram source for a standalone block; columns accumulate directly.
class BlockSource {
 public:
  BlockSource(const Eigen::Ref<const RowMatrixXd>& x,
              const Eigen::Ref<const Eigen::VectorXd>& y)
      : x_(x), y_(y), p_(x.cols()) {
    g0_.assign(static_cast<std::size_t>(p_), 0.0);
    ysq_ = 0.0;
    for (Index i = 0; i < x_.rows(); ++i) {
      const double yi = y_[i];
      for (Index l = 0; l < p_; ++l) g0_[static_cast<std::size_t>(l)] += yi * x_(i, l);
      ysq_ += yi * yi;
    }
  }

  const std::vector<double>& initial_gradient() const { return g0_; }
  double g0(Index j) const { return g0_[static_cast<std::size_t>(j)]; }
  double block_rows() const { return static_cast<double>(x_.rows()); }
  double block_ysq() const { return ysq_; }

  double fetch_column(Index j) {
    auto& buf = cols_[j];
    buf.assign(static_cast<std::size_t>(p_), 0.0);
    for (Index i = 0; i < x_.rows(); ++i) {
      const double xij = x_(i, j);
      for (Index l = 0; l < p_; ++l) buf[static_cast<std::size_t>(l)] += xij * x_(i, l);
    }
    return buf[static_cast<std::size_t>(j)];
  }

  void apply_gram(Index j, double d, double* g) const {
    const double* col = cols_.at(j).data();
    for (Index l = 0; l < p_; ++l) g[l] -= d * col[l];
  }

  void gram_entries(Index j, const std::vector<Index>& at, double* out) const {
    const double* col = cols_.at(j).data();
    for (std::size_t i = 0; i < at.size(); ++i) out[i] = col[at[i]];
  }

 private:
  Eigen::Ref<const RowMatrixXd> x_;
  Eigen::Ref<const Eigen::VectorXd> y_;
  Index p_;
  std::vector<double> g0_;
  double ysq_;
  std::unordered_map<Index, std::vector<double>> cols_;
};

inline double linf(const std::vector<double>& v) {
  double worst = 0.0;
  for (double x : v) worst = std::max(worst, std::abs(x));
  return worst;
}

}  // namespace detail

/// Result of a standalone block solve.
struct LassoSolution {
  Eigen::VectorXd beta;
  long sweeps = 0;
  bool converged = true;
  bool zero_variance_pinned = false;
  bool possibly_nonunique = false;
  double kkt_gap = 0.0;  // max(0, ||2 X^T r / m||_inf - weight)
  std::vector<double> sweep_objectives;  // filled when trace_objective is set
};

/// Minimizes ||y - X beta||^2 / m + weight * ||beta||_1 over the block by
/// cyclic coordinate descent (zero start unless warm_start is given).
inline LassoSolution lasso_solve(const Eigen::Ref<const RowMatrixXd>& x_block,
                                 const Eigen::Ref<const Eigen::VectorXd>& y_block,
                                 double weight, double tol = 1e-8,
                                 long max_sweeps = 100000,
                                 const Eigen::VectorXd* warm_start = nullptr,
                                 bool trace_objective = false) {
  if (x_block.rows() < 1) throw std::invalid_argument("lasso_solve: empty block");
  if (y_block.size() != x_block.rows())
    throw std::invalid_argument("lasso_solve: y length does not match block rows");
  if (!(weight >= 0.0)) throw std::invalid_argument("lasso_solve: weight must be >= 0");
  const Index p = x_block.cols();
  const double m = static_cast<double>(x_block.rows());

  detail::BlockSource src(x_block, y_block);
  detail::CdOptions opts;
  opts.soft_threshold = weight * m / 2.0;
  opts.tol = tol;
  opts.max_sweeps = max_sweeps;
  opts.kkt_target_raw = 0.5 * tol * std::max(m, detail::linf(src.initial_gradient()));
  opts.trace_objective = trace_objective;

  detail::CoordinateDescent<detail::BlockSource> cd(src, p, opts);
  cd.gradient() = src.initial_gradient();
  if (warm_start != nullptr) {
    if (warm_start->size() != p)
      throw std::invalid_argument("lasso_solve: warm start has wrong length");
    cd.warm_start(*warm_start);
  }
  detail::CdResult res = cd.run();

  LassoSolution out;
  out.beta = Eigen::VectorXd::Zero(p);
  for (Index j : cd.active()) out.beta[j] = cd.beta()[static_cast<std::size_t>(j)];
  out.sweeps = res.sweeps;
  out.converged = res.converged;
  out.zero_variance_pinned = res.zero_variance_pinned;
  out.possibly_nonunique = (weight == 0.0 && p > x_block.rows());
  out.kkt_gap = 2.0 * res.kkt_gap_raw / m;
  out.sweep_objectives = cd.sweep_objectives();
  return out;
}

/// Penalty weight of the sub-interval Lasso: lambda / sqrt(max(v-u, delta)).
inline double interval_penalty_scale(const Interval& iv, double lambda, double delta) {
  return lambda / std::sqrt(std::max(iv.length(), delta));
}

/// Fits the sub-interval Lasso
///   min ||Y_iv - X_iv beta||^2 / ((v-u) n) + lambda ||beta||_1 / sqrt(max(v-u, delta))
/// against the shared per-dataset tables. Zero start; the returned fit is a
/// pure function of (data, iv, lambda, delta, tol, max_sweeps).
inline SegmentFit interval_fit(const detail::DesignContext& ctx, const Interval& iv,
                               double lambda, double delta, double tol = 1e-8,
                               long max_sweeps = 100000) {
  const Index n = ctx.n();
  const Index p = ctx.p();
  if (iv.n != n || iv.begin < 0 || iv.end > n || iv.begin >= iv.end)
    throw std::invalid_argument("interval_fit: interval not valid for dataset");
  const Index m = iv.rows();
  const double weight = interval_penalty_scale(iv, lambda, delta);

  detail::IntervalSource src(ctx, iv.begin, iv.end);
  detail::CdOptions opts;
  opts.soft_threshold = weight * static_cast<double>(m) / 2.0;
  opts.tol = tol;
  opts.max_sweeps = max_sweeps;
  opts.kkt_target_raw =
      0.5 * tol * std::max(static_cast<double>(n), detail::linf(src.initial_gradient()));

  detail::CoordinateDescent<detail::IntervalSource> cd(src, p, opts);
  cd.gradient() = src.initial_gradient();
  detail::CdResult res = cd.run();

  SegmentFit fit;
  fit.interval = iv;
  for (Index j : cd.active()) {
    double b = cd.beta()[static_cast<std::size_t>(j)];
    if (b != 0.0) fit.beta.emplace_back(j, b);
  }
  // Residual loss recomputed row by row from the sparse coefficients.
  const Dataset& data = ctx.data();
  double acc = 0.0;
  for (Index i = iv.begin; i < iv.end; ++i) {
    double r = data.y[i];
    const double* xrow = data.x.row(i).data();
    for (const auto& [j, b] : fit.beta) r -= xrow[j] * b;
    acc += r * r;
  }
  fit.loss = acc / static_cast<double>(n);
  fit.penalty_scale = weight;
  fit.kkt_gap = 2.0 * res.kkt_gap_raw / static_cast<double>(n);
  fit.sweeps_used = res.sweeps;
  fit.converged = res.converged;
  fit.zero_variance_pinned = res.zero_variance_pinned;
  fit.possibly_nonunique = (lambda == 0.0 && p > m);
  return fit;
}

inline SegmentFit interval_fit(const Dataset& data, const Interval& iv, double lambda,
                               double delta, double tol = 1e-8,
                               long max_sweeps = 100000) {
  detail::DesignContext ctx(data);
  return interval_fit(ctx, iv, lambda, delta, tol, max_sweeps);
}

/// Excess of the stationarity residual over its bound,
///   max(0, ||2 X_iv^T (Y_iv - X_iv beta) / n||_inf - lambda (v-u) / sqrt(max(v-u, delta))),
/// computed directly from the data rows. Zero (within tolerance) certifies
/// the fitted solution.
inline double kkt_gap(const Dataset& data, const Interval& iv,
                      const Eigen::Ref<const Eigen::VectorXd>& beta, double lambda,
                      double delta) {
  if (beta.size() != data.p()) {
    std::ostringstream msg;
    msg << "kkt_gap: beta has " << beta.size() << " coefficients, expected " << data.p();
    throw std::invalid_argument(msg.str());
  }
  if (iv.n != data.n() || iv.begin < 0 || iv.end > data.n() || iv.begin >= iv.end)
    throw std::invalid_argument("kkt_gap: interval not valid for dataset");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(data.p());
  for (Index i = iv.begin; i < iv.end; ++i) {
    double r = data.y[i] - data.x.row(i).dot(beta);
    g += r * data.x.row(i).transpose();
  }
  const double bound = lambda * iv.length() / std::sqrt(std::max(iv.length(), delta));
  const double residual = 2.0 * g.lpNorm<Eigen::Infinity>() / static_cast<double>(data.n());
  return std::max(0.0, residual - bound);
}

/// G(alpha) in its extended form: per-segment interval fits are defined for
/// any grid spacing >= 1/n, no delta requirement. Accumulates
/// sum_j (L_n(j) + gamma) over segments left to right.
inline double objective_g(const detail::DesignContext& ctx, const Alpha& alpha,
                          const DetectorConfig& cfg) {
  if (alpha.n != ctx.n()) throw std::invalid_argument("objective_g: alpha grid mismatch");
  if (alpha.cuts.size() < 2 || alpha.cuts.front() != 0 || alpha.cuts.back() != ctx.n())
    throw std::invalid_argument("objective_g: alpha must span (0, 1]");
  for (std::size_t j = 1; j < alpha.cuts.size(); ++j)
    if (alpha.cuts[j] <= alpha.cuts[j - 1])
      throw std::invalid_argument("objective_g: alpha not strictly increasing");
  double acc = 0.0;
  for (Index j = 0; j < alpha.segment_count(); ++j) {
    SegmentFit fit = interval_fit(ctx, alpha.segment(j), cfg.lambda, cfg.delta,
                                  cfg.solver_tol, cfg.solver_max_sweeps);
    acc += fit.loss + cfg.gamma;
  }
  return acc;
}

inline double objective_g(const Dataset& data, const Alpha& alpha,
                          const DetectorConfig& cfg) {
  detail::DesignContext ctx(data);
  return objective_g(ctx, alpha, cfg);
}

}  // namespace segreg
