#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "segreg/cache.hpp"
#include "segreg/lasso.hpp"
#include "segreg/types.hpp"

namespace segreg {

enum class DetectMethod { dp, bs };

inline const char* method_name(DetectMethod m) {
  return m == DetectMethod::dp ? "dp" : "bs";
}

/// A segmentation with its per-segment fits and total penalized objective.
struct SegmentedModel {
  Alpha alpha;
  std::vector<SegmentFit> fits;
  double objective = 0.0;
  DetectMethod method = DetectMethod::dp;

  Index k() const { return alpha.segment_count(); }
};

/// Binary segmentation tree node. Children of (u,v] are (u,s] and (s,v].
struct BsNode {
  Interval interval;
  int parent = -1;
  int left = -1;
  int right = -1;
  bool terminal = false;
  Index split = -1;  // chosen split row; equals interval.begin when no split
};
using BsTree = std::vector<BsNode>;

/// Runs both segmentation algorithms over a shared fit cache.
///
/// Tie-breaking is deterministic throughout: smallest k at the final argmin,
/// smallest u in each dynamic-programming layer, smallest s in the split
/// search, and "no split" only when strictly better than every split.
/// Candidate fits within a batch are computed concurrently; outputs are
/// identical at any thread count.
class Detector {
 public:
  Detector(const Dataset& data, DetectorConfig cfg, bool use_cache = true)
      : data_(&data),
        cfg_(cfg),
        ctx_(data),
        cache_(ctx_, cfg.lambda, cfg.delta, cfg.solver_tol, cfg.solver_max_sweeps,
               use_cache) {
    cfg_.validate(data.n());
  }

  const DetectorConfig& config() const { return cfg_; }
  FitCache& cache() { return cache_; }
  const detail::DesignContext& context() const { return ctx_; }

  /// H(u,v): penalized loss of the interval fit, 0 for the empty interval.
  double h_cost(Index u, Index v) {
    if (v - u < 1) return 0.0;
    return cache_.fit(u, v).loss + cfg_.gamma;
  }

  /// Minimizer of H(u,s) + H(s,v) over s in {u} and the grid points of
  /// [u + delta, v - delta]. Returns u when no split wins strictly.
  Index best_split(Index u, Index v) {
    if (v - u < 1) throw std::invalid_argument("best_split: empty interval");
    const Index margin = split_margin_rows(data_->n(), cfg_.delta);
    const Index lo = u + margin;
    const Index hi = v - margin;
    prefetch_split_candidates(u, v, lo, hi);
    double best = h_cost(u, v);  // s = u: H(u,u) + H(u,v)
    Index best_s = u;
    bool have_split = false;
    for (Index s = lo; s <= hi; ++s) {
      const double val = h_cost(u, s) + h_cost(s, v);
      if ((!have_split && val <= best) || val < best) {
        best = val;
        best_s = s;
        have_split = true;
      }
    }
    return best_s;
  }

  /// Exact global minimizer of G(alpha) over grid vectors with
  /// r(alpha) >= delta and at most floor(1/delta) segments.
  SegmentedModel dp() {
    const Tables& t = tables(cfg_.gamma, tables_gamma_);
    const Index n = data_->n();
    Index k_hat = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Index k = 1; k <= t.kmax; ++k) {
      const double fk = t.F[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)];
      if (fk < best) {
        best = fk;
        k_hat = k;
      }
    }
    if (k_hat == 0)
      throw std::runtime_error("dp: no feasible segmentation");  // unreachable for valid config
    return assemble(backtrack(t, k_hat), best, DetectMethod::dp);
  }

  /// Best segmentation with exactly k segments, minimizing the unpenalized
  /// loss sum (gamma contributes a constant gamma*k and is dropped; the
  /// reported objective uses the gamma = 0 convention).
  SegmentedModel dp_fixed_k(Index k) {
    const Index n = data_->n();
    const Index min_rows = cfg_.min_rows(n);
    if (k < 1 || k > cfg_.kmax() || k * min_rows > n) {
      std::ostringstream msg;
      msg << "dp_fixed_k: k=" << k << " infeasible (kmax=" << cfg_.kmax()
          << ", floor(delta*n)=" << min_rows << ", n=" << n << ")";
      throw std::invalid_argument(msg.str());
    }
    const Tables& t = tables(0.0, tables_zero_);
    const double obj = t.F[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)];
    return assemble(backtrack(t, k), obj, DetectMethod::dp);
  }

  /// Binary segmentation: recursively split at the best single change point
  /// until no split improves the penalized cost. Terminal intervals define
  /// the estimate.
  SegmentedModel bs(BsTree* tree_out = nullptr) {
    const Index n = data_->n();
    BsTree tree;
    tree.push_back(BsNode{Interval{0, n, n}});
    std::deque<int> queue{0};
    while (!queue.empty()) {
      const int id = queue.front();
      queue.pop_front();
      const Index u = tree[static_cast<std::size_t>(id)].interval.begin;
      const Index v = tree[static_cast<std::size_t>(id)].interval.end;
      const Index s = best_split(u, v);
      tree[static_cast<std::size_t>(id)].split = s;
      if (s == u) {
        tree[static_cast<std::size_t>(id)].terminal = true;
        continue;
      }
      const int left = static_cast<int>(tree.size());
      tree.push_back(BsNode{Interval{u, s, n}, id});
      const int right = static_cast<int>(tree.size());
      tree.push_back(BsNode{Interval{s, v, n}, id});
      tree[static_cast<std::size_t>(id)].left = left;
      tree[static_cast<std::size_t>(id)].right = right;
      queue.push_back(left);
      queue.push_back(right);
    }

    std::vector<Index> cuts;
    for (const BsNode& node : tree) {
      if (!node.terminal) continue;
      cuts.push_back(node.interval.begin);
      cuts.push_back(node.interval.end);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    Alpha alpha = alpha_from_rows(std::move(cuts), n);
    if (tree_out != nullptr) *tree_out = tree;

    double obj = 0.0;
    std::vector<SegmentFit> fits;
    fits.reserve(static_cast<std::size_t>(alpha.segment_count()));
    for (Index j = 0; j < alpha.segment_count(); ++j) {
      fits.push_back(cache_.fit(alpha.cuts[static_cast<std::size_t>(j)],
                                alpha.cuts[static_cast<std::size_t>(j) + 1]));
      obj += fits.back().loss + cfg_.gamma;
    }
    return SegmentedModel{std::move(alpha), std::move(fits), obj, DetectMethod::bs};
  }

  /// Extended G(alpha): any grid spacing >= 1/n, fits through the cache.
  double objective(const Alpha& alpha) {
    if (alpha.n != data_->n()) throw std::invalid_argument("objective: grid mismatch");
    double acc = 0.0;
    for (Index j = 0; j < alpha.segment_count(); ++j) {
      const Interval seg = alpha.segment(j);
      if (seg.rows() < 1) throw std::invalid_argument("objective: empty segment");
      acc += cache_.fit(seg.begin, seg.end).loss + cfg_.gamma;
    }
    return acc;
  }

 private:
  struct Tables {
    Index kmax = 0;
    // F[k][v] and the argmin row per (k, v); +inf marks infeasible cells.
    std::vector<std::vector<double>> F;
    std::vector<std::vector<Index>> back;
  };

  const Tables& tables(double gamma, std::optional<Tables>& slot) {
    if (slot.has_value()) return *slot;
    const Index n = data_->n();
    const Index min_rows = cfg_.min_rows(n);
    const Index kmax = std::min(cfg_.kmax(), n / min_rows);
    prefetch_dp_intervals(min_rows, kmax);

    // Flat loss lookup for every interval the recursion can touch.
    const std::size_t stride = static_cast<std::size_t>(n) + 1;
    std::vector<double> loss(stride * stride, std::numeric_limits<double>::quiet_NaN());
    auto loss_at = [&](Index u, Index v) -> double& {
      return loss[static_cast<std::size_t>(u) * stride + static_cast<std::size_t>(v)];
    };
    for (Index v = min_rows; v <= n; ++v) loss_at(0, v) = cache_.fit(0, v).loss;
    if (kmax >= 2)
      for (Index u = min_rows; u + min_rows <= n; ++u)
        for (Index v = u + min_rows; v <= n; ++v) loss_at(u, v) = cache_.fit(u, v).loss;

    Tables t;
    t.kmax = kmax;
    const double inf = std::numeric_limits<double>::infinity();
    t.F.assign(static_cast<std::size_t>(kmax) + 1, std::vector<double>(stride, inf));
    t.back.assign(static_cast<std::size_t>(kmax) + 1, std::vector<Index>(stride, -1));
    for (Index v = min_rows; v <= n; ++v)
      t.F[1][static_cast<std::size_t>(v)] = loss_at(0, v) + gamma;
    for (Index k = 2; k <= kmax; ++k) {
      for (Index v = k * min_rows; v <= n; ++v) {
        double best = inf;
        Index arg = -1;
        for (Index u = (k - 1) * min_rows; u + min_rows <= v; ++u) {
          const double prev = t.F[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(u)];
          const double cand = prev + (loss_at(u, v) + gamma);
          if (cand < best) {
            best = cand;
            arg = u;
          }
        }
        t.F[static_cast<std::size_t>(k)][static_cast<std::size_t>(v)] = best;
        t.back[static_cast<std::size_t>(k)][static_cast<std::size_t>(v)] = arg;
      }
    }
    slot = std::move(t);
    return *slot;
  }

  Alpha backtrack(const Tables& t, Index k) const {
    const Index n = data_->n();
    std::vector<Index> cuts(static_cast<std::size_t>(k) + 1);
    cuts[static_cast<std::size_t>(k)] = n;
    for (Index j = k; j >= 2; --j) {
      const Index v = cuts[static_cast<std::size_t>(j)];
      cuts[static_cast<std::size_t>(j - 1)] =
          t.back[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)];
    }
    cuts[0] = 0;
    return alpha_from_rows(std::move(cuts), n);
  }

  SegmentedModel assemble(Alpha alpha, double objective, DetectMethod method) {
    std::vector<SegmentFit> fits;
    fits.reserve(static_cast<std::size_t>(alpha.segment_count()));
    for (Index j = 0; j < alpha.segment_count(); ++j)
      fits.push_back(cache_.fit(alpha.cuts[static_cast<std::size_t>(j)],
                                alpha.cuts[static_cast<std::size_t>(j) + 1]));
    return SegmentedModel{std::move(alpha), std::move(fits), objective, method};
  }

  void prefetch_dp_intervals(Index min_rows, Index kmax) {
    const Index n = data_->n();
    std::vector<std::pair<Index, Index>> keys;
    for (Index v = min_rows; v <= n; ++v) keys.emplace_back(0, v);
    if (kmax >= 2)
      for (Index u = min_rows; u + min_rows <= n; ++u)
        for (Index v = u + min_rows; v <= n; ++v) keys.emplace_back(u, v);
    cache_.prefetch(keys);
  }

  void prefetch_split_candidates(Index u, Index v, Index lo, Index hi) {
    std::vector<std::pair<Index, Index>> keys;
    keys.emplace_back(u, v);
    for (Index s = lo; s <= hi; ++s) {
      keys.emplace_back(u, s);
      keys.emplace_back(s, v);
    }
    cache_.prefetch(keys);
  }

  const Dataset* data_;
  DetectorConfig cfg_;
  detail::DesignContext ctx_;
  FitCache cache_;
  std::optional<Tables> tables_gamma_;
  std::optional<Tables> tables_zero_;
};

inline SegmentedModel dp_detect(const Dataset& data, const DetectorConfig& cfg) {
  Detector det(data, cfg);
  return det.dp();
}

inline SegmentedModel bs_detect(const Dataset& data, const DetectorConfig& cfg) {
  Detector det(data, cfg);
  return det.bs();
}

inline SegmentedModel dp_fixed_k(const Dataset& data, double lambda, double delta,
                                 Index k, double tol = 1e-8, long max_sweeps = 100000) {
  DetectorConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = 0.0;
  cfg.delta = delta;
  cfg.solver_tol = tol;
  cfg.solver_max_sweeps = max_sweeps;
  Detector det(data, cfg);
  return det.dp_fixed_k(k);
}

}  // namespace segreg
