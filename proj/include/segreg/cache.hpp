#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segreg/lasso.hpp"
#include "segreg/parallel.hpp"
#include "segreg/types.hpp"

namespace segreg {

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
};

/// Memoizes interval fits for one (dataset, lambda, delta, tol) combination.
/// Fits are zero-initialized and depend only on their key, so a cached entry
/// is bit-identical to a fresh interval_fit on the same interval.
///
/// prefetch() may compute missing entries on worker threads; entries are
/// inserted in key order afterwards. fit() itself is meant for the
/// orchestration thread between prefetch batches.
class FitCache {
 public:
  FitCache(const detail::DesignContext& ctx, double lambda, double delta,
           double tol, long max_sweeps, bool enabled = true)
      : ctx_(&ctx),
        lambda_(lambda),
        delta_(delta),
        tol_(tol),
        max_sweeps_(max_sweeps),
        enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  double lambda() const { return lambda_; }
  double delta() const { return delta_; }

  SegmentFit fit(Index u, Index v) {
    if (enabled_) {
      auto it = map_.find(key(u, v));
      if (it != map_.end()) {
        ++stats_.hits;
        return it->second;
      }
    }
    ++stats_.misses;
    SegmentFit f = compute(u, v);
    if (enabled_) map_.emplace(key(u, v), f);
    return f;
  }

  /// Fresh fit, bypassing storage and counters.
  SegmentFit compute(Index u, Index v) const {
    return interval_fit(*ctx_, Interval{u, v, ctx_->n()}, lambda_, delta_, tol_,
                        max_sweeps_);
  }

  /// Computes all missing keys in parallel, then stores them in key order.
  void prefetch(const std::vector<std::pair<Index, Index>>& keys) {
    if (!enabled_) return;
    std::vector<std::pair<Index, Index>> missing;
    missing.reserve(keys.size());
    for (const auto& k : keys)
      if (map_.find(key(k.first, k.second)) == map_.end()) missing.push_back(k);
    if (missing.empty()) return;
    std::vector<SegmentFit> fits(missing.size());
    parallel::parallel_for(missing.size(), [&](std::size_t i) {
      fits[i] = compute(missing[i].first, missing[i].second);
    });
    for (std::size_t i = 0; i < missing.size(); ++i)
      map_.emplace(key(missing[i].first, missing[i].second), std::move(fits[i]));
    stats_.misses += missing.size();
  }

  const CacheStats& stats() const { return stats_; }
  std::size_t size() const { return map_.size(); }

  template <class F>
  void for_each(F&& fn) const {
    for (const auto& [k, fit] : map_) fn(fit);
  }

 private:
  static std::uint64_t key(Index u, Index v) {
    return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
  }

  const detail::DesignContext* ctx_;
  double lambda_, delta_, tol_;
  long max_sweeps_;
  bool enabled_;
  std::unordered_map<std::uint64_t, SegmentFit> map_;
  CacheStats stats_;
};

}  // namespace segreg
