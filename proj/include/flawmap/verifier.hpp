#pragma once

// Best-of-N selection over four-dimensional score vectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"

namespace flawmap {

// Weights over (alignment, aesthetics, plausibility, overall). Ties on the
// aggregate are broken by the higher overall score, then the lower index.
class SelectionPolicy {
 public:
  SelectionPolicy() : weights_{0.25, 0.25, 0.25, 0.25} {}

  explicit SelectionPolicy(const std::array<double, 4>& weights) : weights_(weights) {
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ValidationError("selection weights must be finite and nonnegative");
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("selection weights sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  // Scales nonnegative weights to sum to 1.
  static SelectionPolicy normalized(std::array<double, 4> weights) {
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ValidationError("selection weights must be finite and nonnegative");
      }
      sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("selection weights must not all be zero");
    for (double& w : weights) w /= sum;
    return SelectionPolicy(weights);
  }

  const std::array<double, 4>& weights() const noexcept { return weights_; }

 private:
  std::array<double, 4> weights_;
};

inline double aggregate(const ScoreVector& s, const SelectionPolicy& policy) {
  const auto values = s.as_array();
  const auto& w = policy.weights();
  double sum = 0.0;
  for (std::size_t d = 0; d < values.size(); ++d) sum += w[d] * values[d];
  return sum;
}

// Descending by aggregate, then overall, then ascending index.
inline std::vector<std::size_t> rank_candidates(std::span<const ScoreVector> candidates,
                                                const SelectionPolicy& policy = {}) {
  if (candidates.empty()) throw ValidationError("rank_candidates: no candidates");
  std::vector<double> agg(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) agg[i] = aggregate(candidates[i], policy);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (agg[a] != agg[b]) return agg[a] > agg[b];
    if (candidates[a].overall != candidates[b].overall) {
      return candidates[a].overall > candidates[b].overall;
    }
    return a < b;
  });
  return order;
}

inline std::size_t select_best(std::span<const ScoreVector> candidates,
                               const SelectionPolicy& policy = {}) {
  if (candidates.empty()) throw ValidationError("select_best: no candidates");
  std::size_t best = 0;
  double best_agg = aggregate(candidates[0], policy);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double a = aggregate(candidates[i], policy);
    if (a > best_agg || (a == best_agg && candidates[i].overall > candidates[best].overall)) {
      best = i;
      best_agg = a;
    }
  }
  return best;
}

}  // namespace flawmap
