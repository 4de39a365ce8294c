#pragma once

// Group-relative policy optimization primitives: group-normalized advantages,
// the clipped surrogate, a per-sample KL estimate and the resulting objective
// for a group of sampled responses.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flawmap/error.hpp"

namespace flawmap {

inline constexpr double kDefaultSigmaFloor = 1e-8;

// (R_i - mean) / max(std, sigma_floor) with population std. A group whose
// rewards are all equal gets all-zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double sigma_floor = kDefaultSigmaFloor) {
  if (rewards.size() < 2) throw ValidationError("group_advantages: need at least two rewards");
  if (!(sigma_floor > 0.0)) throw ValidationError("group_advantages: sigma_floor must be positive");
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) {
    return out;
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(ss / static_cast<double>(rewards.size())), sigma_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

// Whether min(wA, clip(w)A) takes the unclipped branch. Ties resolve to the
// unclipped branch, which is also where the gradient flows.
inline bool surrogate_unclipped(double ratio, double advantage, double epsilon) noexcept {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return ratio * advantage <= clipped * advantage;
}

inline double clipped_surrogate(double ratio, double advantage, double epsilon) {
  if (!(ratio > 0.0)) throw ValidationError("clipped_surrogate: ratio must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError("clipped_surrogate: epsilon must lie in (0, 1)");
  }
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// exp(d) - d - 1 with d = logp_ref - logp_new; nonnegative, zero iff d = 0.
inline double kl_estimate(double logp_new, double logp_ref) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_ref)) {
    throw ValidationError("kl_estimate: non-finite log-probability");
  }
  const double d = logp_ref - logp_new;
  return std::max(std::expm1(d) - d, 0.0);
}

struct SurrogateSample {
  double ratio = 1.0;
  double advantage = 0.0;
  double kl = 0.0;
};

// mean_i [ min(w_i A_i, clip(w_i) A_i) - beta * kl_i ]
inline double rft_objective(std::span<const SurrogateSample> samples, double epsilon, double beta) {
  if (samples.empty()) throw ValidationError("rft_objective: no samples");
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += clipped_surrogate(s.ratio, s.advantage, epsilon) - beta * s.kl;
  }
  return sum / static_cast<double>(samples.size());
}

}  // namespace flawmap
