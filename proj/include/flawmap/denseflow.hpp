#pragma once

// Dense pixel-level GRPO for flow-style generators, demonstrated on a toy
// Gaussian policy small enough to check every gradient against finite
// differences.
//
// Toy kernel: x_T ~ N(0, I) and, for step k = 0 .. T-1,
//   x_{k+1}(p) ~ N(x_k(p) + drift(k, p), sigma^2)
// where states[0] is x_T and states[T] is the generated image x_0. Pixel
// log-likelihoods factorize, so the image-level ratio of a step is the
// product of per-pixel ratios.
//
// The pixel surrogate s(k, p) = sg[r_k] * p_new(k, p) / sg[p_new(k, p)] is
// numerically equal to r_k while its parameter sensitivity flows only through
// pixel p's own log-likelihood. Gradients below are the analytic gradients of
// the objectives under that stop-gradient semantics, with respect to the
// drift of the new policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flawmap/error.hpp"
#include "flawmap/grpo.hpp"
#include "flawmap/parallel.hpp"

namespace flawmap {

struct FlowShape {
  std::size_t steps = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t size() const noexcept { return steps * pixels(); }

  friend bool operator==(const FlowShape&, const FlowShape&) = default;
};

class ToyFlowPolicy {
 public:
  ToyFlowPolicy(FlowShape shape, double sigma)
      : ToyFlowPolicy(shape, sigma, std::vector<double>(shape.size(), 0.0)) {}

  ToyFlowPolicy(FlowShape shape, double sigma, std::vector<double> drift)
      : shape_(shape), sigma_(sigma), drift_(std::move(drift)) {
    if (shape.steps == 0 || shape.height == 0 || shape.width == 0) {
      throw ValidationError("toy policy: steps and grid dimensions must be positive");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw ValidationError("toy policy: sigma must be positive");
    }
    if (drift_.size() != shape.size()) {
      throw ValidationError("toy policy: drift has " + std::to_string(drift_.size()) +
                            " entries, expected " + std::to_string(shape.size()));
    }
  }

  const FlowShape& shape() const noexcept { return shape_; }
  double sigma() const noexcept { return sigma_; }
  std::span<const double> drift() const noexcept { return drift_; }
  std::span<double> drift() noexcept { return drift_; }

  double drift(std::size_t step, std::size_t pixel) const {
    return drift_[step * shape_.pixels() + pixel];
  }

  // log N(to; from + drift(step, pixel), sigma^2)
  double log_density(std::size_t step, std::size_t pixel, double from, double to) const {
    const double z = (to - from - drift(step, pixel)) / sigma_;
    return -0.5 * z * z - std::log(sigma_) - 0.5 * std::log(2.0 * std::numbers::pi);
  }

  // d/d drift(step, pixel) of log_density.
  double score(std::size_t step, std::size_t pixel, double from, double to) const {
    return (to - from - drift(step, pixel)) / (sigma_ * sigma_);
  }

  friend bool operator==(const ToyFlowPolicy&, const ToyFlowPolicy&) = default;

 private:
  FlowShape shape_;
  double sigma_;
  std::vector<double> drift_;
};

struct Trajectory {
  std::string condition;
  // states[0] = x_T ... states[T] = x_0, each height*width row-major.
  std::vector<std::vector<double>> states;
  // steps*height*width log-likelihoods under the sampling policy.
  std::vector<double> log_likelihoods;

  const std::vector<double>& final_state() const { return states.back(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Per-trajectory streams are derived from (seed, index), so the group is
// reproducible regardless of how the work is scheduled.
inline std::vector<Trajectory> sample_group(const ToyFlowPolicy& policy, const std::string& condition,
                                            std::size_t group_size, std::uint64_t seed,
                                            std::size_t threads = 1) {
  if (group_size < 2) throw ValidationError("sample_group: group size must be at least 2");
  const auto& shape = policy.shape();
  std::vector<Trajectory> group(group_size);
  parallel_for(group_size, threads, [&](std::size_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    Trajectory& traj = group[i];
    traj.condition = condition;
    traj.states.assign(shape.steps + 1, std::vector<double>(shape.pixels()));
    traj.log_likelihoods.resize(shape.size());
    for (auto& v : traj.states[0]) v = normal(rng);
    for (std::size_t k = 0; k < shape.steps; ++k) {
      const auto& from = traj.states[k];
      auto& to = traj.states[k + 1];
      for (std::size_t p = 0; p < shape.pixels(); ++p) {
        to[p] = from[p] + policy.drift(k, p) + policy.sigma() * normal(rng);
        traj.log_likelihoods[k * shape.pixels() + p] = policy.log_density(k, p, from[p], to[p]);
      }
    }
  });
  return group;
}

namespace detail {

inline void check_trajectory(const ToyFlowPolicy& policy, const Trajectory& traj,
                             std::size_t step) {
  const auto& shape = policy.shape();
  if (traj.states.size() != shape.steps + 1) {
    throw ValidationError("trajectory: expected " + std::to_string(shape.steps + 1) + " states");
  }
  for (const auto& s : traj.states) {
    if (s.size() != shape.pixels()) throw ValidationError("trajectory: state size mismatch");
  }
  if (step >= shape.steps) throw ValidationError("trajectory: step out of range");
}

inline void check_pair(const ToyFlowPolicy& a, const ToyFlowPolicy& b) {
  if (!(a.shape() == b.shape())) throw ValidationError("policies have different shapes");
}

// Sum over pixels of log p_new - log p_old at one step.
inline double step_log_ratio(const ToyFlowPolicy& policy_new, const ToyFlowPolicy& policy_old,
                             const Trajectory& traj, std::size_t step) {
  const auto& from = traj.states[step];
  const auto& to = traj.states[step + 1];
  double sum = 0.0;
  for (std::size_t p = 0; p < from.size(); ++p) {
    sum += policy_new.log_density(step, p, from[p], to[p]) -
           policy_old.log_density(step, p, from[p], to[p]);
  }
  return sum;
}

}  // namespace detail

// Image-level likelihood ratio of one step: the product of pixel ratios.
inline double image_ratio(const ToyFlowPolicy& policy_new, const ToyFlowPolicy& policy_old,
                          const Trajectory& traj, std::size_t step) {
  detail::check_pair(policy_new, policy_old);
  detail::check_trajectory(policy_new, traj, step);
  const double log_ratio = detail::step_log_ratio(policy_new, policy_old, traj, step);
  const double r = std::exp(log_ratio);
  if (!std::isfinite(log_ratio) || !std::isfinite(r) || !(r > 0.0)) {
    throw ValidationError("image_ratio: non-finite ratio (log ratio " + std::to_string(log_ratio) +
                          ")");
  }
  return r;
}

// Numeric value of the pixel surrogate for every pixel of one step.
inline std::vector<double> pixel_surrogate_value(const ToyFlowPolicy& policy_new,
                                                 const ToyFlowPolicy& policy_old,
                                                 const Trajectory& traj, std::size_t step) {
  const double detached_ratio = image_ratio(policy_new, policy_old, traj, step);
  const auto& from = traj.states[step];
  const auto& to = traj.states[step + 1];
  std::vector<double> out(from.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double lp = policy_new.log_density(step, p, from[p], to[p]);
    const double detached_lp = lp;
    out[p] = detached_ratio * std::exp(lp - detached_lp);
  }
  return out;
}

// d s(step, p) / d drift_new(step, p) = sg[r] * d log p_new(step, p) / d drift.
// No other parameter reaches s(step, p).
inline std::vector<double> pixel_surrogate_sensitivity(const ToyFlowPolicy& policy_new,
                                                       const ToyFlowPolicy& policy_old,
                                                       const Trajectory& traj, std::size_t step) {
  const double r = image_ratio(policy_new, policy_old, traj, step);
  const auto& from = traj.states[step];
  const auto& to = traj.states[step + 1];
  std::vector<double> out(from.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = r * policy_new.score(step, p, from[p], to[p]);
  }
  return out;
}

struct DenseRewardField {
  double image_reward = 0.0;
  std::vector<double> pixel_rewards;
};

// Per pixel, normalizes R + R_P(p) across the group.
inline std::vector<std::vector<double>> dense_advantages(std::span<const DenseRewardField> fields,
                                                         double sigma_floor = kDefaultSigmaFloor) {
  if (fields.size() < 2) throw ValidationError("dense_advantages: need at least two fields");
  const std::size_t pixels = fields.front().pixel_rewards.size();
  for (const auto& f : fields) {
    if (f.pixel_rewards.size() != pixels) {
      throw ValidationError("dense_advantages: pixel reward shape mismatch");
    }
  }
  std::vector<std::vector<double>> out(fields.size(), std::vector<double>(pixels));
  std::vector<double> column(fields.size());
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      column[i] = fields[i].image_reward + fields[i].pixel_rewards[p];
    }
    const auto adv = group_advantages(column, sigma_floor);
    for (std::size_t i = 0; i < fields.size(); ++i) out[i][p] = adv[i];
  }
  return out;
}

struct PolicyGradient {
  FlowShape shape;
  std::vector<double> drift;
};

struct ObjectiveResult {
  double value = 0.0;
  PolicyGradient gradient;
};

// Optional KL(p_new || p_ref) regularizer.
struct KlPenalty {
  double beta = 0.0;
  const ToyFlowPolicy* reference = nullptr;
};

namespace detail {

inline void check_objective_inputs(const ToyFlowPolicy& policy_new, const ToyFlowPolicy& policy_old,
                                   std::span<const Trajectory> trajs, std::size_t advantages,
                                   double epsilon) {
  check_pair(policy_new, policy_old);
  if (trajs.empty()) throw ValidationError("objective: no trajectories");
  if (advantages != trajs.size()) {
    throw ValidationError("objective: " + std::to_string(advantages) + " advantages for " +
                          std::to_string(trajs.size()) + " trajectories");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("objective: epsilon outside (0, 1)");
  for (const auto& t : trajs) check_trajectory(policy_new, t, 0);
}

// Closed-form Gaussian KL per pixel, averaged over pixels, for one step.
// The states do not enter because both kernels share the same x_k.
inline double step_gaussian_kl(const ToyFlowPolicy& policy, const ToyFlowPolicy& reference,
                               std::size_t step) {
  const double sn = policy.sigma();
  const double sr = reference.sigma();
  const std::size_t pixels = policy.shape().pixels();
  double sum = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double d = policy.drift(step, p) - reference.drift(step, p);
    sum += std::log(sr / sn) + (sn * sn + d * d) / (2.0 * sr * sr) - 0.5;
  }
  return sum / static_cast<double>(pixels);
}

// Adds -scale * beta * mean_k KL_k to the value and its drift gradient.
inline void apply_kl(const ToyFlowPolicy& policy, const KlPenalty& kl, double scale,
                     ObjectiveResult& out) {
  if (kl.beta == 0.0) return;
  if (kl.reference == nullptr) throw ValidationError("objective: KL penalty needs a reference");
  check_pair(policy, *kl.reference);
  const auto& shape = policy.shape();
  const double sr2 = kl.reference->sigma() * kl.reference->sigma();
  double kl_sum = 0.0;
  for (std::size_t k = 0; k < shape.steps; ++k) {
    kl_sum += step_gaussian_kl(policy, *kl.reference, k);
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
      const double d = policy.drift(k, p) - kl.reference->drift(k, p);
      out.gradient.drift[k * shape.pixels() + p] -=
          scale * kl.beta * d / (sr2 * static_cast<double>(shape.steps * shape.pixels()));
    }
  }
  out.value -= scale * kl.beta * kl_sum / static_cast<double>(shape.steps);
}

inline void check_finite(const ObjectiveResult& r, const char* what) {
  if (!std::isfinite(r.value) ||
      !std::all_of(r.gradient.drift.begin(), r.gradient.drift.end(),
                   [](double g) { return std::isfinite(g); })) {
    throw ValidationError(std::string(what) + ": non-finite value or gradient");
  }
}

}  // namespace detail

// Image-level objective:
//   1/(G T) sum_{i,k} [ min(r A_i, clip(r, 1-eps, 1+eps) A_i) - beta KL_k ]
// The gradient follows the selected branch; the clipped branch is flat.
inline ObjectiveResult flow_grpo_objective(const ToyFlowPolicy& policy_new,
                                           const ToyFlowPolicy& policy_old,
                                           std::span<const Trajectory> trajs,
                                           std::span<const double> image_advantages,
                                           double epsilon, const KlPenalty& kl = {}) {
  detail::check_objective_inputs(policy_new, policy_old, trajs, image_advantages.size(), epsilon);
  const auto& shape = policy_new.shape();
  const double norm = 1.0 / static_cast<double>(trajs.size() * shape.steps);
  ObjectiveResult out{0.0, {shape, std::vector<double>(shape.size(), 0.0)}};
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& traj = trajs[i];
    const double a = image_advantages[i];
    for (std::size_t k = 0; k < shape.steps; ++k) {
      const double r = image_ratio(policy_new, policy_old, traj, k);
      out.value += norm * clipped_surrogate(r, a, epsilon);
      if (!surrogate_unclipped(r, a, epsilon)) continue;
      const auto& from = traj.states[k];
      const auto& to = traj.states[k + 1];
      for (std::size_t p = 0; p < shape.pixels(); ++p) {
        out.gradient.drift[k * shape.pixels() + p] +=
            norm * a * r * policy_new.score(k, p, from[p], to[p]);
      }
    }
  }
  detail::apply_kl(policy_new, kl, 1.0, out);
  detail::check_finite(out, "flow_grpo_objective");
  return out;
}

// Pixel-level objective:
//   1/(G T H W) sum_{i,k,p} min(s A_i(p), clip(s, 1-eps, 1+eps) A_i(p))
// with s the pixel surrogate. Each pixel's branch is chosen from the numeric
// s and the sign of its own advantage.
inline ObjectiveResult denseflow_objective(const ToyFlowPolicy& policy_new,
                                           const ToyFlowPolicy& policy_old,
                                           std::span<const Trajectory> trajs,
                                           std::span<const std::vector<double>> advantage_grids,
                                           double epsilon, const KlPenalty& kl = {}) {
  detail::check_objective_inputs(policy_new, policy_old, trajs, advantage_grids.size(), epsilon);
  const auto& shape = policy_new.shape();
  for (const auto& grid : advantage_grids) {
    if (grid.size() != shape.pixels()) throw ValidationError("denseflow: advantage grid size");
  }
  const double norm = 1.0 / static_cast<double>(trajs.size() * shape.size());
  ObjectiveResult out{0.0, {shape, std::vector<double>(shape.size(), 0.0)}};
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& traj = trajs[i];
    const auto& adv = advantage_grids[i];
    for (std::size_t k = 0; k < shape.steps; ++k) {
      const auto s = pixel_surrogate_value(policy_new, policy_old, traj, k);
      const auto ds = pixel_surrogate_sensitivity(policy_new, policy_old, traj, k);
      for (std::size_t p = 0; p < shape.pixels(); ++p) {
        out.value += norm * clipped_surrogate(s[p], adv[p], epsilon);
        if (surrogate_unclipped(s[p], adv[p], epsilon)) {
          out.gradient.drift[k * shape.pixels() + p] += norm * adv[p] * ds[p];
        }
      }
    }
  }
  // Same image-level KL, on the dense objective's 1/(H W) scale.
  detail::apply_kl(policy_new, kl, 1.0 / static_cast<double>(shape.pixels()), out);
  detail::check_finite(out, "denseflow_objective");
  return out;
}

// --- toy reward and training harness ---------------------------------------

// A condition of the toy task: what x_0 should look like.
struct RewardTarget {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> target;
  // 1 inside the region that receives pixel-level reward, else 0.
  std::vector<double> mask;
  double target_mean = 0.0;
};

// Uniform target; no pixel-level region.
inline RewardTarget mean_intensity_target(std::size_t height, std::size_t width, double level) {
  RewardTarget t{"mean_intensity", height, width, std::vector<double>(height * width, level),
                 std::vector<double>(height * width, 0.0), level};
  return t;
}

// Background 0.5 with a 0/1 checkerboard in the central square of half the
// grid size. The checkerboard averages to the background level, so the
// image-level target is met by any uniform 0.5 image; only pixel rewards can
// teach the detail.
inline RewardTarget region_detail_target(std::size_t height, std::size_t width) {
  RewardTarget t{"region_detail", height, width, std::vector<double>(height * width, 0.5),
                 std::vector<double>(height * width, 0.0), 0.0};
  const std::size_t y0 = height / 4;
  const std::size_t x0 = width / 4;
  const std::size_t y1 = y0 + std::max<std::size_t>(height / 2, 1);
  const std::size_t x1 = x0 + std::max<std::size_t>(width / 2, 1);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      t.target[y * width + x] = (x + y) % 2 == 0 ? 1.0 : 0.0;
      t.mask[y * width + x] = 1.0;
    }
  }
  double sum = 0.0;
  for (double v : t.target) sum += v;
  t.target_mean = sum / static_cast<double>(t.target.size());
  return t;
}

// R = 1 - |mean(x_0) - target_mean|, R_P(p) = (1 - |x_0(p) - target(p)|) mask(p).
inline DenseRewardField evaluate_reward(const RewardTarget& target, std::span<const double> x0) {
  if (x0.size() != target.target.size()) throw ValidationError("reward: image size mismatch");
  DenseRewardField f;
  double sum = 0.0;
  for (double v : x0) sum += v;
  f.image_reward = 1.0 - std::abs(sum / static_cast<double>(x0.size()) - target.target_mean);
  f.pixel_rewards.resize(x0.size());
  for (std::size_t p = 0; p < x0.size(); ++p) {
    f.pixel_rewards[p] = (1.0 - std::abs(x0[p] - target.target[p])) * target.mask[p];
  }
  return f;
}

// Noise-free rollout from the prior mean: x_0 = sum_k drift(k).
inline std::vector<double> mean_rollout(const ToyFlowPolicy& policy) {
  const auto& shape = policy.shape();
  std::vector<double> x(shape.pixels(), 0.0);
  for (std::size_t k = 0; k < shape.steps; ++k) {
    for (std::size_t p = 0; p < shape.pixels(); ++p) x[p] += policy.drift(k, p);
  }
  return x;
}

// Mean squared error against the target over the masked region (the whole
// image when the mask is empty).
inline double region_mse(const RewardTarget& target, std::span<const double> x0) {
  double sum = 0.0;
  double weight = 0.0;
  bool any = std::any_of(target.mask.begin(), target.mask.end(), [](double m) { return m > 0.0; });
  for (std::size_t p = 0; p < x0.size(); ++p) {
    const double w = any ? target.mask[p] : 1.0;
    const double d = x0[p] - target.target[p];
    sum += w * d * d;
    weight += w;
  }
  return sum / weight;
}

enum class TrainMode { kDense, kImageOnly };
enum class TargetKind { kRegionDetail, kMeanIntensity };

struct TrainConfig {
  std::size_t grid = 16;
  std::size_t steps = 2;
  std::size_t group = 8;
  std::size_t iterations = 300;
  // Step size for the image-level objective. The dense objective is
  // 1/(H W) times smaller in scale, so dense mode steps with
  // learning_rate * H * W; with R_P = 0 both modes then take identical steps.
  double learning_rate = 0.02;
  double epsilon = 0.2;
  double sigma = 0.5;
  double sigma_floor = kDefaultSigmaFloor;
  // KL toward the initial policy; 0 disables it.
  double beta = 0.0;
  std::size_t inner_epochs = 1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kDense;
  TargetKind target = TargetKind::kRegionDetail;
  double target_level = 0.8;
  std::size_t threads = 1;
};

struct CurvePoint {
  std::size_t iteration = 0;
  double mean_image_reward = 0.0;
  double mean_intensity = 0.0;
  double region_mse = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  ToyFlowPolicy initial_policy;
  ToyFlowPolicy policy;
  RewardTarget target;
  double region_mse = 0.0;
};

inline RewardTarget make_target(const TrainConfig& cfg) {
  return cfg.target == TargetKind::kRegionDetail
             ? region_detail_target(cfg.grid, cfg.grid)
             : mean_intensity_target(cfg.grid, cfg.grid, cfg.target_level);
}

inline void validate(const TrainConfig& cfg) {
  if (cfg.grid == 0 || cfg.steps == 0) throw ValidationError("train: grid and steps must be >= 1");
  if (cfg.group < 2) throw ValidationError("train: group size must be at least 2");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw ValidationError("train: epsilon outside (0, 1)");
  if (!(cfg.sigma > 0.0)) throw ValidationError("train: sigma must be positive");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ValidationError("train: learning rate must be finite and nonnegative");
  }
  if (cfg.beta < 0.0) throw ValidationError("train: beta must be nonnegative");
  if (cfg.inner_epochs == 0) throw ValidationError("train: inner_epochs must be >= 1");
}

// Sample -> reward -> advantages -> gradient ascent, K times. Deterministic
// for a given config.
inline TrainResult train_toy(const TrainConfig& cfg) {
  validate(cfg);
  const FlowShape shape{cfg.steps, cfg.grid, cfg.grid};
  const ToyFlowPolicy initial(shape, cfg.sigma);
  TrainResult result{{}, initial, initial, make_target(cfg), 0.0};
  ToyFlowPolicy& policy = result.policy;
  const RewardTarget& target = result.target;
  const KlPenalty kl{cfg.beta, &result.initial_policy};
  const double step_size = cfg.mode == TrainMode::kDense
                               ? cfg.learning_rate * static_cast<double>(shape.pixels())
                               : cfg.learning_rate;

  result.curve.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const ToyFlowPolicy old = policy;
    const std::uint64_t iter_seed = cfg.seed * 0x9E3779B97F4A7C15ULL + it;
    const auto trajs = sample_group(old, target.name, cfg.group, iter_seed, cfg.threads);

    std::vector<DenseRewardField> fields(trajs.size());
    CurvePoint point{it, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto& x0 = trajs[i].final_state();
      fields[i] = evaluate_reward(target, x0);
      double sum = 0.0;
      for (double v : x0) sum += v;
      point.mean_image_reward += fields[i].image_reward / static_cast<double>(trajs.size());
      point.mean_intensity +=
          sum / static_cast<double>(x0.size()) / static_cast<double>(trajs.size());
    }

    std::vector<double> image_adv;
    std::vector<std::vector<double>> dense_adv;
    if (cfg.mode == TrainMode::kDense) {
      dense_adv = dense_advantages(fields, cfg.sigma_floor);
    } else {
      std::vector<double> rewards(fields.size());
      for (std::size_t i = 0; i < fields.size(); ++i) rewards[i] = fields[i].image_reward;
      image_adv = group_advantages(rewards, cfg.sigma_floor);
    }

    for (std::size_t e = 0; e < cfg.inner_epochs; ++e) {
      const auto obj = cfg.mode == TrainMode::kDense
                           ? denseflow_objective(policy, old, trajs, dense_adv, cfg.epsilon, kl)
                           : flow_grpo_objective(policy, old, trajs, image_adv, cfg.epsilon, kl);
      auto drift = policy.drift();
      for (std::size_t j = 0; j < drift.size(); ++j) drift[j] += step_size * obj.gradient.drift[j];
      if (!std::all_of(drift.begin(), drift.end(), [](double v) { return std::isfinite(v); })) {
        throw ValidationError("train: policy diverged at iteration " + std::to_string(it) +
                              " (non-finite drift); lower the learning rate");
      }
    }
    point.region_mse = region_mse(target, mean_rollout(policy));
    result.curve.push_back(point);
  }
  result.region_mse = region_mse(target, mean_rollout(policy));
  return result;
}

}  // namespace flawmap
