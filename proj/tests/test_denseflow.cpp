#include <gtest/gtest.h>

#include <cmath>

#include "flawmap/denseflow.hpp"
#include "test_util.hpp"

using namespace flawmap;

TEST(Sampling, DeterministicWithRecordedLikelihoods) {
  const FlowShape shape{3, 4, 5};
  testutil::Rng rng(1);
  std::vector<double> drift(shape.size());
  for (auto& d : drift) d = rng.normal();
  const ToyFlowPolicy policy(shape, 0.7, drift);
  const auto a = sample_group(policy, "c", 4, 42);
  EXPECT_EQ(a, sample_group(policy, "c", 4, 42));
  EXPECT_EQ(a, sample_group(policy, "c", 4, 42, 3));
  EXPECT_NE(a, sample_group(policy, "c", 4, 43));
  for (const auto& t : a) {
    ASSERT_EQ(t.states.size(), 4u);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t p = 0; p < 20; ++p) {
        const double lp = oracle::gauss_logpdf(t.states[k + 1][p], t.states[k][p] + policy.drift(k, p), 0.7);
        EXPECT_NEAR(t.log_likelihoods[k * 20 + p], lp, 1e-12);
      }
    }
  }
  EXPECT_THROW(sample_group(policy, "c", 1, 0), ValidationError);
}

TEST(Sampling, StepVarianceIsSigmaSquared) {
  for (double sigma : {0.5, 0.05, 0.005}) {
    const ToyFlowPolicy policy({1, 1, 1}, sigma, {0.3});
    const auto group = sample_group(policy, "c", 10000, 7);
    double sum = 0, sq = 0;
    for (const auto& t : group) {
      const double d = t.states[1][0] - t.states[0][0] - 0.3;
      sum += d;
      sq += d * d;
    }
    const double var = sq / group.size() - (sum / group.size()) * (sum / group.size());
    EXPECT_NEAR(var / (sigma * sigma), 1.0, 0.05) << sigma;
  }
}

TEST(Ratio, IdentityAndOracle) {
  testutil::Rng rng(2);
  for (int n = 0; n < 50; ++n) {
    const auto t = testutil::random_toy(rng, 8, 4, 4, 0.3);
    for (std::size_t i = 0; i < t.instance.trajs.size(); ++i) {
      for (std::size_t k = 0; k < t.instance.shape.steps; ++k) {
        EXPECT_EQ(image_ratio(t.old_policy, t.old_policy, t.instance.trajs[i], k), 1.0);
        const double r = image_ratio(t.new_policy, t.old_policy, t.instance.trajs[i], k);
        const double o = static_cast<double>(oracle::ratio(t.instance, {t.new_policy.drift().begin(), t.new_policy.drift().end()}, i, k));
        EXPECT_NEAR(r / o, 1.0, 1e-12);
      }
    }
  }
}

TEST(PixelSurrogate, NumericallyEqualsImageRatio) {
  testutil::Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    const auto t = testutil::random_toy(rng, 8, 4, 4, 0.5);
    for (const auto& traj : t.instance.trajs) {
      for (std::size_t k = 0; k < t.instance.shape.steps; ++k) {
        const double r = image_ratio(t.new_policy, t.old_policy, traj, k);
        for (double s : pixel_surrogate_value(t.new_policy, t.old_policy, traj, k)) {
          EXPECT_LE(std::abs(s - r), 1e-12 * r);
        }
        for (double s : pixel_surrogate_value(t.old_policy, t.old_policy, traj, k)) EXPECT_EQ(s, 1.0);
      }
    }
  }
}

TEST(PixelSurrogate, SensitivityMatchesFiniteDifferences) {
  testutil::Rng rng(4);
  auto t = testutil::random_toy(rng, 1, 1, 2, 0.3);
  while (t.instance.shape.pixels() != 16) {
    t = testutil::random_toy(rng, 4, 2, 2, 0.3);
  }
  const auto& traj = t.instance.trajs[0];
  const std::vector<double> anchor(t.new_policy.drift().begin(), t.new_policy.drift().end());
  const double h = 1e-4;
  for (std::size_t k = 0; k < t.instance.shape.steps; ++k) {
    const auto ds = pixel_surrogate_sensitivity(t.new_policy, t.old_policy, traj, k);
    const long double r = oracle::ratio(t.instance, anchor, 0, k);
    for (std::size_t p = 0; p < 16; ++p) {
      auto up = anchor, down = anchor;
      up[k * 16 + p] += h;
      down[k * 16 + p] -= h;
      const auto s = [&](const std::vector<double>& d) {
        return r * std::exp(oracle::step_logp(t.instance, d, 0, k, p) - oracle::step_logp(t.instance, anchor, 0, k, p));
      };
      const double fd = static_cast<double>((s(up) - s(down)) / (2 * h));
      EXPECT_LT(testutil::relative_error(ds[p], fd), 1e-5);
    }
  }
}

TEST(DenseAdvantages, Contract) {
  testutil::Rng rng(5);
  // R_P = 0 reduces to the image-level advantage at every pixel.
  std::vector<DenseRewardField> flat(5);
  std::vector<double> image(5);
  for (std::size_t i = 0; i < 5; ++i) {
    image[i] = rng.normal();
    flat[i] = {image[i], std::vector<double>(6, 0.0)};
  }
  const auto expected = group_advantages(image);
  const auto a = dense_advantages(flat);
  for (std::size_t i = 0; i < 5; ++i) {
    for (double v : a[i]) EXPECT_EQ(v, expected[i]);
  }
  // G = 2 gives -1 / +1.
  const std::vector<DenseRewardField> two{{0.0, {0.1, 0.5}}, {0.0, {0.3, 0.2}}};
  const auto b = dense_advantages(two);
  EXPECT_NEAR(b[0][0], -1.0, 1e-12);
  EXPECT_NEAR(b[0][1], 1.0, 1e-12);
  EXPECT_NEAR(b[1][0], 1.0, 1e-12);
  EXPECT_NEAR(b[1][1], -1.0, 1e-12);
  // Per-pixel oracle.
  std::vector<DenseRewardField> f(3);
  for (auto& x : f) {
    x.image_reward = rng.normal();
    for (int p = 0; p < 7; ++p) x.pixel_rewards.push_back(rng.normal());
  }
  const auto c = dense_advantages(f);
  for (std::size_t p = 0; p < 7; ++p) {
    std::vector<double> col;
    for (const auto& x : f) col.push_back(x.image_reward + x.pixel_rewards[p]);
    const auto o = oracle::group_advantages(col);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c[i][p], o[i], 1e-12);
  }
  const std::vector<DenseRewardField> bad{{0.0, {0.1}}, {0.0, {0.3, 0.2}}};
  EXPECT_THROW(dense_advantages(bad), ValidationError);
}

TEST(Objectives, ValuesAtEqualPolicies) {
  testutil::Rng rng(6);
  const auto t = testutil::random_toy(rng, 4, 3, 4, 0.3);
  const std::size_t g = t.instance.trajs.size();
  const std::vector<std::vector<double>> grids(g, std::vector<double>(t.instance.shape.pixels(), 0.4));
  const auto dense = denseflow_objective(t.old_policy, t.old_policy, t.instance.trajs, grids, 0.2);
  EXPECT_NEAR(dense.value, 0.4, 1e-15);
  std::vector<double> adv(g);
  double mean = 0;
  for (auto& a : adv) mean += (a = rng.normal()) / g;
  EXPECT_NEAR(flow_grpo_objective(t.old_policy, t.old_policy, t.instance.trajs, adv, 0.2).value, mean, 1e-14);
  // KL against an identical reference contributes nothing.
  const KlPenalty kl{1000.0, &t.old_policy};
  const auto with_kl = flow_grpo_objective(t.old_policy, t.old_policy, t.instance.trajs, adv, 0.2, kl);
  EXPECT_NEAR(with_kl.value, mean, 1e-14);
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
  testutil::Rng rng(7);
  int checked = 0;
  while (checked < 12) {
    const double eps = 0.2;
    const auto t = testutil::random_toy(rng, 4, 3, 3, 0.25);
    if (testutil::near_clip_boundary(t, eps, 0.01)) continue;
    const double beta = checked % 2 ? 0.3 : 0.0;
    std::vector<double> adv(t.instance.trajs.size());
    for (auto& a : adv) a = rng.normal();
    EXPECT_LT(testutil::flow_fd_error(t, adv, eps, beta), 1e-4);
    const auto grids = testutil::random_grids(rng, adv.size(), t.instance.shape.pixels());
    EXPECT_LT(testutil::dense_fd_error(t, grids, eps, beta), 1e-4);
    ++checked;
  }
}

TEST(Objectives, DenseDegeneratesToScaledImageObjective) {
  testutil::Rng rng(8);
  for (int n = 0; n < 20; ++n) {
    const auto t = testutil::random_toy(rng, 6, 3, 4, 0.02);
    std::vector<double> adv(t.instance.trajs.size());
    for (auto& a : adv) a = rng.normal();
    std::vector<std::vector<double>> grids;
    for (double a : adv) grids.emplace_back(t.instance.shape.pixels(), a);
    const auto flow = flow_grpo_objective(t.new_policy, t.old_policy, t.instance.trajs, adv, 0.2);
    const auto dense = denseflow_objective(t.new_policy, t.old_policy, t.instance.trajs, grids, 0.2);
    const double hw = static_cast<double>(t.instance.shape.pixels());
    for (std::size_t j = 0; j < flow.gradient.drift.size(); ++j) {
      EXPECT_LE(testutil::relative_error(dense.gradient.drift[j], flow.gradient.drift[j] / hw), 1e-8);
    }
    EXPECT_NEAR(dense.value, flow.value, 1e-12);
  }
}

TEST(Objectives, ClipBranchIsSharedAcrossPixelsOfAStep) {
  testutil::Rng rng(9);
  const auto t = testutil::random_toy(rng, 5, 2, 4, 1.0);
  std::vector<std::vector<double>> grids(t.instance.trajs.size(), std::vector<double>(t.instance.shape.pixels(), 1.0));
  const auto dense = denseflow_objective(t.new_policy, t.old_policy, t.instance.trajs, grids, 0.2);
  const auto& shape = t.instance.shape;
  for (std::size_t k = 0; k < shape.steps; ++k) {
    for (std::size_t i = 0; i < t.instance.trajs.size(); ++i) {
      const double r = image_ratio(t.new_policy, t.old_policy, t.instance.trajs[i], k);
      const bool unclipped = surrogate_unclipped(r, 1.0, 0.2);
      for (double s : pixel_surrogate_value(t.new_policy, t.old_policy, t.instance.trajs[i], k)) {
        EXPECT_EQ(surrogate_unclipped(s, 1.0, 0.2), unclipped);
      }
    }
  }
  EXPECT_TRUE(std::isfinite(dense.value));
}

TEST(Training, ZeroLearningRateKeepsPolicy) {
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.learning_rate = 0.0;
  const auto r = train_toy(cfg);
  EXPECT_EQ(r.policy, r.initial_policy);
}

TEST(Training, DeterministicAcrossThreads) {
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.seed = 3;
  const auto a = train_toy(cfg);
  cfg.threads = 3;
  const auto b = train_toy(cfg);
  EXPECT_EQ(a.policy, b.policy);
  EXPECT_EQ(a.region_mse, b.region_mse);
}

TEST(Training, ImageOnlyTracksMeanIntensity) {
  TrainConfig cfg;
  cfg.mode = TrainMode::kImageOnly;
  cfg.target = TargetKind::kMeanIntensity;
  cfg.target_level = 0.8;
  cfg.learning_rate = 0.2;
  cfg.iterations = 300;
  const auto r = train_toy(cfg);
  // Windowed means of the sampled intensity move toward 0.8.
  std::vector<double> windows;
  for (std::size_t w = 0; w < 6; ++w) {
    double s = 0;
    for (std::size_t i = w * 50; i < (w + 1) * 50; ++i) s += r.curve[i].mean_intensity;
    windows.push_back(std::abs(s / 50 - 0.8));
  }
  for (std::size_t w = 1; w < windows.size(); ++w) EXPECT_LE(windows[w], windows[w - 1] + 0.05);
  EXPECT_LT(windows.back(), 0.1);
  EXPECT_LT(windows.back(), windows.front() / 4);
}

TEST(Training, DenseBeatsImageOnlyOnRegionTarget) {
  TrainConfig cfg;
  cfg.iterations = 150;
  const auto dense = train_toy(cfg);
  cfg.mode = TrainMode::kImageOnly;
  const auto image = train_toy(cfg);
  EXPECT_LT(dense.region_mse, image.region_mse);
}

TEST(Training, RejectsBadConfigsAndDivergence) {
  TrainConfig cfg;
  cfg.epsilon = 1.0;
  EXPECT_THROW(train_toy(cfg), ValidationError);
  cfg = {};
  cfg.group = 1;
  EXPECT_THROW(train_toy(cfg), ValidationError);
  cfg = {};
  cfg.learning_rate = 1e300;
  cfg.iterations = 50;
  EXPECT_THROW(train_toy(cfg), ValidationError);
}
