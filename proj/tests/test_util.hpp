#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/denseflow.hpp"
#include "flawmap/io.hpp"
#include "flawmap/response_parser.hpp"
#include "oracles.hpp"

namespace testutil {

using flawmap::BoundingBox;
using flawmap::Heatmap;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }
  bool chance(double p) { return uniform() < p; }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// Values in [0, 1]; with `levels` > 0 they are quantized to k/levels, which
// produces plenty of ties. A fraction of pixels is forced to zero.
inline Heatmap random_heatmap(Rng& rng, std::size_t w, std::size_t h, int levels = 0,
                              double zero_fraction = 0.3) {
  std::vector<float> v(w * h);
  for (auto& x : v) {
    if (rng.chance(zero_fraction)) {
      x = 0.0F;
    } else if (levels > 0) {
      x = static_cast<float>(rng.index(static_cast<std::size_t>(levels) + 1)) / static_cast<float>(levels);
    } else {
      x = static_cast<float>(rng.uniform());
    }
  }
  return Heatmap(w, h, std::move(v));
}

inline BoundingBox random_box(Rng& rng, double w, double h) {
  const double x1 = rng.uniform(0.0, w - 1.0);
  const double y1 = rng.uniform(0.0, h - 1.0);
  return {x1, y1, rng.uniform(x1 + 0.5, w), rng.uniform(y1 + 0.5, h)};
}

inline std::vector<BoundingBox> random_boxes(Rng& rng, double w, double h, std::size_t max_count) {
  std::vector<BoundingBox> boxes(1 + rng.index(max_count));
  for (auto& b : boxes) b = random_box(rng, w, h);
  return boxes;
}

inline flawmap::ScoreVector random_scores(Rng& rng) {
  return {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, int levels = 0) {
  std::vector<double> v(n);
  for (auto& x : v) {
    x = levels > 0 ? static_cast<double>(rng.index(static_cast<std::size_t>(levels))) : rng.normal();
  }
  return v;
}

// A toy instance whose new policy is a small perturbation of the old one so
// the ratios stay moderate. Trajectories are sampled from the old policy.
struct ToySetup {
  oracle::ToyInstance instance;
  flawmap::ToyFlowPolicy old_policy;
  flawmap::ToyFlowPolicy new_policy;
  flawmap::ToyFlowPolicy ref_policy;
};

inline ToySetup random_toy(Rng& rng, std::size_t max_grid, std::size_t max_steps,
                           std::size_t max_group, double perturbation) {
  const flawmap::FlowShape shape{1 + rng.index(max_steps), 1 + rng.index(max_grid),
                                 1 + rng.index(max_grid)};
  const double sigma = rng.uniform(0.3, 1.5);
  std::vector<double> old_drift(shape.size()), new_drift(shape.size()), ref_drift(shape.size());
  for (std::size_t j = 0; j < shape.size(); ++j) {
    old_drift[j] = 0.3 * rng.normal();
    // Scaled so the step log-ratio has spread ~ perturbation / sigma at any grid size.
    new_drift[j] = old_drift[j] + perturbation * rng.normal() / std::sqrt(double(shape.pixels()));
    ref_drift[j] = old_drift[j] + 0.2 * rng.normal();
  }
  flawmap::ToyFlowPolicy old_policy(shape, sigma, old_drift);
  const std::size_t group = 2 + rng.index(max_group - 1);
  auto trajs = flawmap::sample_group(old_policy, "toy", group, rng.engine()());
  oracle::ToyInstance inst{shape, sigma, old_drift, ref_drift, trajs};
  return {std::move(inst), old_policy, flawmap::ToyFlowPolicy(shape, sigma, new_drift),
          flawmap::ToyFlowPolicy(shape, sigma, ref_drift)};
}

// Whether some step ratio lies within `margin` of a clip boundary, where a
// finite-difference probe could straddle the kink.
inline bool near_clip_boundary(const ToySetup& t, double eps, double margin) {
  for (const auto& traj : t.instance.trajs) {
    for (std::size_t k = 0; k < t.instance.shape.steps; ++k) {
      const double r = flawmap::image_ratio(t.new_policy, t.old_policy, traj, k);
      if (std::abs(r - (1 - eps)) < margin || std::abs(r - (1 + eps)) < margin) return true;
    }
  }
  return false;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-10});
  return std::abs(analytic - numeric) / scale;
}

// Max relative error between the analytic drift gradient and central
// differences of the oracle objective value.
template <typename ValueFn>
double max_fd_error(const std::vector<double>& drift, std::span<const double> analytic,
                    ValueFn&& value, double step = 1e-4) {
  double worst = 0.0;
  auto probe = drift;
  for (std::size_t j = 0; j < drift.size(); ++j) {
    probe[j] = drift[j] + step;
    const long double up = value(probe);
    probe[j] = drift[j] - step;
    const long double down = value(probe);
    probe[j] = drift[j];
    worst = std::max(worst, relative_error(analytic[j], static_cast<double>((up - down) / (2 * step))));
  }
  return worst;
}

inline double flow_fd_error(const ToySetup& t, const std::vector<double>& adv, double eps, double beta) {
  const flawmap::KlPenalty kl{beta, &t.ref_policy};
  const auto res = flawmap::flow_grpo_objective(t.new_policy, t.old_policy, t.instance.trajs, adv, eps, kl);
  const std::vector<double> drift(t.new_policy.drift().begin(), t.new_policy.drift().end());
  const double value_err = relative_error(res.value, static_cast<double>(oracle::flow_value(t.instance, drift, adv, eps, beta)));
  return std::max(value_err, max_fd_error(drift, res.gradient.drift, [&](const std::vector<double>& d) {
    return oracle::flow_value(t.instance, d, adv, eps, beta);
  }));
}

inline double dense_fd_error(const ToySetup& t, const std::vector<std::vector<double>>& adv, double eps,
                             double beta) {
  const flawmap::KlPenalty kl{beta, &t.ref_policy};
  const auto res = flawmap::denseflow_objective(t.new_policy, t.old_policy, t.instance.trajs, adv, eps, kl);
  const std::vector<double> drift(t.new_policy.drift().begin(), t.new_policy.drift().end());
  const double value_err = relative_error(
      res.value, static_cast<double>(oracle::dense_value(t.instance, drift, drift, adv, eps, beta)));
  return std::max(value_err, max_fd_error(drift, res.gradient.drift, [&](const std::vector<double>& d) {
    return oracle::dense_value(t.instance, d, drift, adv, eps, beta);
  }));
}

inline std::vector<std::vector<double>> random_grids(Rng& rng, std::size_t g, std::size_t pixels) {
  std::vector<std::vector<double>> out(g, std::vector<double>(pixels));
  for (auto& grid : out) {
    for (auto& v : grid) v = rng.normal();
  }
  return out;
}

// Random response with two-decimal scores, boxes with short decimal
// coordinates and multi-line reasoning text.
inline flawmap::ParsedResponse random_response(Rng& rng) {
  static const std::vector<std::string> words = {
      "the", "hand", "has", "six", "fingers", "sky", "looks", "washed", "out", "caption",
      "asks", "for", "a", "red", "car", "but", "it", "is", "blue", "(left)", "edge,", "0.5", "x"};
  const auto box_list = [&](std::size_t max) {
    std::vector<BoundingBox> boxes(rng.index(max + 1));
    for (auto& b : boxes) {
      const double x1 = std::round(rng.uniform(0, 500) * 4) / 4;
      const double y1 = std::round(rng.uniform(0, 500) * 10) / 10;
      b = {x1, y1, x1 + 1 + std::round(rng.uniform(0, 300)), y1 + 0.5 + std::round(rng.uniform(0, 300))};
    }
    return boxes;
  };
  flawmap::ParsedResponse r;
  const std::size_t lines = rng.index(4);
  for (std::size_t l = 0; l < lines; ++l) {
    if (l > 0) r.think_text += '\n';
    const std::size_t n = 1 + rng.index(12);
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) r.think_text += ' ';
      r.think_text += words[rng.index(words.size())];
    }
  }
  r.proposed_regions = box_list(4);
  r.scores = {rng.index(101) / 100.0, rng.index(101) / 100.0, rng.index(101) / 100.0,
              rng.index(101) / 100.0};
  r.misalignment_locations = box_list(3);
  r.artifact_locations = box_list(3);
  return r;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  flawmap::write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Writes `records` as a manifest plus HMF heatmaps and JSON side files.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir, const std::string& name,
                                            const std::vector<flawmap::EvaluationRecord>& records) {
  std::filesystem::create_directories(dir / name);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json e;
    e["id"] = r.id;
    const std::string stem = name + "/" + r.id;
    write_text(dir / (stem + "_scores.json"), flawmap::scores_to_json(r.scores).dump());
    e["score_path"] = stem + "_scores.json";
    if (r.artifact_heatmap) {
      flawmap::write_file(dir / (stem + "_art.hmf"),
                          flawmap::save_heatmap(*r.artifact_heatmap, flawmap::HeatmapFormat::kHmf));
      e["artifact_heatmap_path"] = stem + "_art.hmf";
    }
    if (r.misalignment_heatmap) {
      flawmap::write_file(dir / (stem + "_mis.png"),
                          flawmap::save_heatmap(*r.misalignment_heatmap, flawmap::HeatmapFormat::kPng));
      e["misalignment_heatmap_path"] = stem + "_mis.png";
    }
    write_text(dir / (stem + "_art_boxes.json"), flawmap::boxes_to_json(r.artifact_boxes).dump());
    e["artifact_boxes_path"] = stem + "_art_boxes.json";
    write_text(dir / (stem + "_mis_boxes.json"), flawmap::boxes_to_json(r.misalignment_boxes).dump());
    e["misalignment_boxes_path"] = stem + "_mis_boxes.json";
    manifest.push_back(std::move(e));
  }
  const auto path = dir / (name + ".json");
  write_text(path, manifest.dump(2));
  return path;
}

// A small annotated dataset: heatmaps on an 8-bit grid (so PNG storage is
// lossless), boxes exactly covering their highlighted rectangles, a mix of
// blank and highlighted maps. Binary maps make the boxes a perfect grounding.
inline std::vector<flawmap::EvaluationRecord> demo_dataset(std::uint64_t seed, std::size_t n,
                                                           bool binary = false) {
  Rng rng(seed);
  std::vector<flawmap::EvaluationRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    flawmap::EvaluationRecord r;
    r.id = "img" + std::to_string(i);
    r.scores = {std::round(rng.uniform() * 100) / 100, std::round(rng.uniform() * 100) / 100,
                std::round(rng.uniform() * 100) / 100, std::round(rng.uniform() * 100) / 100};
    for (int type = 0; type < 2; ++type) {
      Heatmap h(16, 12);
      std::vector<BoundingBox> boxes;
      if (i % 3 != 0 || type == 0) {
        const std::size_t x0 = rng.index(8), y0 = rng.index(6);
        const std::size_t x1 = x0 + 2 + rng.index(6), y1 = y0 + 2 + rng.index(5);
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) h.set(x, y, binary ? 1.0F : static_cast<float>(1 + rng.index(255)) / 255.0F);
        }
        boxes.push_back({double(x0), double(y0), double(x1), double(y1)});
      }
      (type == 0 ? r.artifact_heatmap : r.misalignment_heatmap) = h;
      (type == 0 ? r.artifact_boxes : r.misalignment_boxes) = boxes;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace testutil
