#pragma once

// Verifiable rewards for an evaluator's output against human annotations:
// grounding (boxes vs. heatmap), score (l1 per dimension) and heatmap (1 - MSE
// per type), summed into the total reward in [0, 7].

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"
#include "flawmap/metrics.hpp"

namespace flawmap {

enum class GroundingEdgeCase { kNone, kBlankMatch, kBlankMismatch, kMissingBoxes };

inline std::string_view to_string(GroundingEdgeCase e) {
  switch (e) {
    case GroundingEdgeCase::kNone: return "none";
    case GroundingEdgeCase::kBlankMatch: return "blank_match";
    case GroundingEdgeCase::kBlankMismatch: return "blank_mismatch";
    case GroundingEdgeCase::kMissingBoxes: return "missing_boxes";
  }
  return "none";
}

// When an edge case decides the reward, the three sub-rewards are reported
// equal to the combined value.
struct GroundingBreakdown {
  double completeness = 0.0;
  double compactness = 0.0;
  double uniqueness = 0.0;
  double combined = 0.0;
  GroundingEdgeCase edge_case = GroundingEdgeCase::kNone;
};

struct GroundingOptions {
  // A heatmap whose total mass is <= this value counts as blank.
  double blank_tolerance = 0.0;
};

// Fraction of the heatmap's mass that lies under the union of the boxes.
inline double completeness(const Heatmap& h, std::span<const BoundingBox> boxes) {
  if (boxes.empty()) throw ValidationError("completeness: empty box list");
  const double total = total_mass(h);
  if (!(total > 0.0)) throw ValidationError("completeness: blank heatmap");
  return std::clamp(mass_in_region(h, boxes) / total, 0.0, 1.0);
}

// Mean over boxes of the average intensity of the pixels each box contains.
inline double compactness(const Heatmap& h, std::span<const BoundingBox> boxes) {
  if (boxes.empty()) throw ValidationError("compactness: empty box list");
  double sum = 0.0;
  for (const auto& b : boxes) {
    const std::size_t n = pixels_in_box(b, h.width(), h.height());
    if (n > 0) sum += mass_in_box(h, b) / static_cast<double>(n);
  }
  return std::clamp(sum / static_cast<double>(boxes.size()), 0.0, 1.0);
}

// 1 - mean pairwise IoU; 1 when there are fewer than two boxes.
inline double uniqueness(std::span<const BoundingBox> boxes) {
  if (boxes.size() < 2) return 1.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      sum += box_iou(boxes[i], boxes[j]);
      ++pairs;
    }
  }
  return 1.0 - sum / static_cast<double>(pairs);
}

namespace detail {

inline GroundingBreakdown decided(double value, GroundingEdgeCase e) {
  return {value, value, value, value, e};
}

}  // namespace detail

inline GroundingBreakdown grounding_reward_single(const Heatmap& h,
                                                  std::span<const BoundingBox> boxes,
                                                  const GroundingOptions& opts = {}) {
  const bool blank = is_blank(h, opts.blank_tolerance);
  if (blank && boxes.empty()) return detail::decided(1.0, GroundingEdgeCase::kBlankMatch);
  if (blank) return detail::decided(0.0, GroundingEdgeCase::kBlankMismatch);
  if (boxes.empty()) return detail::decided(0.0, GroundingEdgeCase::kMissingBoxes);

  GroundingBreakdown g;
  g.completeness = completeness(h, boxes);
  g.compactness = compactness(h, boxes);
  g.uniqueness = uniqueness(boxes);
  g.combined = (g.completeness + g.compactness + g.uniqueness) / 3.0;
  return g;
}

// An absent annotation heatmap is blank.
inline GroundingBreakdown grounding_reward_single(const std::optional<Heatmap>& h,
                                                  std::span<const BoundingBox> boxes,
                                                  const GroundingOptions& opts = {}) {
  if (h) return grounding_reward_single(*h, boxes, opts);
  return boxes.empty() ? detail::decided(1.0, GroundingEdgeCase::kBlankMatch)
                       : detail::decided(0.0, GroundingEdgeCase::kBlankMismatch);
}

inline double grounding_reward(const Heatmap& artifact_heatmap, const Heatmap& misalignment_heatmap,
                               std::span<const BoundingBox> artifact_boxes,
                               std::span<const BoundingBox> misalignment_boxes,
                               const GroundingOptions& opts = {}) {
  const auto art = grounding_reward_single(artifact_heatmap, artifact_boxes, opts);
  const auto mis = grounding_reward_single(misalignment_heatmap, misalignment_boxes, opts);
  return 0.5 * (art.combined + mis.combined);
}

// Sum over the four dimensions of 1 - |pred - gt|, in [0, 4].
inline double score_reward(const ScoreVector& pred, const ScoreVector& gt) {
  validate_scores(pred);
  validate_scores(gt);
  const auto p = pred.as_array();
  const auto g = gt.as_array();
  double sum = 0.0;
  for (std::size_t d = 0; d < p.size(); ++d) sum += 1.0 - std::abs(p[d] - g[d]);
  return sum;
}

inline double heatmap_pair_reward(const Heatmap& pred, const Heatmap& gt) {
  return 1.0 - heatmap_mse(pred, gt);
}

// Sum over the two heatmap types of 1 - per-pixel MSE, in [0, 2].
inline double heatmap_reward(const Heatmap& pred_artifact, const Heatmap& gt_artifact,
                             const Heatmap& pred_misalignment, const Heatmap& gt_misalignment) {
  return heatmap_pair_reward(pred_artifact, gt_artifact) +
         heatmap_pair_reward(pred_misalignment, gt_misalignment);
}

namespace detail {

// Absent maps are blank; two absent maps agree perfectly.
inline double optional_pair_reward(const std::optional<Heatmap>& pred,
                                   const std::optional<Heatmap>& gt) {
  if (pred && gt) return heatmap_pair_reward(*pred, *gt);
  if (!pred && !gt) return 1.0;
  const Heatmap& present = pred ? *pred : *gt;
  return heatmap_pair_reward(present, Heatmap(present.width(), present.height()));
}

}  // namespace detail

struct RewardReport {
  std::string id;
  GroundingBreakdown artifact;
  GroundingBreakdown misalignment;
  double grounding = 0.0;
  double score = 0.0;
  double heatmap = 0.0;
  double total = 0.0;
};

// Grades a prediction against its annotation: the predicted boxes of each
// type are grounded on the annotated heatmap of the same type.
inline RewardReport total_reward(const EvaluationRecord& pred, const EvaluationRecord& gt,
                                 const GroundingOptions& opts = {}) {
  RewardReport r;
  r.id = gt.id;
  r.artifact = grounding_reward_single(gt.artifact_heatmap, pred.artifact_boxes, opts);
  r.misalignment = grounding_reward_single(gt.misalignment_heatmap, pred.misalignment_boxes, opts);
  r.grounding = 0.5 * (r.artifact.combined + r.misalignment.combined);
  r.score = score_reward(pred.scores, gt.scores);
  r.heatmap = detail::optional_pair_reward(pred.artifact_heatmap, gt.artifact_heatmap) +
              detail::optional_pair_reward(pred.misalignment_heatmap, gt.misalignment_heatmap);
  r.total = r.grounding + r.score + r.heatmap;
  return r;
}

inline nlohmann::ordered_json to_json(const GroundingBreakdown& g) {
  nlohmann::ordered_json j;
  j["completeness"] = g.completeness;
  j["compactness"] = g.compactness;
  j["uniqueness"] = g.uniqueness;
  j["combined"] = g.combined;
  j["edge_case"] = std::string(to_string(g.edge_case));
  return j;
}

inline nlohmann::ordered_json to_json(const RewardReport& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["grounding"]["artifact"] = to_json(r.artifact);
  j["grounding"]["misalignment"] = to_json(r.misalignment);
  j["grounding"]["reward"] = r.grounding;
  j["score_reward"] = r.score;
  j["heatmap_reward"] = r.heatmap;
  j["total"] = r.total;
  return j;
}

}  // namespace flawmap
