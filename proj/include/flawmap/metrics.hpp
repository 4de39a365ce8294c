#pragma once

// Score correlation (PLCC, SRCC) and heatmap quality metrics (MSE, CC, KLD,
// SIM, NSS, AUC-Judd), plus the dataset report that splits heatmap metrics
// by blank (GT=0) and non-blank (GT>0) annotations.
//
// Standard deviations are population (divide by n) throughout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"
#include "flawmap/parallel.hpp"

namespace flawmap {

inline constexpr double kKldEpsilon = 1e-12;

namespace detail {

template <typename T>
bool is_constant(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [&](T x) { return x == v.front(); });
}

template <typename T>
double mean_of(std::span<const T> v) {
  double sum = 0.0;
  for (T x : v) sum += static_cast<double>(x);
  return sum / static_cast<double>(v.size());
}

// Pearson correlation of two non-constant sequences.
template <typename T>
double pearson_unchecked(std::span<const T> xs, std::span<const T> ys) {
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = static_cast<double>(xs[i]) - mx;
    const double dy = static_cast<double>(ys[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline void check_same_shape(const Heatmap& pred, const Heatmap& gt, const char* metric) {
  if (!pred.same_shape(gt)) {
    throw ValidationError(std::string(metric) + ": dimension mismatch " +
                          std::to_string(pred.width()) + "x" + std::to_string(pred.height()) +
                          " vs " + std::to_string(gt.width()) + "x" +
                          std::to_string(gt.height()));
  }
}

}  // namespace detail

// Pearson linear correlation. Both inputs constant is an error; exactly one
// constant input has no linear relationship and yields 0.
inline double plcc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("plcc: length mismatch");
  if (xs.size() < 2) throw ValidationError("plcc: need at least two samples");
  const bool cx = detail::is_constant(xs);
  const bool cy = detail::is_constant(ys);
  if (cx && cy) throw ValidationError("plcc: both inputs constant");
  if (cx || cy) return 0.0;
  return detail::pearson_unchecked(xs, ys);
}

// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

// Spearman rank correlation: Pearson correlation of average ranks.
inline double srcc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("srcc: length mismatch");
  if (xs.size() < 2) throw ValidationError("srcc: need at least two samples");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return plcc(rx, ry);
}

inline double heatmap_mse(const Heatmap& pred, const Heatmap& gt) {
  detail::check_same_shape(pred, gt, "mse");
  const auto p = pred.values();
  const auto g = gt.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(g[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(p.size());
}

inline double heatmap_cc(const Heatmap& pred, const Heatmap& gt) {
  detail::check_same_shape(pred, gt, "cc");
  if (detail::is_constant(pred.values()) || detail::is_constant(gt.values())) {
    throw ValidationError("cc: constant heatmap");
  }
  return detail::pearson_unchecked(pred.values(), gt.values());
}

// KL(G || P) over mass-normalized maps with epsilon regularization inside
// both divisions; a blank prediction gives a large finite value.
inline double heatmap_kld(const Heatmap& pred, const Heatmap& gt) {
  detail::check_same_shape(pred, gt, "kld");
  const double gt_mass = total_mass(gt);
  if (!(gt_mass > 0.0)) throw ValidationError("kld: blank ground truth");
  const double pred_norm = total_mass(pred) + kKldEpsilon;
  const auto p = pred.values();
  const auto g = gt.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = static_cast<double>(g[i]) / gt_mass;
    if (gi == 0.0) continue;
    const double pi = static_cast<double>(p[i]) / pred_norm;
    sum += gi * std::log(kKldEpsilon + gi / (kKldEpsilon + pi));
  }
  return std::max(sum, 0.0);
}

// Histogram intersection sum(min(P, G)) of mass-normalized maps, evaluated as
// 1 - |P - G|_1 / 2 so that identical maps score exactly 1.
inline double heatmap_sim(const Heatmap& pred, const Heatmap& gt) {
  detail::check_same_shape(pred, gt, "sim");
  const double pm = total_mass(pred);
  const double gm = total_mass(gt);
  if (!(pm > 0.0) || !(gm > 0.0)) throw ValidationError("sim: blank heatmap");
  const auto p = pred.values();
  const auto g = gt.values();
  double l1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    l1 += std::abs(static_cast<double>(p[i]) / pm - static_cast<double>(g[i]) / gm);
  }
  return std::clamp(1.0 - 0.5 * l1, 0.0, 1.0);
}

// Mean z-scored prediction over fixation pixels (gt > threshold).
inline double heatmap_nss(const Heatmap& pred, const Heatmap& gt, double fixation_threshold = 0.0) {
  detail::check_same_shape(pred, gt, "nss");
  const auto p = pred.values();
  const auto g = gt.values();
  if (detail::is_constant(p)) throw ValidationError("nss: constant prediction");
  const double mu = detail::mean_of(p);
  double ss = 0.0;
  for (float v : p) ss += (v - mu) * (v - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(p.size()));
  double sum = 0.0;
  std::size_t fixations = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i] > fixation_threshold) {
      sum += (static_cast<double>(p[i]) - mu) / sigma;
      ++fixations;
    }
  }
  if (fixations == 0) throw ValidationError("nss: empty fixation set");
  return sum / static_cast<double>(fixations);
}

// ROC area with fixation pixels (gt > threshold) as positives and every other
// pixel as a negative. Thresholds sweep the distinct prediction values and
// the curve is integrated with trapezoids, so tied pairs count one half.
inline double heatmap_auc_judd(const Heatmap& pred, const Heatmap& gt,
                               double fixation_threshold = 0.0) {
  detail::check_same_shape(pred, gt, "auc_judd");
  const auto p = pred.values();
  const auto g = gt.values();
  std::size_t positives = 0;
  for (float v : g) positives += v > fixation_threshold ? 1 : 0;
  const std::size_t negatives = g.size() - positives;
  if (positives == 0) throw ValidationError("auc_judd: empty fixation set");
  if (negatives == 0) throw ValidationError("auc_judd: fixation set covers every pixel");

  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  double area = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const std::size_t tp_prev = tp;
    const std::size_t fp_prev = fp;
    std::size_t j = i;
    while (j < order.size() && p[order[j]] == p[order[i]]) {
      if (g[order[j]] > fixation_threshold) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    area += static_cast<double>(fp - fp_prev) * static_cast<double>(tp + tp_prev);
    i = j;
  }
  return area / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

// --- dataset report ---------------------------------------------------------

struct CorrelationPair {
  std::optional<double> plcc;
  std::optional<double> srcc;
};

struct ScoreMetrics {
  std::array<CorrelationPair, 4> dimensions;
  CorrelationPair average;
  std::size_t count = 0;
};

// cc/kld/sim/nss/auc_judd average over GT>0 records only. `degenerate`
// counts GT>0 records where a metric was undefined for that prediction and a
// neutral value was used instead (cc 0, sim 0, nss 0, auc_judd 0.5).
struct HeatmapMetrics {
  std::optional<double> mse_all;
  std::optional<double> mse_gt0;
  std::optional<double> cc;
  std::optional<double> kld;
  std::optional<double> sim;
  std::optional<double> nss;
  std::optional<double> auc_judd;
  std::size_t count_gt0 = 0;
  std::size_t count_gt_pos = 0;
  std::size_t degenerate = 0;
};

struct MetricReport {
  ScoreMetrics scores;
  HeatmapMetrics artifact;
  HeatmapMetrics misalignment;
};

struct MetricOptions {
  double fixation_threshold = 0.0;
  double blank_tolerance = 0.0;
  std::size_t threads = 1;
};

namespace detail {

struct PairMetrics {
  bool present = false;
  bool blank_gt = false;
  bool degenerate = false;
  double mse = 0.0;
  double cc = 0.0;
  double kld = 0.0;
  double sim = 0.0;
  double nss = 0.0;
  double auc = 0.0;
};

inline PairMetrics pair_metrics(const Heatmap& pred, const Heatmap& gt, const MetricOptions& opts) {
  PairMetrics m;
  m.present = true;
  m.mse = heatmap_mse(pred, gt);
  m.blank_gt = is_blank(gt, opts.blank_tolerance);
  if (m.blank_gt) return m;

  const bool pred_constant = is_constant(pred.values());
  const bool gt_constant = is_constant(gt.values());
  std::size_t positives = 0;
  for (float v : gt.values()) positives += v > opts.fixation_threshold ? 1 : 0;

  m.kld = heatmap_kld(pred, gt);
  if (pred_constant || gt_constant) {
    m.degenerate = true;
  } else {
    m.cc = heatmap_cc(pred, gt);
  }
  if (total_mass(pred) > 0.0) {
    m.sim = heatmap_sim(pred, gt);
  } else {
    m.degenerate = true;
  }
  if (!pred_constant && positives > 0) {
    m.nss = heatmap_nss(pred, gt, opts.fixation_threshold);
  } else {
    m.degenerate = true;
  }
  if (positives > 0 && positives < gt.size()) {
    m.auc = heatmap_auc_judd(pred, gt, opts.fixation_threshold);
  } else {
    m.auc = 0.5;
    m.degenerate = true;
  }
  return m;
}

inline HeatmapMetrics reduce_pairs(std::span<const PairMetrics> pairs) {
  HeatmapMetrics out;
  double mse_all = 0.0, mse_gt0 = 0.0, cc = 0.0, kld = 0.0, sim = 0.0, nss = 0.0, auc = 0.0;
  std::size_t all = 0;
  for (const auto& m : pairs) {
    if (!m.present) continue;
    ++all;
    mse_all += m.mse;
    if (m.blank_gt) {
      ++out.count_gt0;
      mse_gt0 += m.mse;
      continue;
    }
    ++out.count_gt_pos;
    out.degenerate += m.degenerate ? 1 : 0;
    cc += m.cc;
    kld += m.kld;
    sim += m.sim;
    nss += m.nss;
    auc += m.auc;
  }
  if (all > 0) out.mse_all = mse_all / static_cast<double>(all);
  if (out.count_gt0 > 0) out.mse_gt0 = mse_gt0 / static_cast<double>(out.count_gt0);
  if (out.count_gt_pos > 0) {
    const auto n = static_cast<double>(out.count_gt_pos);
    out.cc = cc / n;
    out.kld = kld / n;
    out.sim = sim / n;
    out.nss = nss / n;
    out.auc_judd = auc / n;
  }
  return out;
}

inline std::optional<double> safe_correlation(std::span<const double> xs, std::span<const double> ys,
                                              bool rank) {
  if (xs.size() < 2 || (is_constant(xs) && is_constant(ys))) return std::nullopt;
  return rank ? srcc(xs, ys) : plcc(xs, ys);
}

}  // namespace detail

// Pairs records by id and reduces in ground-truth order. Records whose
// heatmap of a type is absent on either side are left out of that type's
// metrics. Dimension mismatches across all records are collected into one
// error.
inline MetricReport evaluate_dataset(std::span<const EvaluationRecord> preds,
                                     std::span<const EvaluationRecord> gts,
                                     const MetricOptions& opts = {}) {
  if (preds.size() != gts.size()) {
    throw ValidationError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(gts.size()) + " ground-truth records");
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!by_id.emplace(preds[i].id, i).second) {
      throw ValidationError("metrics: duplicate prediction id '" + preds[i].id + "'");
    }
  }
  std::vector<std::size_t> match(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto it = by_id.find(gts[i].id);
    if (it == by_id.end()) throw ValidationError("metrics: no prediction for id '" + gts[i].id + "'");
    match[i] = it->second;
  }

  const std::size_t n = gts.size();
  std::vector<detail::PairMetrics> art(n), mis(n);
  std::vector<std::string> errors(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    const auto& p = preds[match[i]];
    const auto& g = gts[i];
    try {
      if (p.artifact_heatmap && g.artifact_heatmap) {
        art[i] = detail::pair_metrics(*p.artifact_heatmap, *g.artifact_heatmap, opts);
      }
      if (p.misalignment_heatmap && g.misalignment_heatmap) {
        mis[i] = detail::pair_metrics(*p.misalignment_heatmap, *g.misalignment_heatmap, opts);
      }
    } catch (const ValidationError& e) {
      errors[i] = g.id + ": " + e.what();
    }
  });
  std::string combined;
  for (const auto& e : errors) {
    if (!e.empty()) combined += (combined.empty() ? "" : "; ") + e;
  }
  if (!combined.empty()) throw ValidationError("metrics: " + combined);

  MetricReport report;
  report.artifact = detail::reduce_pairs(art);
  report.misalignment = detail::reduce_pairs(mis);

  report.scores.count = n;
  double plcc_sum = 0.0, srcc_sum = 0.0;
  std::size_t plcc_n = 0, srcc_n = 0;
  for (std::size_t d = 0; d < 4; ++d) {
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = preds[match[i]].scores.as_array()[d];
      ys[i] = gts[i].scores.as_array()[d];
    }
    auto& dim = report.scores.dimensions[d];
    dim.plcc = detail::safe_correlation(xs, ys, false);
    dim.srcc = detail::safe_correlation(xs, ys, true);
    if (dim.plcc) {
      plcc_sum += *dim.plcc;
      ++plcc_n;
    }
    if (dim.srcc) {
      srcc_sum += *dim.srcc;
      ++srcc_n;
    }
  }
  if (plcc_n > 0) report.scores.average.plcc = plcc_sum / static_cast<double>(plcc_n);
  if (srcc_n > 0) report.scores.average.srcc = srcc_sum / static_cast<double>(srcc_n);
  return report;
}

}  // namespace flawmap
