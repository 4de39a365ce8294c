#pragma once

// Serialization of MetricReport. JSON carries every field; TSV is the
// heatmap table, one row per heatmap type.

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "flawmap/metrics.hpp"

namespace flawmap {

enum class ReportFormat { kJson, kTsv };

inline constexpr std::string_view kTsvHeader =
    "heatmap\tmse_all\tmse_gt0\tcc\tkld\tsim\tnss\tauc_judd\tn_gt0\tn_gt_pos";

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::string tsv_cell(const std::optional<double>& v) {
  if (!v) return "NA";
  std::array<char, 32> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.6f", *v);
  return {buf.data(), static_cast<std::size_t>(n)};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const HeatmapMetrics& m) {
  nlohmann::ordered_json j;
  j["mse_all"] = detail::optional_json(m.mse_all);
  j["mse_gt0"] = detail::optional_json(m.mse_gt0);
  j["cc"] = detail::optional_json(m.cc);
  j["kld"] = detail::optional_json(m.kld);
  j["sim"] = detail::optional_json(m.sim);
  j["nss"] = detail::optional_json(m.nss);
  j["auc_judd"] = detail::optional_json(m.auc_judd);
  j["count_gt0"] = m.count_gt0;
  j["count_gt_pos"] = m.count_gt_pos;
  j["degenerate"] = m.degenerate;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  auto& scores = j["scores"];
  for (std::size_t d = 0; d < 4; ++d) {
    auto& dim = scores[std::string(kScoreDimensions[d])];
    dim["plcc"] = detail::optional_json(r.scores.dimensions[d].plcc);
    dim["srcc"] = detail::optional_json(r.scores.dimensions[d].srcc);
  }
  scores["average"]["plcc"] = detail::optional_json(r.scores.average.plcc);
  scores["average"]["srcc"] = detail::optional_json(r.scores.average.srcc);
  scores["count"] = r.scores.count;
  j["artifact"] = to_json(r.artifact);
  j["misalignment"] = to_json(r.misalignment);
  return j;
}

inline std::string emit_report(const MetricReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) return to_json(report).dump(2) + "\n";
  std::string out(kTsvHeader);
  out += '\n';
  const auto row = [&out](std::string_view name, const HeatmapMetrics& m) {
    out += name;
    for (const auto& v : {m.mse_all, m.mse_gt0, m.cc, m.kld, m.sim, m.nss, m.auc_judd}) {
      out += '\t';
      out += detail::tsv_cell(v);
    }
    out += '\t' + std::to_string(m.count_gt0) + '\t' + std::to_string(m.count_gt_pos) + '\n';
  };
  row("artifact", report.artifact);
  row("misalignment", report.misalignment);
  return out;
}

}  // namespace flawmap
