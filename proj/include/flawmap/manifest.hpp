#pragma once

// Record manifests: a JSON list of
//   {"id", "score_path", "artifact_heatmap_path", "misalignment_heatmap_path",
//    "artifact_boxes_path", "misalignment_boxes_path"}
// with relative paths resolved against the manifest's directory. Any heatmap
// or box path may be omitted. A prediction may give "response_path" instead
// of score/box paths; the response is parsed leniently and its location
// lists become the record's boxes.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"
#include "flawmap/io.hpp"
#include "flawmap/response_parser.hpp"

namespace flawmap {

namespace detail {

inline std::optional<std::filesystem::path> manifest_path(const nlohmann::json& entry,
                                                          const char* key,
                                                          const std::filesystem::path& base) {
  if (!entry.contains(key) || entry.at(key).is_null()) return std::nullopt;
  if (!entry.at(key).is_string()) throw ValidationError(std::string("manifest: '") + key + "' must be a string");
  std::filesystem::path p = entry.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

inline std::vector<BoundingBox> clamp_all(std::vector<BoundingBox> boxes,
                                          const std::optional<Heatmap>& frame) {
  if (frame) {
    for (auto& b : boxes) b = clamp_box(b, frame->width(), frame->height());
  }
  return boxes;
}

}  // namespace detail

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(origin + ": invalid JSON (" + e.what() + ")");
  }
}

inline std::vector<EvaluationRecord> load_manifest(const std::filesystem::path& path) {
  const auto doc = parse_json_text(read_text_file(path), path.string());
  if (!doc.is_array()) throw ValidationError("manifest '" + path.string() + "': expected a JSON list");
  const auto base = path.parent_path();
  std::vector<EvaluationRecord> records;
  records.reserve(doc.size());
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("id") || !entry.at("id").is_string()) {
      throw ValidationError("manifest '" + path.string() + "': every entry needs a string 'id'");
    }
    EvaluationRecord r;
    r.id = entry.at("id").get<std::string>();
    try {
      if (const auto p = detail::manifest_path(entry, "artifact_heatmap_path", base)) {
        r.artifact_heatmap = load_heatmap_file(*p);
      }
      if (const auto p = detail::manifest_path(entry, "misalignment_heatmap_path", base)) {
        r.misalignment_heatmap = load_heatmap_file(*p);
      }
      const auto response = detail::manifest_path(entry, "response_path", base);
      if (response) {
        const auto parsed = parse_response(read_text_file(*response), ParseMode::kLenient);
        r.scores = parsed.scores;
        r.artifact_boxes = parsed.artifact_locations;
        r.misalignment_boxes = parsed.misalignment_locations;
      }
      if (const auto p = detail::manifest_path(entry, "score_path", base)) {
        r.scores = scores_from_json(parse_json_text(read_text_file(*p), p->string()));
      } else if (!response) {
        throw ValidationError("needs 'score_path' or 'response_path'");
      }
      if (const auto p = detail::manifest_path(entry, "artifact_boxes_path", base)) {
        r.artifact_boxes = boxes_from_json(parse_json_text(read_text_file(*p), p->string()));
      }
      if (const auto p = detail::manifest_path(entry, "misalignment_boxes_path", base)) {
        r.misalignment_boxes = boxes_from_json(parse_json_text(read_text_file(*p), p->string()));
      }
      r.artifact_boxes = detail::clamp_all(std::move(r.artifact_boxes), r.artifact_heatmap);
      r.misalignment_boxes =
          detail::clamp_all(std::move(r.misalignment_boxes), r.misalignment_heatmap);
    } catch (const ValidationError& e) {
      throw ValidationError("record '" + r.id + "': " + e.what());
    } catch (const IoError& e) {
      throw IoError("record '" + r.id + "': " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace flawmap
