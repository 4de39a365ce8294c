#pragma once

// Reader and writer for the evaluator's look-think-predict output:
//
//   <think>
//   Proposed regions (xyxy): 1.[x1,y1,x2,y2];2.[x1,y1,x2,y2]
//   ...reasoning...
//   </think>
//   <answer>
//   Semantic Alignment score: 0.80
//   Aesthetic score: 0.70
//   Plausibility score: 0.90
//   Overall Impression score: 0.80
//   Misalignment Locations: none
//   Artifact Locations: 1.[x1,y1,x2,y2]
//   </answer>
//
// Location lists reuse the enumerated region grammar; "none" or an empty
// value means no boxes.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"
#include "flawmap/io.hpp"

namespace flawmap {

struct ParsedResponse {
  // Reasoning inside <think>, with the "Proposed regions (xyxy): ..." clause
  // removed and surrounding whitespace trimmed.
  std::string think_text;
  std::vector<BoundingBox> proposed_regions;
  ScoreVector scores;
  std::vector<BoundingBox> misalignment_locations;
  std::vector<BoundingBox> artifact_locations;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

enum class ParseMode { kLenient, kStrict };

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_real(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return value;
}

class RegionScanner {
 public:
  explicit RegionScanner(std::string_view text) : text_(text) {}

  std::size_t position() const noexcept { return pos_; }

  bool at_end() {
    skip_space();
    return pos_ == text_.size();
  }

  // Consumes "1.[..];2.[..]..." for as long as the next token starts with a
  // digit. Indices must run 1, 2, 3, ...; a trailing ';' is accepted.
  std::vector<BoundingBox> scan() {
    std::vector<BoundingBox> boxes;
    while (peek_digit()) {
      const std::size_t expected = boxes.size() + 1;
      const std::size_t index = scan_index();
      if (index != expected) {
        fail("region index " + std::to_string(index) + " where " + std::to_string(expected) +
             " was expected");
      }
      expect('.');
      expect('[');
      std::array<double, 4> c{};
      for (std::size_t k = 0; k < 4; ++k) {
        c[k] = scan_number(k < 3 ? ',' : ']');
        ++pos_;
      }
      const BoundingBox b{c[0], c[1], c[2], c[3]};
      if (!is_valid(b)) fail("region " + std::to_string(index) + " has nonpositive area");
      boxes.push_back(b);
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == ';') {
        ++pos_;
      } else {
        break;
      }
    }
    return boxes;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  bool peek_digit() {
    skip_space();
    return pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0;
  }

  std::size_t scan_index() {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{}) fail("bad region index");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // Reads up to (not including) the terminator.
  double scan_number(char terminator) {
    const std::size_t end = text_.find_first_of(",];", pos_);
    if (end == std::string_view::npos || text_[end] != terminator) {
      fail(std::string("malformed brackets, expected '") + terminator + "'");
    }
    const auto value = parse_real(text_.substr(pos_, end - pos_));
    if (!value || !std::isfinite(*value)) {
      fail("non-numeric coordinate '" + std::string(trim(text_.substr(pos_, end - pos_))) + "'");
    }
    pos_ = end;
    return *value;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("region list: " + what + " at offset " + std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline std::optional<std::size_t> find_icase(std::string_view haystack, std::string_view needle,
                                             std::size_t from = 0) {
  const auto it = std::search(haystack.begin() + static_cast<std::ptrdiff_t>(from), haystack.end(),
                              needle.begin(), needle.end(), [](char a, char b) {
                                return std::tolower(static_cast<unsigned char>(a)) ==
                                       std::tolower(static_cast<unsigned char>(b));
                              });
  if (it == haystack.end()) return std::nullopt;
  return static_cast<std::size_t>(it - haystack.begin());
}

struct Block {
  std::string_view inner;
  bool closed = false;
};

inline std::optional<Block> extract_block(std::string_view text, std::string_view open,
                                          std::string_view close) {
  const auto start = find_icase(text, open);
  if (!start) return std::nullopt;
  const std::size_t body = *start + open.size();
  const auto stop = find_icase(text, close, body);
  if (!stop) return Block{text.substr(body), false};
  return Block{text.substr(body, *stop - body), true};
}

enum AnswerField : std::size_t {
  kAlignment,
  kAesthetics,
  kPlausibility,
  kOverall,
  kMisalignmentLocations,
  kArtifactLocations,
  kFieldCount
};

inline constexpr std::array<std::string_view, kFieldCount> kCanonicalLabels = {
    "Semantic Alignment score", "Aesthetic score",        "Plausibility score",
    "Overall Impression score", "Misalignment Locations", "Artifact Locations"};

inline const std::array<std::regex, kFieldCount>& label_patterns() {
  static const std::array<std::regex, kFieldCount> patterns = [] {
    constexpr auto flags = std::regex::ECMAScript | std::regex::icase;
    return std::array<std::regex, kFieldCount>{
        std::regex(R"(semantic\s+alignment\s+score\s*:)", flags),
        std::regex(R"(aesthetics?\s+score\s*:)", flags),
        std::regex(R"(plausibility\s+score\s*:)", flags),
        std::regex(R"(overall\s+impression\s+score\s*:)", flags),
        std::regex(R"(misalignment\s+locations?\s*:)", flags),
        std::regex(R"(artifact\s+locations?\s*:)", flags)};
  }();
  return patterns;
}

inline const std::regex& proposed_label_pattern() {
  static const std::regex pattern(R"(proposed\s+regions\s*\(\s*xyxy\s*\)\s*:)",
                                  std::regex::ECMAScript | std::regex::icase);
  return pattern;
}

struct LabelHit {
  std::size_t field;
  std::size_t begin;
  std::size_t end;
};

// Value of each present field: the text between its label and the next label.
inline std::array<std::optional<std::string_view>, kFieldCount> split_answer(
    std::string_view answer, ParseMode mode) {
  std::vector<LabelHit> hits;
  const std::string buffer(answer);
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    std::smatch m;
    if (std::regex_search(buffer, m, label_patterns()[f])) {
      const auto begin = static_cast<std::size_t>(m.position(0));
      hits.push_back({f, begin, begin + static_cast<std::size_t>(m.length(0))});
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const LabelHit& a, const LabelHit& b) { return a.begin < b.begin; });
  if (mode == ParseMode::kStrict && !hits.empty() &&
      !trim(answer.substr(0, hits.front().begin)).empty()) {
    throw ValidationError("answer: unexpected text before the first label");
  }
  std::array<std::optional<std::string_view>, kFieldCount> values;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const std::size_t stop = k + 1 < hits.size() ? hits[k + 1].begin : answer.size();
    values[hits[k].field] = trim(answer.substr(hits[k].end, stop - hits[k].end));
  }
  return values;
}

inline double parse_score(std::string_view label, std::string_view text, ParseMode mode) {
  std::optional<double> value;
  if (mode == ParseMode::kStrict) {
    value = parse_real(text);
  } else {
    static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
    const std::string buffer(text);
    std::smatch m;
    if (std::regex_search(buffer, m, number)) value = parse_real(m.str(0));
  }
  if (!value || !std::isfinite(*value)) {
    throw ValidationError("answer: " + std::string(label) + " '" + std::string(text) +
                          "' is not a number");
  }
  if (*value < 0.0 || *value > 1.0) {
    if (mode == ParseMode::kStrict) {
      throw ValidationError("answer: " + std::string(label) + " " + std::string(text) +
                            " outside [0, 1]");
    }
    value = std::clamp(*value, 0.0, 1.0);
  }
  return *value;
}

inline std::vector<BoundingBox> parse_location_list(std::string_view text, ParseMode mode);

}  // namespace detail

// Parses "1.[x1,y1,x2,y2];2.[...]" in full. Empty input and "none" yield no
// boxes.
inline std::vector<BoundingBox> parse_region_list(std::string_view text) {
  const auto trimmed = detail::trim(text);
  if (trimmed.size() == 4 && detail::find_icase(trimmed, "none") == std::size_t{0}) return {};
  detail::RegionScanner scanner(text);
  auto boxes = scanner.scan();
  if (!scanner.at_end()) {
    throw ValidationError("region list: unexpected text at offset " +
                          std::to_string(scanner.position()));
  }
  return boxes;
}

namespace detail {

inline std::vector<BoundingBox> parse_location_list(std::string_view text, ParseMode mode) {
  text = trim(text);
  if (mode == ParseMode::kLenient) {
    while (!text.empty() && text.back() == '.') text = trim(text.substr(0, text.size() - 1));
  }
  return parse_region_list(text);
}

}  // namespace detail

// Extracts reasoning, proposed regions, scores and location lists.
//
// Strict mode requires both blocks closed, all six answer labels, nothing
// before the first label, and scores written as bare reals in [0, 1].
// Lenient mode tolerates a missing <think> block and missing closing tags,
// takes the first number on a score line and clamps it into [0, 1], fills a
// missing score with 0 and a missing location list with no boxes.
inline ParsedResponse parse_response(std::string_view text, ParseMode mode = ParseMode::kLenient) {
  using detail::AnswerField;
  const bool strict = mode == ParseMode::kStrict;
  ParsedResponse out;

  const auto answer = detail::extract_block(text, "<answer>", "</answer>");
  if (!answer) throw ValidationError("response: missing <answer> block");
  if (strict && !answer->closed) throw ValidationError("response: unterminated <answer> block");

  const auto think = detail::extract_block(text, "<think>", "</think>");
  if (strict && !think) throw ValidationError("response: missing <think> block");
  if (think) {
    if (strict && !think->closed) throw ValidationError("response: unterminated <think> block");
    // An unterminated think block ends where the answer begins.
    std::string_view inner = think->inner;
    if (!think->closed) {
      if (const auto cut = detail::find_icase(inner, "<answer>")) inner = inner.substr(0, *cut);
    }
    const std::string buffer(inner);
    std::smatch m;
    if (std::regex_search(buffer, m, detail::proposed_label_pattern())) {
      const auto label_begin = static_cast<std::size_t>(m.position(0));
      const auto list_begin = label_begin + static_cast<std::size_t>(m.length(0));
      const auto rest = inner.substr(list_begin);
      const auto head = detail::trim(rest);
      std::size_t list_end = list_begin;
      if (head.size() >= 4 && detail::find_icase(head.substr(0, 4), "none") == std::size_t{0}) {
        list_end = list_begin + (rest.size() - head.size()) + 4;
      } else {
        detail::RegionScanner scanner(rest);
        out.proposed_regions = scanner.scan();
        list_end = list_begin + scanner.position();
      }
      const auto lead = detail::trim(inner.substr(0, label_begin));
      const auto tail = detail::trim(inner.substr(list_end));
      if (lead.empty() || tail.empty()) {
        out.think_text = std::string(lead.empty() ? tail : lead);
      } else {
        out.think_text = std::string(lead) + "\n" + std::string(tail);
      }
    } else {
      out.think_text = std::string(detail::trim(inner));
    }
  }

  const auto fields = detail::split_answer(answer->inner, mode);
  std::array<double, 4> scores{};
  for (std::size_t f = 0; f < 4; ++f) {
    const auto label = detail::kCanonicalLabels[f];
    if (!fields[f]) {
      if (strict) throw ValidationError("answer: missing '" + std::string(label) + "' line");
      continue;
    }
    scores[f] = detail::parse_score(label, *fields[f], mode);
  }
  out.scores = ScoreVector::from_array(scores);

  for (const std::size_t f : {std::size_t{detail::kMisalignmentLocations},
                              std::size_t{detail::kArtifactLocations}}) {
    std::vector<BoundingBox> boxes;
    if (!fields[f]) {
      if (strict) {
        throw ValidationError("answer: missing '" + std::string(detail::kCanonicalLabels[f]) +
                              "' line");
      }
    } else {
      boxes = detail::parse_location_list(*fields[f], mode);
    }
    (f == detail::kMisalignmentLocations ? out.misalignment_locations : out.artifact_locations) =
        std::move(boxes);
  }
  return out;
}

namespace detail {

inline void append_real(std::string& out, double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

inline void append_score(std::string& out, double v) {
  std::array<char, 32> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.2f", v);
  out.append(buf.data(), static_cast<std::size_t>(n));
}

}  // namespace detail

// Renders "1.[..];2.[..]" with shortest round-trip coordinates, or "none".
inline std::string render_region_list(std::span<const BoundingBox> boxes) {
  if (boxes.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i > 0) out += ';';
    out += std::to_string(i + 1);
    out += ".[";
    const auto& b = boxes[i];
    const std::array<double, 4> c = {b.x1, b.y1, b.x2, b.y2};
    for (std::size_t k = 0; k < 4; ++k) {
      if (k > 0) out += ',';
      detail::append_real(out, c[k]);
    }
    out += ']';
  }
  return out;
}

// Canonical text form; scores are written with two decimals.
inline std::string render_response(const ParsedResponse& r) {
  std::string out = "<think>\nProposed regions (xyxy): ";
  out += render_region_list(r.proposed_regions);
  out += '\n';
  if (!r.think_text.empty()) {
    out += r.think_text;
    out += '\n';
  }
  out += "</think>\n<answer>\n";
  const auto scores = r.scores.as_array();
  for (std::size_t f = 0; f < 4; ++f) {
    out += detail::kCanonicalLabels[f];
    out += ": ";
    detail::append_score(out, scores[f]);
    out += '\n';
  }
  out += detail::kCanonicalLabels[detail::kMisalignmentLocations];
  out += ": ";
  out += render_region_list(r.misalignment_locations);
  out += '\n';
  out += detail::kCanonicalLabels[detail::kArtifactLocations];
  out += ": ";
  out += render_region_list(r.artifact_locations);
  out += "\n</answer>\n";
  return out;
}

inline nlohmann::ordered_json to_json(const ParsedResponse& r) {
  nlohmann::ordered_json j;
  j["think"] = r.think_text;
  j["proposed_regions"] = boxes_to_json(r.proposed_regions);
  j["scores"] = scores_to_json(r.scores);
  j["misalignment_locations"] = boxes_to_json(r.misalignment_locations);
  j["artifact_locations"] = boxes_to_json(r.artifact_locations);
  return j;
}

}  // namespace flawmap
