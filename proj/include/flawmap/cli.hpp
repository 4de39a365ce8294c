#pragma once

// The flawmap command-line driver. run() never exits the process; it returns
// the exit code (0 ok, 1 validation error, 2 I/O error) so tests can drive it
// in-process.

#include <algorithm>
#include <array>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/denseflow.hpp"
#include "flawmap/error.hpp"
#include "flawmap/io.hpp"
#include "flawmap/manifest.hpp"
#include "flawmap/metrics.hpp"
#include "flawmap/parallel.hpp"
#include "flawmap/report.hpp"
#include "flawmap/response_parser.hpp"
#include "flawmap/rewards.hpp"
#include "flawmap/verifier.hpp"

namespace flawmap::cli {

inline constexpr const char* kVersion = "0.3.0";

struct RewardArgs {
  std::string pred;
  std::string gt;
  double blank_tolerance = 0.0;
};

struct MetricsArgs {
  std::string pred;
  std::string gt;
  double fixation_threshold = 0.0;
  double blank_tolerance = 0.0;
  std::string format = "json";
};

struct ParseArgs {
  std::string input = "-";
  bool strict = false;
};

struct DemoArgs {
  TrainConfig config;
  std::string mode = "dense";
  std::string target = "region";
  std::string dump_x0;
  std::size_t curve_stride = 1;
};

struct SelectArgs {
  std::string input = "-";
  std::string weights;
};

namespace detail {

inline std::string read_input(const std::string& path, std::istream& in) {
  if (path == "-") return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return read_text_file(path);
}

inline std::array<double, 4> parse_weights(const std::string& text) {
  std::array<double, 4> w{};
  std::size_t count = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (count == 4) throw ValidationError("--weights: expected exactly four values");
    const auto v = flawmap::detail::parse_real(flawmap::detail::trim(item));
    if (!v) throw ValidationError("--weights: '" + item + "' is not a number");
    w[count++] = *v;
  }
  if (count != 4) throw ValidationError("--weights: expected exactly four values");
  return w;
}

inline std::vector<RewardReport> compute_rewards(const std::vector<EvaluationRecord>& preds,
                                                 const std::vector<EvaluationRecord>& gts,
                                                 const GroundingOptions& opts, std::size_t threads) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!by_id.emplace(preds[i].id, i).second) {
      throw ValidationError("duplicate prediction id '" + preds[i].id + "'");
    }
  }
  std::vector<std::size_t> match(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto it = by_id.find(gts[i].id);
    if (it == by_id.end()) throw ValidationError("no prediction for id '" + gts[i].id + "'");
    match[i] = it->second;
  }
  std::vector<RewardReport> reports(gts.size());
  parallel_for(gts.size(), threads,
               [&](std::size_t i) { reports[i] = total_reward(preds[match[i]], gts[i], opts); });
  return reports;
}

inline nlohmann::ordered_json curve_json(const TrainResult& r, std::size_t stride) {
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& p : r.curve) {
    if (p.iteration % stride != 0 && p.iteration + 1 != r.curve.size()) continue;
    nlohmann::ordered_json j;
    j["iteration"] = p.iteration;
    j["mean_image_reward"] = p.mean_image_reward;
    j["mean_intensity"] = p.mean_intensity;
    j["region_mse"] = p.region_mse;
    curve.push_back(std::move(j));
  }
  return curve;
}

class Emitter {
 public:
  Emitter(const std::string& path, std::ostream& out) : path_(path), out_(out) {}

  void operator()(const std::string& data) const {
    if (path_.empty() || path_ == "-") {
      out_ << data;
      out_.flush();
      return;
    }
    write_file(path_, std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
  }

 private:
  const std::string& path_;
  std::ostream& out_;
};

inline void log_line(std::ostream& err, const std::string& cmd, const std::string& fields) {
  err << "level=info cmd=" << cmd << ' ' << fields << '\n';
}

}  // namespace detail

// Runs one invocation. args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
               std::istream& in = std::cin) {
  CLI::App app{"flawmap: reward, metric and policy-optimization tools for image flaw maps",
               "flawmap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::size_t threads = default_thread_count();
  std::string output;
  app.add_option("--threads", threads,
                 "Worker threads for per-record work (default: $FLAWMAP_THREADS, else 1)")
      ->check(CLI::PositiveNumber);
  app.footer(
      "Environment:\n  FLAWMAP_THREADS  default for --threads\n"
      "Exit codes: 0 success, 1 validation error, 2 I/O error");

  RewardArgs reward;
  auto* reward_cmd = app.add_subcommand("reward", "Score prediction records against annotations");
  reward_cmd->add_option("--pred", reward.pred, "Prediction manifest (JSON)")->required();
  reward_cmd->add_option("--gt", reward.gt, "Annotation manifest (JSON)")->required();
  reward_cmd->add_option("--blank-tolerance", reward.blank_tolerance,
                         "Heatmaps whose total intensity is <= this count as blank")
      ->check(CLI::NonNegativeNumber);
  reward_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  MetricsArgs metrics;
  auto* metrics_cmd = app.add_subcommand("metrics", "Dataset-level score and heatmap metrics");
  metrics_cmd->add_option("--pred", metrics.pred, "Prediction manifest (JSON)")->required();
  metrics_cmd->add_option("--gt", metrics.gt, "Annotation manifest (JSON)")->required();
  metrics_cmd->add_option("--fixation-threshold", metrics.fixation_threshold,
                          "GT pixels above this are fixations for NSS/AUC-Judd");
  metrics_cmd->add_option("--blank-tolerance", metrics.blank_tolerance,
                          "GT heatmaps whose total intensity is <= this go to the GT=0 split")
      ->check(CLI::NonNegativeNumber);
  metrics_cmd->add_option("--format", metrics.format, "json or tsv")
      ->check(CLI::IsMember({"json", "tsv"}));
  metrics_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  ParseArgs parse;
  auto* parse_cmd = app.add_subcommand("parse", "Parse a think/answer response into JSON");
  parse_cmd->add_option("input", parse.input, "Response text file, '-' for stdin");
  parse_cmd->add_flag("--strict", parse.strict, "Reject malformed responses instead of repairing");
  parse_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  DemoArgs demo;
  auto& cfg = demo.config;
  auto* demo_cmd = app.add_subcommand("grpo-demo", "Train the toy flow policy and print a learning curve");
  demo_cmd->add_option("--grid", cfg.grid, "Grid side length")->check(CLI::PositiveNumber);
  demo_cmd->add_option("-T,--steps", cfg.steps, "Denoising steps")->check(CLI::PositiveNumber);
  demo_cmd->add_option("-G,--group", cfg.group, "Samples per group");
  demo_cmd->add_option("-K,--iterations", cfg.iterations, "Training iterations");
  demo_cmd->add_option("--epsilon", cfg.epsilon, "Clipping threshold, in (0, 1)");
  demo_cmd->add_option("--sigma", cfg.sigma, "Per-step noise scale");
  demo_cmd->add_option("--lr", cfg.learning_rate, "Learning rate");
  demo_cmd->add_option("--beta", cfg.beta, "KL weight toward the initial policy");
  demo_cmd->add_option("--sigma-floor", cfg.sigma_floor, "Floor for the advantage std");
  demo_cmd->add_option("--inner-epochs", cfg.inner_epochs, "Gradient steps per sampled group");
  demo_cmd->add_option("--seed", cfg.seed, "Random seed");
  demo_cmd->add_option("--mode", demo.mode, "dense or image_only")
      ->check(CLI::IsMember({"dense", "image_only"}));
  demo_cmd->add_option("--target", demo.target, "region or mean")
      ->check(CLI::IsMember({"region", "mean"}));
  demo_cmd->add_option("--target-level", cfg.target_level, "Intensity for --target mean");
  demo_cmd->add_option("--curve-stride", demo.curve_stride, "Report every n-th iteration")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_option("--dump-x0", demo.dump_x0, "Write the final mean-rollout x_0 (clamped to [0, 1]) as HMF");
  demo_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  SelectArgs select;
  auto* select_cmd = app.add_subcommand("select", "Pick the best of N candidates by score");
  select_cmd->add_option("input", select.input, "JSON array of score objects, '-' for stdin");
  select_cmd->add_option("--weights", select.weights,
                         "Weights a,b,c,d for alignment,aesthetics,plausibility,overall");
  select_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "flawmap: error: " << msg << '\n';
    return 1;
  }

  const detail::Emitter emit(output, out);
  try {
    if (*reward_cmd) {
      const GroundingOptions opts{reward.blank_tolerance};
      const auto reports =
          detail::compute_rewards(load_manifest(reward.pred), load_manifest(reward.gt), opts, threads);
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& r : reports) j.push_back(to_json(r));
      emit(j.dump(2) + "\n");
      detail::log_line(err, "reward", "records=" + std::to_string(reports.size()));
    } else if (*metrics_cmd) {
      MetricOptions opts;
      opts.fixation_threshold = metrics.fixation_threshold;
      opts.blank_tolerance = metrics.blank_tolerance;
      opts.threads = threads;
      const auto preds = load_manifest(metrics.pred);
      const auto gts = load_manifest(metrics.gt);
      const auto report = evaluate_dataset(preds, gts, opts);
      emit(emit_report(report, metrics.format == "tsv" ? ReportFormat::kTsv : ReportFormat::kJson));
      detail::log_line(err, "metrics", "records=" + std::to_string(gts.size()));
    } else if (*parse_cmd) {
      const auto text = detail::read_input(parse.input, in);
      const auto parsed = parse_response(text, parse.strict ? ParseMode::kStrict : ParseMode::kLenient);
      emit(to_json(parsed).dump(2) + "\n");
      detail::log_line(err, "parse", std::string("mode=") + (parse.strict ? "strict" : "lenient"));
    } else if (*demo_cmd) {
      cfg.mode = demo.mode == "dense" ? TrainMode::kDense : TrainMode::kImageOnly;
      cfg.target = demo.target == "region" ? TargetKind::kRegionDetail : TargetKind::kMeanIntensity;
      cfg.threads = threads;
      validate(cfg);
      const auto result = train_toy(cfg);
      const auto x0 = mean_rollout(result.policy);
      nlohmann::ordered_json j;
      auto& c = j["config"];
      c["grid"] = cfg.grid;
      c["steps"] = cfg.steps;
      c["group"] = cfg.group;
      c["iterations"] = cfg.iterations;
      c["epsilon"] = cfg.epsilon;
      c["sigma"] = cfg.sigma;
      c["learning_rate"] = cfg.learning_rate;
      c["beta"] = cfg.beta;
      c["sigma_floor"] = cfg.sigma_floor;
      c["inner_epochs"] = cfg.inner_epochs;
      c["seed"] = cfg.seed;
      c["mode"] = demo.mode;
      c["target"] = result.target.name;
      j["initial_region_mse"] = region_mse(result.target, mean_rollout(result.initial_policy));
      j["curve"] = detail::curve_json(result, demo.curve_stride);
      j["final_region_mse"] = result.region_mse;
      if (!demo.dump_x0.empty()) {
        // Heatmaps hold [0, 1]; the rollout can overshoot slightly.
        std::vector<float> values(x0.size());
        for (std::size_t p = 0; p < x0.size(); ++p) {
          values[p] = static_cast<float>(std::clamp(x0[p], 0.0, 1.0));
        }
        const Heatmap h(static_cast<std::uint32_t>(cfg.grid), static_cast<std::uint32_t>(cfg.grid),
                        std::move(values));
        write_file(demo.dump_x0, save_heatmap(h, HeatmapFormat::kHmf));
      }
      emit(j.dump(2) + "\n");
      detail::log_line(err, "grpo-demo", "iterations=" + std::to_string(cfg.iterations) +
                                             " final_region_mse=" + std::to_string(result.region_mse));
    } else if (*select_cmd) {
      const SelectionPolicy policy = select.weights.empty()
                                         ? SelectionPolicy{}
                                         : SelectionPolicy::normalized(detail::parse_weights(select.weights));
      const auto doc = parse_json_text(detail::read_input(select.input, in), select.input);
      if (!doc.is_array()) throw ValidationError("select: expected a JSON array of score objects");
      std::vector<ScoreVector> candidates;
      for (const auto& item : doc) candidates.push_back(scores_from_json(item));
      const auto ranking = rank_candidates(candidates, policy);
      nlohmann::ordered_json j;
      j["best"] = ranking.front();
      j["ranking"] = ranking;
      nlohmann::ordered_json aggregates = nlohmann::ordered_json::array();
      for (const auto& s : candidates) aggregates.push_back(aggregate(s, policy));
      j["aggregates"] = aggregates;
      j["weights"] = policy.weights();
      emit(j.dump(2) + "\n");
      detail::log_line(err, "select", "candidates=" + std::to_string(candidates.size()));
    }
  } catch (const IoError& e) {
    err << "flawmap: io error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "flawmap: error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "flawmap: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "flawmap: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace flawmap::cli
