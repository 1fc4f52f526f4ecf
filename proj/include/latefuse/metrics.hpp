#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latefuse/config.hpp"
#include "latefuse/core.hpp"
#include "latefuse/runlog.hpp"
#include "latefuse/scenario.hpp"

namespace latefuse {

/// Bird's-eye-view intersection over union of two oriented footprints.
double iou_bev(const BoundingBox& a, const BoundingBox& b);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (gt, pred)
  std::vector<std::size_t> unmatched_gt;
};

/// Ground-truth boxes in input order each claim their best unused prediction;
/// a claim stands when its IoU reaches `iou_threshold`.
MatchResult greedy_match(std::span<const BoundingBox> gt, std::span<const BoundingBox> pred,
                         double iou_threshold);

/// Forecast and truth positions on a shared time grid.
struct ForecastPair {
  std::vector<Eigen::Vector2d> forecast;
  std::vector<Eigen::Vector2d> truth;
};

struct FrameMetrics {
  double ade = 0.0;   // NaN when nothing matched
  double fde = 0.0;   // NaN when nothing matched
  double mr = 0.0;
  double tsr = 0.0;
  std::size_t n_gt = 0;
  std::size_t n_matched = 0;
  std::string setting;
};

/// Per-frame displacement and coverage metrics; nullopt when n_gt is 0.
std::optional<FrameMetrics> frame_metrics(std::span<const ForecastPair> matched, std::size_t n_gt,
                                          double tsr_threshold, const std::string& setting = {});

struct SizeStats {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quantiles; all zero for an empty input.
SizeStats size_stats(std::vector<double> values);

struct Report {
  std::string scenario_id;
  VehicleId vehicle_id = 0;
  std::string setting;
  double ade = 0.0;
  double fde = 0.0;
  double mr = 0.0;
  double tsr = 0.0;
  std::size_t frames = 0;
  std::size_t frames_with_matches = 0;
  SizeStats message_bytes;
};

/// Unweighted frame means. ADE and FDE average over frames with at least one
/// match; MR and TSR over all frames. Throws InputError on empty input or
/// mixed settings.
Report aggregate(std::span<const FrameMetrics> frames);

/// Per-frame scoring of one vehicle's logged maps against the scenario truth.
struct VehicleEvaluation {
  std::vector<FrameMetrics> frames;
  std::vector<double> message_bytes;
  std::size_t s_entry_matches = 0;   // matches made through shared-only entries
};

/// Boxes a logged map entry stands for at its frame: L entries use their track
/// footprint, S entries the class default footprint oriented along the forecast.
BoundingBox entry_box(const LoggedEntry& entry);

VehicleEvaluation evaluate_vehicle(const Scenario& scenario, const RunLog& log, VehicleId vehicle,
                                   const MetricsConfig& cfg);

/// One report per vehicle, in header order.
std::vector<Report> evaluate_run(const Scenario& scenario, const RunLog& log, const MetricsConfig& cfg);

void write_report_csv(std::ostream& out, std::span<const Report> reports);
nlohmann::json to_json(const Report& report);

}  // namespace latefuse
