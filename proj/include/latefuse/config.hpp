#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>

#include "latefuse/channel.hpp"
#include "latefuse/collab.hpp"
#include "latefuse/fusion.hpp"
#include "latefuse/occlusion.hpp"
#include "latefuse/predictor.hpp"
#include "latefuse/scenario.hpp"
#include "latefuse/tracker.hpp"

namespace latefuse {

/// controlled: occlusion-filtered ground-truth detections, identity association.
/// real: detections as given, NIS-gated Hungarian association.
enum class PerceptionMode { controlled, real };

struct VehicleConfig {
  VehicleId vehicle_id = 0;
  double fps = 10.0;
  double broadcast_hz = 10.0;
  PerceptionMode mode = PerceptionMode::controlled;
  bool occlusion_enabled = true;
  OcclusionConfig occlusion;
  TrackerConfig tracker;
  PredictorConfig predictor;
  FusionConfig fusion;
  CollabConfig collab;
  bool broadcast = true;
  bool aggregate = true;

  Duration frame_period() const;
  Duration broadcast_period() const;
  /// Throws ValidationError when rates do not fit the scenario step.
  void validate(Duration scenario_dt) const;
};

struct MetricsConfig {
  double iou_threshold = 0.5;
  double tsr_threshold = 0.5;
  double eval_radius_m = 50.0;
  double horizon_s = 2.0;
  double step_s = 0.1;
};

/// Global switches for one run.
struct RunSettings {
  bool fusion = true;
  bool delay = true;
  bool drop = true;
  std::uint64_t seed = 0;

  /// Short tag such as "fusion=on,delay=off,drop=off".
  std::string tag() const;
};

struct RunConfig {
  VehicleConfig defaults;
  std::map<VehicleId, VehicleConfig> vehicles;
  ChannelParams channel;
  MetricsConfig metrics;
  RunSettings run;

  /// Per-vehicle entry if present, otherwise the defaults with the id filled in.
  VehicleConfig for_vehicle(VehicleId id) const;
};

inline constexpr int kConfigVersion = 1;

/// Parses a config document. Unknown keys are rejected; per-vehicle sections
/// are overlaid on the defaults.
RunConfig parse_config(const nlohmann::json& doc, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Full config as JSON (every field explicit).
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace latefuse
