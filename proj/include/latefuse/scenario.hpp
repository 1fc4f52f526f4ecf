#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

using VehicleId = std::uint16_t;

/// What one vehicle perceives at one frame.
struct VehicleFrame {
  VehicleId vehicle_id = 0;
  BoundingBox ego;                       // ego pose and footprint; agent_id is the vehicle's ground-truth id
  std::vector<BoundingBox> detections;   // annotated with ground-truth ids
};

struct Frame {
  Timestamp t;
  std::vector<VehicleFrame> vehicles;
  std::vector<BoundingBox> ground_truth;

  const VehicleFrame* vehicle(VehicleId id) const;
  const BoundingBox* truth(const AgentId& id) const;
};

struct ScenarioMeta {
  std::string id;
  Duration dt = Duration::from_millis(100);
  Duration duration;
  std::vector<VehicleId> vehicles;
};

struct Scenario {
  ScenarioMeta meta;
  std::vector<Frame> frames;

  /// Frame index at exactly `t`, if any.
  std::optional<std::size_t> frame_at(Timestamp t) const;
  /// Structural checks; throws ValidationError naming the offending frame.
  void validate() const;
};

inline constexpr const char* kScenarioFormat = "latefuse.scenario";
inline constexpr int kScenarioVersion = 1;

/// Reads a line-delimited scenario: a header line followed by one line per
/// frame. Diagnostics carry the line number and field path.
Scenario parse_scenario(std::istream& in, const std::string& source = "<input>");
Scenario load_scenario(const std::filesystem::path& path);

void write_scenario(std::ostream& out, const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

struct SynthParams {
  double dt_s = 0.1;
  double duration_s = 8.0;
  int extra_agents = 2;
  double sensor_range_m = 80.0;
  double detection_noise_m = 0.0;   // per-axis standard deviation added to detections
};

/// Deterministic scenario for a preset name (occlusion_crossing, convoy,
/// random_traffic). Throws UsageError for an unknown preset.
Scenario generate_synthetic(const std::string& preset, const SynthParams& params,
                            std::uint64_t seed);

/// Longest run (seconds) over which `agent` is scored above `hidden` for
/// vehicle `hidden_for` while scoring below `clear` for vehicle `clear_for`.
double occlusion_window_s(const Scenario& s, const AgentId& agent, VehicleId hidden_for,
                          VehicleId clear_for, double hidden = 0.75, double clear = 0.25,
                          int n_rays = 21);

}  // namespace latefuse
