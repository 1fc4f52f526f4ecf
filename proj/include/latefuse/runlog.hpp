#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "latefuse/channel.hpp"
#include "latefuse/collab.hpp"
#include "latefuse/config.hpp"
#include "latefuse/fusion.hpp"

namespace latefuse {

/// Snapshot of one prediction-map entry after fusion.
struct LoggedEntry {
  AgentId id;
  Category category = Category::L;
  AgentClass cls = AgentClass::car;
  State2D current;
  BoxDims dims;
  std::optional<PredictedTrajectory> local;
  std::optional<PredictedTrajectory> fused;
  std::size_t pool = 0;  // pooled forecasts consumed by this fusion step

  /// Fused forecast if present, else the local one.
  const PredictedTrajectory* forecast() const;
};

struct SentMessage {
  std::size_t bytes = 0;
  std::size_t n_agents = 0;
  std::size_t n_omitted = 0;   // agents left out to fit the budget
  bool compressed = false;
  std::vector<ChannelEvent> outcomes;
};

struct ReceivedMessage {
  VehicleId sender = 0;
  std::size_t bytes = 0;
  Timestamp send_time;
  Timestamp arrival;
  std::size_t n_agents = 0;
  std::size_t n_aligned = 0;
  bool rejected = false;       // failed to decode
};

/// One vehicle at one processed frame.
struct VehicleStep {
  Timestamp t;
  VehicleId vehicle = 0;
  std::size_t n_detections = 0;
  std::size_t n_visible = 0;
  std::size_t n_tracks = 0;
  std::vector<LoggedEntry> entries;
  std::vector<ReceivedMessage> received;
  std::size_t pool_insertions = 0;
  FusionSweep fusion;
  std::optional<SentMessage> sent;
};

struct RunLog {
  std::string scenario_id;
  RunSettings settings;
  std::vector<VehicleId> vehicles;
  std::vector<VehicleStep> steps;
};

inline constexpr const char* kRunLogFormat = "latefuse.runlog";
inline constexpr int kRunLogVersion = 1;

void write_runlog(std::ostream& out, const RunLog& log);
void save_runlog(const RunLog& log, const std::filesystem::path& path);
RunLog parse_runlog(std::istream& in, const std::string& source = "<runlog>");
RunLog load_runlog(const std::filesystem::path& path);

nlohmann::json to_json(const VehicleStep& step);

}  // namespace latefuse
