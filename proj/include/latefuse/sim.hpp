#pragma once

#include <functional>

#include "latefuse/config.hpp"
#include "latefuse/runlog.hpp"
#include "latefuse/scenario.hpp"

namespace latefuse {

/// Wall-clock cost of one vehicle step, reported outside the run log so that
/// logs stay byte-identical across runs.
struct StepTiming {
  Timestamp t;
  VehicleId vehicle = 0;
  double perception_ms = 0.0;
  double prediction_ms = 0.0;
  double comms_ms = 0.0;
  double fusion_ms = 0.0;
};

using TimingSink = std::function<void(const StepTiming&)>;

/// Replays the scenario on a shared clock, advancing vehicles one after the
/// other in header order. Throws ValidationError at startup when the
/// configuration does not fit the scenario; per-step failures are logged.
RunLog run(const Scenario& scenario, const RunConfig& config, const RunSettings& settings,
           const TimingSink& timings = {});

}  // namespace latefuse
