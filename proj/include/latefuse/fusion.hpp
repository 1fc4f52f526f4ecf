#pragma once

#include <functional>
#include <optional>
#include <span>

#include "latefuse/collab.hpp"
#include "latefuse/core.hpp"
#include "latefuse/gp.hpp"
#include "latefuse/tracker.hpp"

namespace latefuse {

struct GateConfig {
  int min_streak = 3;
  double cov_ratio = 2.0;

  void validate() const;
};

/// Open when the track has coasted for min_streak steps or its covariance
/// trace has grown to cov_ratio times its running median.
bool kf_gate(int streak, double cov_ratio, const GateConfig& cfg);

struct FusionConfig {
  GateConfig gate;
  gp::FitOptions fit;
  double min_output_var = 1e-6;
};

/// Residual correction of the ego forecast by the pooled peer forecasts.
/// Returns the local prediction untouched when the gate is closed, the pool is
/// empty, or no pooled sample falls inside the ego horizon.
PredictedTrajectory fuse_category_L(const MapEntry& entry, std::span<const Timestamp> query,
                                    const GateStats& stats, const FusionConfig& cfg = {});

/// Forecast reconstructed from the pool alone: per coordinate, standardized
/// samples are regressed and mapped back to metric units.
PredictedTrajectory fuse_category_S(const MapEntry& entry, std::span<const Timestamp> query,
                                    const FusionConfig& cfg = {});

using GateStatsLookup = std::function<std::optional<GateStats>(const AgentId&)>;

struct FusionSweep {
  std::size_t fused_L = 0;     // L entries whose gate opened with a non-empty pool
  std::size_t fused_S = 0;
  std::size_t failures = 0;    // numeric failures that fell back
};

/// Fuses every entry of the map at the ego query times and clears all pools.
/// When `stats` yields nothing for an L entry its gate is treated as closed.
FusionSweep fuse_map(PredictionMap& map, std::span<const Timestamp> query,
                     const GateStatsLookup& stats, const FusionConfig& cfg = {});

}  // namespace latefuse
