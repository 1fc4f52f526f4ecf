#pragma once

#include <Eigen/Core>

#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

struct PredictorConfig {
  Duration history_window = Duration::from_millis(1000);
  Duration horizon = Duration::from_millis(2000);
  Duration step = Duration::from_millis(100);
  double sigma0_sq = 0.04;        // m^2 at zero lead time
  double sigma_v_sq = 0.25;       // (m/s)^2 growth with lead time
  double single_sample_inflation = 10.0;
  bool fit_acceleration = false;

  std::size_t steps() const { return static_cast<std::size_t>(horizon.micros / step.micros); }
  void validate() const;
};

/// Per-step Gaussian displacement: mean step (dx, dy) and its variances.
struct DisplacementStep {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double var_x = 1.0;
  double var_y = 1.0;
};

using DisplacementForecast = std::vector<DisplacementStep>;

/// Integrates displacements from `current` at `t0` on a `step` grid.
PredictedTrajectory integrate(const DisplacementForecast& forecast, const State2D& current,
                              Timestamp t0, Duration step);

/// Step-to-step differences of a forecast, the first one taken from `current`.
DisplacementForecast to_displacements(const PredictedTrajectory& pred, const State2D& current);

/// Physics baseline: least-squares velocity (optionally acceleration) over the
/// history window, rolled out as displacements from `current`. Variance grows
/// as sigma0^2 + sigma_v^2 * lead^2.
PredictedTrajectory predict(const Trajectory& history, const State2D& current,
                            const PredictorConfig& cfg);

/// Mean Gaussian negative log-likelihood per step of the true displacements
/// under the forecast (constant term dropped).
double nll(const DisplacementForecast& pred, const std::vector<Eigen::Vector2d>& truth);

/// Same score with both sides given as absolute trajectories sharing timestamps.
double nll(const PredictedTrajectory& pred, const Trajectory& truth, const State2D& current);

}  // namespace latefuse
