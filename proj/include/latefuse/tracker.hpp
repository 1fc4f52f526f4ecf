#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Constant-acceleration Kalman state [x, y, vx, vy, ax, ay] with covariance.
struct KfState {
  Vector6d x = Vector6d::Zero();
  Matrix6d P = Matrix6d::Identity();

  Eigen::Vector2d position() const { return x.head<2>(); }
  Eigen::Vector2d velocity() const { return x.segment<2>(2); }
  /// Symmetric to 1e-9 with eigenvalues >= -1e-9.
  bool covariance_valid(double tol = 1e-9) const;
};

Matrix6d ca_transition(double dt);
/// Discrete white-jerk process noise; `q` is the jerk intensity (spectral density q^2).
Matrix6d ca_process_noise(double dt, double q);

KfState kf_predict(const KfState& kf, double dt, double q);

struct KfUpdateResult {
  KfState state;
  double nis = 0.0;
};

/// Position-only measurement update. Returns the posterior and the normalized
/// innovation squared of `z` under the prior.
KfUpdateResult kf_update(const KfState& kf, const Eigen::Vector2d& z, double r);

/// NIS of `z` without updating.
double innovation_nis(const KfState& kf, const Eigen::Vector2d& z, double r);

/// Median of a growing sequence, O(log n) insertion.
class RunningMedian {
 public:
  void push(double v);
  double median() const;
  std::size_t size() const { return low_.size() + high_.size(); }
  bool empty() const { return size() == 0; }

 private:
  std::priority_queue<double> low_;
  std::priority_queue<double, std::vector<double>, std::greater<double>> high_;
};

struct TrackedAgent {
  AgentId track_id;
  AgentClass cls = AgentClass::car;
  KfState kf;
  BoxDims dims;
  double heading = 0.0;
  std::deque<TrajectorySample> history;
  int streak = 0;
  std::vector<double> cov_trace_history;
  RunningMedian cov_trace_median;
  int hits = 0;
  int misses = 0;
  bool confirmed = false;

  State2D state() const;
  BoundingBox box() const;
  Trajectory history_trajectory() const;
};

enum class AssociationMode { gt_id, hungarian_nis };

struct AssociationGates {
  double euclid_confirmed_m = 2.0;
  double euclid_tentative_m = 1.0;
  double vehicle_scale = 2.0;
  double nis_max = 9.21;

  double euclid_gate(AgentClass cls, bool confirmed) const;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// One-to-one track/detection assignment. In gt_id mode pairs are linked by
/// identifier. In hungarian_nis mode a pair is admissible only with matching
/// class, Euclidean distance within the state-dependent gate and NIS within
/// nis_max; the NIS is the assignment cost.
Assignment associate(std::span<const TrackedAgent> tracks, std::span<const BoundingBox> detections,
                     AssociationMode mode, const AssociationGates& gates, double r);

struct TrackerConfig {
  AssociationMode mode = AssociationMode::gt_id;
  double process_noise = 0.5;
  double measurement_var = 0.09;
  int lifetime = 10;
  int confirm_hits = 2;
  AssociationGates gates;
  double box_ema = 0.1;
  std::size_t history_capacity = 50;
  double init_vel_var = 1e6;
  double init_acc_var = 10.0;
  bool bootstrap_velocity = true;
};

struct GateStats {
  int streak = 0;
  double cov_ratio = 1.0;
};

/// Current trace(P) over the running median of the tracklet's trace history;
/// +inf when the median is zero.
GateStats gate_stats(const TrackedAgent& track);

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  /// Predict, associate, update, prune and spawn for one frame at `t`.
  const std::vector<TrackedAgent>& step(std::span<const BoundingBox> detections, Timestamp t);

  const std::vector<TrackedAgent>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }
  std::optional<Timestamp> last_time() const { return last_time_; }

 private:
  TrackedAgent spawn(const BoundingBox& det, double dt);
  void record(TrackedAgent& track, Timestamp t) const;

  TrackerConfig cfg_;
  std::vector<TrackedAgent> tracks_;
  std::vector<BoundingBox> unclaimed_previous_;
  std::optional<Timestamp> last_time_;
  std::uint64_t next_id_ = 1;
};

}  // namespace latefuse
