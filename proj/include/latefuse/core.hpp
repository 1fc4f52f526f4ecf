#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latefuse/errors.hpp"

namespace latefuse {

/// Signed time difference in integer microseconds.
struct Duration {
  std::int64_t micros = 0;

  static constexpr Duration from_micros(std::int64_t us) { return Duration{us}; }
  static constexpr Duration from_millis(std::int64_t ms) { return Duration{ms * 1000}; }
  /// Rounds to the nearest microsecond.
  static Duration from_seconds(double s) { return Duration{std::llround(s * 1e6)}; }

  constexpr double seconds() const { return static_cast<double>(micros) / 1e6; }

  constexpr auto operator<=>(const Duration&) const = default;
  constexpr Duration operator+(Duration o) const { return {micros + o.micros}; }
  constexpr Duration operator-(Duration o) const { return {micros - o.micros}; }
  constexpr Duration operator*(std::int64_t k) const { return {micros * k}; }
  constexpr Duration operator-() const { return {-micros}; }
};

/// Absolute simulation time (GPS-time convention), microseconds since epoch.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t micros) : micros_(micros) {
    if (micros < 0) throw RangeError("timestamp must be non-negative");
  }
  static Timestamp from_seconds(double s) { return Timestamp(std::llround(s * 1e6)); }

  constexpr std::int64_t micros() const { return micros_; }
  constexpr double seconds() const { return static_cast<double>(micros_) / 1e6; }

  constexpr auto operator<=>(const Timestamp&) const = default;
  constexpr Duration operator-(Timestamp o) const { return {micros_ - o.micros_}; }
  constexpr Timestamp operator+(Duration d) const { return Timestamp(micros_ + d.micros); }
  constexpr Timestamp operator-(Duration d) const { return Timestamp(micros_ - d.micros); }

 private:
  std::int64_t micros_ = 0;
};

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

/// Planar agent state in the global frame. Fusion only ever touches (x, y).
struct State2D {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> heading;
  std::optional<double> speed;

  Eigen::Vector2d position() const { return {x, y}; }
  static State2D at(const Eigen::Vector2d& p) { return State2D{p.x(), p.y(), {}, {}}; }
  bool operator==(const State2D&) const = default;
};

double distance(const State2D& a, const State2D& b);

enum class AgentClass : std::uint8_t { car = 0, van, truck, motorcycle, cyclist, pedestrian };

inline constexpr std::array<AgentClass, 6> kAllClasses = {
    AgentClass::car,        AgentClass::van,      AgentClass::truck,
    AgentClass::motorcycle, AgentClass::cyclist,  AgentClass::pedestrian};

std::string_view to_string(AgentClass c);
AgentClass class_from_string(std::string_view s);
bool is_vehicle(AgentClass c);

struct BoxDims {
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
};

/// Nominal footprint per class; also used for boxes synthesized from shared-only entries.
BoxDims default_dims(AgentClass c);

using AgentId = std::string;

struct BoundingBox {
  State2D center;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  double heading = 0.0;
  AgentId agent_id;
  AgentClass cls = AgentClass::car;

  BoxDims dims() const { return {length, width, height}; }
  /// Ground-plane corners, counter-clockwise.
  std::array<Eigen::Vector2d, 4> corners() const;
  void validate() const;
};

BoundingBox make_box(const AgentId& id, AgentClass cls, double x, double y, double heading,
                     const BoxDims& dims);

struct TrajectorySample {
  Timestamp t;
  State2D state;
};

/// Observed trajectory; timestamps strictly increasing.
struct Trajectory {
  std::vector<TrajectorySample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  void validate() const;
};

struct PredictedSample {
  Timestamp t;
  State2D mean;
  double var_x = 1.0;
  double var_y = 1.0;

  bool operator==(const PredictedSample&) const = default;
};

/// Forecast with per-sample diagonal variance.
struct PredictedTrajectory {
  std::vector<PredictedSample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  Timestamp front_time() const { return samples.front().t; }
  Timestamp back_time() const { return samples.back().t; }
  std::vector<Timestamp> timestamps() const;
  void validate() const;
  bool operator==(const PredictedTrajectory&) const = default;
};

/// Linear interpolation of mean and variances at `t`.
/// Throws RangeError when `t` lies outside the sample span.
PredictedSample interpolate(const PredictedTrajectory& traj, Timestamp t);

}  // namespace latefuse
