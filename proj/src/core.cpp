#include "latefuse/core.hpp"

#include <algorithm>
#include <numbers>

namespace latefuse {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift
  return r >= std::numbers::pi ? -std::numbers::pi : r;
}

double distance(const State2D& a, const State2D& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string_view to_string(AgentClass c) {
  switch (c) {
    case AgentClass::car: return "car";
    case AgentClass::van: return "van";
    case AgentClass::truck: return "truck";
    case AgentClass::motorcycle: return "motorcycle";
    case AgentClass::cyclist: return "cyclist";
    case AgentClass::pedestrian: return "pedestrian";
  }
  return "car";
}

AgentClass class_from_string(std::string_view s) {
  for (AgentClass c : kAllClasses)
    if (to_string(c) == s) return c;
  throw InputError("unknown agent class '" + std::string(s) + "'");
}

bool is_vehicle(AgentClass c) {
  return c == AgentClass::car || c == AgentClass::van || c == AgentClass::truck ||
         c == AgentClass::motorcycle;
}

BoxDims default_dims(AgentClass c) {
  switch (c) {
    case AgentClass::car: return {4.5, 1.9, 1.6};
    case AgentClass::van: return {5.0, 2.0, 2.2};
    case AgentClass::truck: return {8.0, 2.5, 3.5};
    case AgentClass::motorcycle: return {2.2, 0.8, 1.5};
    case AgentClass::cyclist: return {1.8, 0.6, 1.7};
    case AgentClass::pedestrian: return {0.6, 0.6, 1.75};
  }
  return {4.5, 1.9, 1.6};
}

std::array<Eigen::Vector2d, 4> BoundingBox::corners() const {
  const Eigen::Vector2d c = center.position();
  const Eigen::Vector2d fwd(std::cos(heading), std::sin(heading));
  const Eigen::Vector2d left(-fwd.y(), fwd.x());
  const Eigen::Vector2d hl = 0.5 * length * fwd;
  const Eigen::Vector2d hw = 0.5 * width * left;
  return {c + hl - hw, c + hl + hw, c - hl + hw, c - hl - hw};
}

void BoundingBox::validate() const {
  if (!(length > 0.0 && width > 0.0 && height > 0.0))
    throw InputError("box '" + agent_id + "' must have positive dimensions");
  if (!std::isfinite(center.x) || !std::isfinite(center.y))
    throw InputError("box '" + agent_id + "' has a non-finite center");
}

BoundingBox make_box(const AgentId& id, AgentClass cls, double x, double y, double heading,
                     const BoxDims& dims) {
  BoundingBox b;
  b.center = State2D{x, y, wrap_angle(heading), {}};
  b.length = dims.length;
  b.width = dims.width;
  b.height = dims.height;
  b.heading = wrap_angle(heading);
  b.agent_id = id;
  b.cls = cls;
  return b;
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i - 1].t < samples[i].t))
      throw InputError("trajectory timestamps must be strictly increasing");
}

std::vector<Timestamp> PredictedTrajectory::timestamps() const {
  std::vector<Timestamp> ts;
  ts.reserve(samples.size());
  for (const auto& s : samples) ts.push_back(s.t);
  return ts;
}

void PredictedTrajectory::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (i > 0 && !(samples[i - 1].t < s.t))
      throw InputError("predicted trajectory timestamps must be strictly increasing");
    if (!(s.var_x > 0.0) || !(s.var_y > 0.0) || !std::isfinite(s.var_x) ||
        !std::isfinite(s.var_y))
      throw InputError("predicted trajectory variances must be positive and finite");
  }
}

PredictedSample interpolate(const PredictedTrajectory& traj, Timestamp t) {
  if (traj.empty()) throw RangeError("cannot interpolate an empty trajectory");
  if (t < traj.front_time() || t > traj.back_time())
    throw RangeError("interpolation time outside trajectory span");

  const auto& s = traj.samples;
  auto hi = std::lower_bound(s.begin(), s.end(), t,
                             [](const PredictedSample& a, Timestamp v) { return a.t < v; });
  if (hi->t == t) return *hi;
  auto lo = std::prev(hi);

  const double w = static_cast<double>((t - lo->t).micros) /
                   static_cast<double>((hi->t - lo->t).micros);
  auto lerp = [w](double a, double b) { return a + w * (b - a); };

  PredictedSample out;
  out.t = t;
  out.mean.x = lerp(lo->mean.x, hi->mean.x);
  out.mean.y = lerp(lo->mean.y, hi->mean.y);
  out.var_x = lerp(lo->var_x, hi->var_x);
  out.var_y = lerp(lo->var_y, hi->var_y);
  return out;
}

}  // namespace latefuse
