#include "latefuse/tracker.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

#include "latefuse/hungarian.hpp"

namespace latefuse {

namespace {

constexpr double kInadmissible = 1e9;

bool all_finite(const KfState& kf) { return kf.x.allFinite() && kf.P.allFinite(); }

Eigen::Matrix<double, 2, 6> position_selector() {
  Eigen::Matrix<double, 2, 6> H = Eigen::Matrix<double, 2, 6>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  return H;
}

// Innovation covariance inverse with a single jitter retry.
Eigen::Matrix2d innovation_inverse(const Eigen::Matrix2d& S) {
  Eigen::LLT<Eigen::Matrix2d> llt(S);
  if (llt.info() != Eigen::Success) {
    llt.compute(S + 1e-9 * Eigen::Matrix2d::Identity());
    if (llt.info() != Eigen::Success) throw NumericError("innovation covariance is singular");
  }
  return llt.solve(Eigen::Matrix2d::Identity());
}

}  // namespace

bool KfState::covariance_valid(double tol) const {
  if (!P.allFinite()) return false;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, P.cwiseAbs().maxCoeff()))
    return false;
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (P + P.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, P.cwiseAbs().maxCoeff());
}

Matrix6d ca_transition(double dt) {
  Matrix6d F = Matrix6d::Identity();
  for (int i = 0; i < 2; ++i) {
    F(i, i + 2) = dt;
    F(i, i + 4) = 0.5 * dt * dt;
    F(i + 2, i + 4) = dt;
  }
  return F;
}

Matrix6d ca_process_noise(double dt, double q) {
  const double d2 = dt * dt, d3 = d2 * dt, d4 = d3 * dt, d5 = d4 * dt;
  Eigen::Matrix3d block;
  block << d5 / 20.0, d4 / 8.0, d3 / 6.0,
           d4 / 8.0,  d3 / 3.0, d2 / 2.0,
           d3 / 6.0,  d2 / 2.0, dt;
  block *= q * q;
  Matrix6d Q = Matrix6d::Zero();
  for (int axis = 0; axis < 2; ++axis)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Q(axis + 2 * r, axis + 2 * c) = block(r, c);
  return Q;
}

KfState kf_predict(const KfState& kf, double dt, double q) {
  if (!(dt > 0.0)) throw InputError("kf_predict requires dt > 0");
  if (!std::isfinite(dt) || !std::isfinite(q) || !all_finite(kf))
    throw NumericError("kf_predict received non-finite input");
  const Matrix6d F = ca_transition(dt);
  KfState out;
  out.x = F * kf.x;
  out.P = F * kf.P * F.transpose() + ca_process_noise(dt, q);
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

double innovation_nis(const KfState& kf, const Eigen::Vector2d& z, double r) {
  const auto H = position_selector();
  const Eigen::Vector2d nu = z - H * kf.x;
  const Eigen::Matrix2d S = H * kf.P * H.transpose() + r * Eigen::Matrix2d::Identity();
  return nu.dot(innovation_inverse(S) * nu);
}

KfUpdateResult kf_update(const KfState& kf, const Eigen::Vector2d& z, double r) {
  if (!(r > 0.0)) throw InputError("kf_update requires r > 0");
  if (!z.allFinite() || !all_finite(kf)) throw NumericError("kf_update received non-finite input");
  const auto H = position_selector();
  const Eigen::Vector2d nu = z - H * kf.x;
  const Eigen::Matrix2d S = H * kf.P * H.transpose() + r * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d S_inv = innovation_inverse(S);
  const Eigen::Matrix<double, 6, 2> K = kf.P * H.transpose() * S_inv;

  KfUpdateResult res;
  res.state.x = kf.x + K * nu;
  // Joseph form keeps P symmetric PSD.
  const Matrix6d I_KH = Matrix6d::Identity() - K * H;
  res.state.P = I_KH * kf.P * I_KH.transpose() + r * K * K.transpose();
  res.state.P = 0.5 * (res.state.P + res.state.P.transpose());
  res.nis = nu.dot(S_inv * nu);
  return res;
}

void RunningMedian::push(double v) {
  if (low_.empty() || v <= low_.top())
    low_.push(v);
  else
    high_.push(v);
  if (low_.size() > high_.size() + 1) {
    high_.push(low_.top());
    low_.pop();
  } else if (high_.size() > low_.size()) {
    low_.push(high_.top());
    high_.pop();
  }
}

double RunningMedian::median() const {
  if (empty()) throw InputError("median of an empty sequence");
  if (low_.size() > high_.size()) return low_.top();
  return 0.5 * (low_.top() + high_.top());
}

State2D TrackedAgent::state() const {
  State2D s = State2D::at(kf.position());
  s.heading = heading;
  s.speed = kf.velocity().norm();
  return s;
}

BoundingBox TrackedAgent::box() const {
  const auto p = kf.position();
  return make_box(track_id, cls, p.x(), p.y(), heading, dims);
}

Trajectory TrackedAgent::history_trajectory() const {
  return Trajectory{{history.begin(), history.end()}};
}

double AssociationGates::euclid_gate(AgentClass cls, bool confirmed) const {
  const double base = confirmed ? euclid_confirmed_m : euclid_tentative_m;
  return is_vehicle(cls) ? base * vehicle_scale : base;
}

Assignment associate(std::span<const TrackedAgent> tracks, std::span<const BoundingBox> detections,
                     AssociationMode mode, const AssociationGates& gates, double r) {
  Assignment out;
  std::vector<char> track_used(tracks.size(), 0), det_used(detections.size(), 0);

  if (mode == AssociationMode::gt_id) {
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
      for (std::size_t di = 0; di < detections.size(); ++di) {
        if (det_used[di] || detections[di].agent_id != tracks[ti].track_id) continue;
        out.matches.emplace_back(ti, di);
        track_used[ti] = det_used[di] = 1;
        break;
      }
    }
  } else if (!tracks.empty() && !detections.empty()) {
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(tracks.size()),
                         static_cast<Eigen::Index>(detections.size()));
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
      const auto& trk = tracks[ti];
      const double gate = gates.euclid_gate(trk.cls, trk.confirmed);
      for (std::size_t di = 0; di < detections.size(); ++di) {
        const auto& det = detections[di];
        const Eigen::Vector2d z = det.center.position();
        double c = kInadmissible;
        if (det.cls == trk.cls && (z - trk.kf.position()).norm() <= gate) {
          const double nis = innovation_nis(trk.kf, z, r);
          if (nis <= gates.nis_max) c = nis;
        }
        cost(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(di)) = c;
      }
    }
    const auto row_to_col = solve_assignment(cost);
    for (std::size_t ti = 0; ti < row_to_col.size(); ++ti) {
      const int di = row_to_col[ti];
      if (di < 0 || cost(static_cast<Eigen::Index>(ti), di) >= kInadmissible) continue;
      out.matches.emplace_back(ti, static_cast<std::size_t>(di));
      track_used[ti] = det_used[static_cast<std::size_t>(di)] = 1;
    }
  }

  for (std::size_t ti = 0; ti < tracks.size(); ++ti)
    if (!track_used[ti]) out.unmatched_tracks.push_back(ti);
  for (std::size_t di = 0; di < detections.size(); ++di)
    if (!det_used[di]) out.unmatched_detections.push_back(di);
  return out;
}

GateStats gate_stats(const TrackedAgent& track) {
  if (track.cov_trace_history.empty()) throw InputError("gate_stats needs a covariance history");
  const double med = track.cov_trace_median.median();
  const double current = track.cov_trace_history.back();
  GateStats s;
  s.streak = track.streak;
  s.cov_ratio = med == 0.0 ? std::numeric_limits<double>::infinity() : current / med;
  return s;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.measurement_var > 0.0)) throw InputError("measurement variance must be > 0");
  if (cfg_.lifetime < 0 || cfg_.confirm_hits < 1) throw InputError("invalid tracker lifecycle");
}

void Tracker::record(TrackedAgent& track, Timestamp t) const {
  const double tr = track.kf.P.trace();
  track.cov_trace_history.push_back(tr);
  track.cov_trace_median.push(tr);
  track.history.push_back(TrajectorySample{t, track.state()});
  while (track.history.size() > cfg_.history_capacity) track.history.pop_front();
}

TrackedAgent Tracker::spawn(const BoundingBox& det, double dt) {
  TrackedAgent trk;
  trk.track_id = cfg_.mode == AssociationMode::gt_id ? det.agent_id
                                                      : "t" + std::to_string(next_id_++);
  trk.cls = det.cls;
  trk.dims = det.dims();
  trk.heading = det.heading;
  trk.hits = 1;
  trk.confirmed = trk.hits >= cfg_.confirm_hits;

  const double r = cfg_.measurement_var;
  trk.kf.x.setZero();
  trk.kf.x.head<2>() = det.center.position();
  trk.kf.P = Matrix6d::Zero();
  trk.kf.P.diagonal() << r, r, cfg_.init_vel_var, cfg_.init_vel_var, cfg_.init_acc_var,
      cfg_.init_acc_var;

  if (cfg_.bootstrap_velocity && dt > 0.0) {
    const BoundingBox* best = nullptr;
    double best_d = cfg_.gates.euclid_gate(det.cls, false);
    for (const auto& prev : unclaimed_previous_) {
      if (prev.cls != det.cls) continue;
      if (cfg_.mode == AssociationMode::gt_id && prev.agent_id != det.agent_id) continue;
      const double d = (prev.center.position() - det.center.position()).norm();
      if (d <= best_d) {
        best_d = d;
        best = &prev;
      }
    }
    if (best) {
      trk.kf.x.segment<2>(2) = (det.center.position() - best->center.position()) / dt;
      const double vv = 2.0 * r / (dt * dt);
      trk.kf.P(2, 2) = trk.kf.P(3, 3) = vv;
      trk.kf.P(0, 2) = trk.kf.P(2, 0) = r / dt;
      trk.kf.P(1, 3) = trk.kf.P(3, 1) = r / dt;
    }
  }
  return trk;
}

const std::vector<TrackedAgent>& Tracker::step(std::span<const BoundingBox> detections,
                                               Timestamp t) {
  if (last_time_ && !(t > *last_time_))
    throw InputError("tracker step time must strictly increase");
  const double dt = last_time_ ? (t - *last_time_).seconds() : 0.0;

  if (last_time_)
    for (auto& trk : tracks_) trk.kf = kf_predict(trk.kf, dt, cfg_.process_noise);

  const Assignment asg = associate(tracks_, detections, cfg_.mode, cfg_.gates, cfg_.measurement_var);

  for (const auto& [ti, di] : asg.matches) {
    auto& trk = tracks_[ti];
    const auto& det = detections[di];
    trk.kf = kf_update(trk.kf, det.center.position(), cfg_.measurement_var).state;
    trk.streak = 0;
    trk.hits += 1;
    trk.confirmed = trk.confirmed || trk.hits >= cfg_.confirm_hits;
    const double a = cfg_.box_ema;
    trk.dims.length += a * (det.length - trk.dims.length);
    trk.dims.width += a * (det.width - trk.dims.width);
    trk.dims.height += a * (det.height - trk.dims.height);
    trk.heading = det.heading;
  }
  // Detections that did not refresh a confirmed track seed velocity bootstrap next frame.
  std::set<std::size_t> claimed;
  for (const auto& [ti, di] : asg.matches)
    if (tracks_[ti].confirmed) claimed.insert(di);

  for (std::size_t ti : asg.unmatched_tracks) {
    auto& trk = tracks_[ti];
    trk.streak += 1;
    trk.misses += 1;
    const Eigen::Vector2d v = trk.kf.velocity();
    if (v.norm() > 0.5) trk.heading = std::atan2(v.y(), v.x());
  }

  std::erase_if(tracks_, [&](const TrackedAgent& trk) { return trk.streak > cfg_.lifetime; });

  for (std::size_t di : asg.unmatched_detections)
    tracks_.push_back(spawn(detections[di], dt));

  for (auto& trk : tracks_) record(trk, t);

  unclaimed_previous_.clear();
  for (std::size_t di = 0; di < detections.size(); ++di)
    if (!claimed.count(di)) unclaimed_previous_.push_back(detections[di]);

  last_time_ = t;
  return tracks_;
}

}  // namespace latefuse
