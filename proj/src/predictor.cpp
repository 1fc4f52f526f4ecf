#include "latefuse/predictor.hpp"

#include <Eigen/QR>

#include <cmath>

namespace latefuse {

void PredictorConfig::validate() const {
  if (history_window.micros <= 0 || horizon.micros <= 0 || step.micros <= 0)
    throw InputError("predictor durations must be positive");
  if (horizon.micros % step.micros != 0)
    throw InputError("predictor horizon must be an integer multiple of the step");
  if (!(sigma0_sq > 0.0) || !(sigma_v_sq >= 0.0))
    throw InputError("predictor variance constants must be positive");
}

PredictedTrajectory integrate(const DisplacementForecast& forecast, const State2D& current,
                              Timestamp t0, Duration step) {
  PredictedTrajectory out;
  out.samples.reserve(forecast.size());
  Eigen::Vector2d pos = current.position();
  for (std::size_t k = 0; k < forecast.size(); ++k) {
    pos += forecast[k].mean;
    PredictedSample s;
    s.t = t0 + step * static_cast<std::int64_t>(k + 1);
    s.mean = State2D::at(pos);
    s.var_x = forecast[k].var_x;
    s.var_y = forecast[k].var_y;
    out.samples.push_back(s);
  }
  return out;
}

DisplacementForecast to_displacements(const PredictedTrajectory& pred, const State2D& current) {
  DisplacementForecast out;
  out.reserve(pred.size());
  Eigen::Vector2d prev = current.position();
  for (const auto& s : pred.samples) {
    DisplacementStep d;
    d.mean = s.mean.position() - prev;
    d.var_x = s.var_x;
    d.var_y = s.var_y;
    prev = s.mean.position();
    out.push_back(d);
  }
  return out;
}

PredictedTrajectory predict(const Trajectory& history, const State2D& current,
                            const PredictorConfig& cfg) {
  cfg.validate();
  if (history.empty()) throw InputError("predict requires a non-empty history");
  const Timestamp now = history.samples.back().t;

  std::vector<const TrajectorySample*> window;
  for (const auto& s : history.samples)
    if (now - s.t <= cfg.history_window) window.push_back(&s);

  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  Eigen::Vector2d accel = Eigen::Vector2d::Zero();
  double sigma0_sq = cfg.sigma0_sq;

  if (window.size() < 2) {
    sigma0_sq *= cfg.single_sample_inflation;
  } else {
    const bool with_accel = cfg.fit_acceleration && window.size() >= 3;
    const Eigen::Index cols = with_accel ? 3 : 2;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(window.size()), cols);
    Eigen::MatrixXd b(static_cast<Eigen::Index>(window.size()), 2);
    for (std::size_t i = 0; i < window.size(); ++i) {
      const double tau = (window[i]->t - now).seconds();
      const auto r = static_cast<Eigen::Index>(i);
      A(r, 0) = 1.0;
      A(r, 1) = tau;
      if (with_accel) A(r, 2) = 0.5 * tau * tau;
      b(r, 0) = window[i]->state.x;
      b(r, 1) = window[i]->state.y;
    }
    const Eigen::MatrixXd coef = A.colPivHouseholderQr().solve(b);
    velocity = coef.row(1).transpose();
    if (with_accel) accel = coef.row(2).transpose();
  }

  const std::size_t n = cfg.steps();
  const double dt = cfg.step.seconds();
  DisplacementForecast disp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t1 = dt * static_cast<double>(k + 1);
    const double t0 = dt * static_cast<double>(k);
    disp[k].mean = velocity * dt + 0.5 * accel * (t1 * t1 - t0 * t0);
    disp[k].var_x = disp[k].var_y = sigma0_sq + cfg.sigma_v_sq * t1 * t1;
  }
  return integrate(disp, current, now, cfg.step);
}

double nll(const DisplacementForecast& pred, const std::vector<Eigen::Vector2d>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw InputError("nll needs forecast and truth of equal, non-zero length");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const auto& p = pred[k];
    if (!(p.var_x > 0.0) || !(p.var_y > 0.0)) throw DomainError("nll variances must be > 0");
    const Eigen::Vector2d e = truth[k] - p.mean;
    acc += e.x() * e.x() / (2.0 * p.var_x) + e.y() * e.y() / (2.0 * p.var_y) +
           0.5 * (std::log(p.var_x) + std::log(p.var_y));
  }
  return acc / static_cast<double>(pred.size());
}

double nll(const PredictedTrajectory& pred, const Trajectory& truth, const State2D& current) {
  if (pred.size() != truth.size()) throw InputError("nll needs matching sample counts");
  std::vector<Eigen::Vector2d> true_disp;
  true_disp.reserve(truth.size());
  Eigen::Vector2d prev = current.position();
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth.samples[k].t != pred.samples[k].t)
      throw InputError("nll forecast and truth timestamps differ");
    true_disp.push_back(truth.samples[k].state.position() - prev);
    prev = truth.samples[k].state.position();
  }
  return nll(to_displacements(pred, current), true_disp);
}

}  // namespace latefuse
