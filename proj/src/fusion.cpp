#include "latefuse/fusion.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace latefuse {

namespace {

struct Observations {
  std::vector<double> t;
  std::vector<double> x, y;
  std::vector<double> var_x, var_y;
};

gp::Vector<double> as_vector(const std::vector<double>& v) {
  return Eigen::Map<const gp::Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

gp::Vector<double> query_seconds(std::span<const Timestamp> query, Timestamp origin) {
  gp::Vector<double> q(static_cast<Eigen::Index>(query.size()));
  for (std::size_t i = 0; i < query.size(); ++i)
    q(static_cast<Eigen::Index>(i)) = (query[i] - origin).seconds();
  return q;
}

}  // namespace

void GateConfig::validate() const {
  if (min_streak < 1 || !(cov_ratio > 1.0))
    throw InputError("gate requires min_streak >= 1 and cov_ratio > 1");
}

bool kf_gate(int streak, double cov_ratio, const GateConfig& cfg) {
  return streak >= cfg.min_streak || cov_ratio >= cfg.cov_ratio;
}

PredictedTrajectory fuse_category_L(const MapEntry& entry, std::span<const Timestamp> query,
                                    const GateStats& stats, const FusionConfig& cfg) {
  if (entry.category != Category::L || !entry.local_pred)
    throw InputError("fuse_category_L needs an L entry with a local prediction");
  const PredictedTrajectory& local = *entry.local_pred;
  if (!kf_gate(stats.streak, stats.cov_ratio, cfg.gate) || entry.pool.empty()) return local;

  const Timestamp origin = query.empty() ? local.front_time() : query.front();
  Observations obs;
  for (const auto& shared : entry.pool)
    for (const auto& s : shared.samples) {
      if (s.t < local.front_time() || s.t > local.back_time()) continue;
      const PredictedSample ego = interpolate(local, s.t);
      obs.t.push_back((s.t - origin).seconds());
      obs.x.push_back(s.mean.x - ego.mean.x);
      obs.y.push_back(s.mean.y - ego.mean.y);
      obs.var_x.push_back(s.var_x);
      obs.var_y.push_back(s.var_y);
    }
  if (obs.t.empty()) return local;

  const auto t = as_vector(obs.t);
  const auto q = query_seconds(query, origin);
  const auto model_x = gp::fit<double>(t, as_vector(obs.x), as_vector(obs.var_x), cfg.fit);
  const auto model_y = gp::fit<double>(t, as_vector(obs.y), as_vector(obs.var_y), cfg.fit);
  const auto corr_x = model_x.posterior_mean(q);
  const auto corr_y = model_y.posterior_mean(q);

  PredictedTrajectory out;
  out.samples.reserve(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    PredictedSample s = interpolate(local, query[i]);
    s.mean = State2D::at({s.mean.x + corr_x(static_cast<Eigen::Index>(i)),
                          s.mean.y + corr_y(static_cast<Eigen::Index>(i))});
    out.samples.push_back(s);
  }
  if (spdlog::should_log(spdlog::level::trace)) {
    const auto pv = model_x.posterior_variance(q);
    spdlog::trace("residual fusion {}: {} pooled samples, max residual posterior var {:.3g}",
                  entry.agent_id, obs.t.size(), pv.size() ? pv.maxCoeff() : 0.0);
  }
  return out;
}

PredictedTrajectory fuse_category_S(const MapEntry& entry, std::span<const Timestamp> query,
                                    const FusionConfig& cfg) {
  if (entry.category != Category::S || entry.pool.empty())
    throw InputError("fuse_category_S needs an S entry with a non-empty pool");

  const Timestamp origin = query.empty() ? entry.pool.front().front_time() : query.front();
  Observations obs;
  for (const auto& shared : entry.pool)
    for (const auto& s : shared.samples) {
      obs.t.push_back((s.t - origin).seconds());
      obs.x.push_back(s.mean.x);
      obs.y.push_back(s.mean.y);
      obs.var_x.push_back(s.var_x);
      obs.var_y.push_back(s.var_y);
    }

  const auto t = as_vector(obs.t);
  const auto q = query_seconds(query, origin);

  auto reconstruct = [&](const std::vector<double>& values, const std::vector<double>& vars) {
    const gp::Vector<double> y = as_vector(values);
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    const double scale = sd > 1e-12 ? sd : 1.0;
    const gp::Vector<double> yn = (y.array() - mean) / scale;
    const gp::Vector<double> vn = as_vector(vars) / (scale * scale);
    const auto model = gp::fit<double>(t, yn, vn, cfg.fit);
    const gp::Vector<double> mu = (model.posterior_mean(q).array() * scale + mean).matrix();
    const gp::Vector<double> var = model.posterior_variance(q) * (scale * scale);
    return std::pair{mu, var};
  };
  const auto [mx, vx] = reconstruct(obs.x, obs.var_x);
  const auto [my, vy] = reconstruct(obs.y, obs.var_y);

  PredictedTrajectory out;
  out.samples.reserve(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    PredictedSample s;
    s.t = query[i];
    s.mean = State2D::at({mx(k), my(k)});
    s.var_x = std::max(vx(k), cfg.min_output_var);
    s.var_y = std::max(vy(k), cfg.min_output_var);
    out.samples.push_back(s);
  }
  return out;
}

FusionSweep fuse_map(PredictionMap& map, std::span<const Timestamp> query,
                     const GateStatsLookup& stats, const FusionConfig& cfg) {
  FusionSweep sweep;
  for (auto& e : map.entries()) {
    try {
      if (e.category == Category::L) {
        if (!e.local_pred) continue;
        const std::optional<GateStats> st = stats ? stats(e.agent_id) : std::nullopt;
        // a missing track means nothing is known about its health; keep the gate shut
        const GateStats gs = st.value_or(GateStats{0, 1.0});
        if (!e.pool.empty() && kf_gate(gs.streak, gs.cov_ratio, cfg.gate)) ++sweep.fused_L;
        e.fused_pred = fuse_category_L(e, query, gs, cfg);
      } else if (!e.pool.empty()) {
        e.fused_pred = fuse_category_S(e, query, cfg);
        ++sweep.fused_S;
      } else {
        e.fused_pred.reset();
      }
    } catch (const NumericError& err) {
      spdlog::warn("fusion of {} failed: {}", e.agent_id, err.what());
      ++sweep.failures;
      if (e.category == Category::L)
        e.fused_pred = e.local_pred;
      else
        e.fused_pred.reset();
    }
  }
  for (auto& e : map.entries()) e.pool.clear();
  return sweep;
}

}  // namespace latefuse
