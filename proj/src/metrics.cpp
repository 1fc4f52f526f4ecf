#include "latefuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "latefuse/geometry.hpp"

namespace latefuse {

namespace {

geometry::Polygon<double> polygon(const BoundingBox& b) {
  geometry::Polygon<double> p;
  for (const auto& c : b.corners()) p.push_back(c);
  return p;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double iou_bev(const BoundingBox& a, const BoundingBox& b) {
  const auto pa = polygon(a);
  const auto pb = polygon(b);
  const double inter = geometry::area(geometry::clip_convex(pa, pb));
  const double uni = geometry::area(pa) + geometry::area(pb) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MatchResult greedy_match(std::span<const BoundingBox> gt, std::span<const BoundingBox> pred,
                         double iou_threshold) {
  MatchResult out;
  std::vector<char> used(pred.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    std::size_t best = pred.size();
    double best_iou = -1.0;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      if (used[p]) continue;
      const double iou = iou_bev(gt[g], pred[p]);
      if (iou > best_iou) {
        best_iou = iou;
        best = p;
      }
    }
    if (best < pred.size() && best_iou >= iou_threshold) {
      used[best] = 1;
      out.matches.emplace_back(g, best);
    } else {
      out.unmatched_gt.push_back(g);
    }
  }
  return out;
}

std::optional<FrameMetrics> frame_metrics(std::span<const ForecastPair> matched, std::size_t n_gt,
                                          double tsr_threshold, const std::string& setting) {
  if (n_gt == 0) return std::nullopt;
  if (matched.size() > n_gt) throw InputError("more matched forecasts than ground-truth agents");
  FrameMetrics m;
  m.n_gt = n_gt;
  m.n_matched = matched.size();
  m.setting = setting;
  double sum = 0.0, final_sum = 0.0;
  std::size_t steps = 0, successes = 0;
  for (const auto& pair : matched) {
    if (pair.forecast.size() != pair.truth.size() || pair.forecast.empty())
      throw InputError("forecast and truth must share a non-empty grid");
    for (std::size_t k = 0; k < pair.forecast.size(); ++k) sum += (pair.forecast[k] - pair.truth[k]).norm();
    steps += pair.forecast.size();
    const double final_err = (pair.forecast.back() - pair.truth.back()).norm();
    final_sum += final_err;
    if (final_err <= tsr_threshold) ++successes;
  }
  m.ade = matched.empty() ? kNaN : sum / static_cast<double>(steps);
  m.fde = matched.empty() ? kNaN : final_sum / static_cast<double>(matched.size());
  m.mr = static_cast<double>(n_gt - matched.size()) / static_cast<double>(n_gt);
  m.tsr = static_cast<double>(successes) / static_cast<double>(n_gt);
  return m;
}

SizeStats size_stats(std::vector<double> v) {
  SizeStats s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  s.count = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.min = v.front();
  s.q1 = q(0.25);
  s.median = q(0.5);
  s.q3 = q(0.75);
  s.p95 = q(0.95);
  s.max = v.back();
  return s;
}

Report aggregate(std::span<const FrameMetrics> frames) {
  if (frames.empty()) throw InputError("cannot aggregate an empty set of frames");
  Report r;
  r.setting = frames.front().setting;
  double ade = 0.0, fde = 0.0, mr = 0.0, tsr = 0.0;
  for (const auto& f : frames) {
    if (f.setting != r.setting)
      throw InputError("frames from different settings ('" + r.setting + "' and '" + f.setting + "')");
    mr += f.mr;
    tsr += f.tsr;
    if (f.n_matched > 0) {
      ade += f.ade;
      fde += f.fde;
      ++r.frames_with_matches;
    }
  }
  r.frames = frames.size();
  const double n = static_cast<double>(frames.size());
  r.mr = mr / n;
  r.tsr = tsr / n;
  r.ade = r.frames_with_matches ? ade / static_cast<double>(r.frames_with_matches) : kNaN;
  r.fde = r.frames_with_matches ? fde / static_cast<double>(r.frames_with_matches) : kNaN;
  return r;
}

BoundingBox entry_box(const LoggedEntry& e) {
  if (e.category == Category::L)
    return make_box(e.id, e.cls, e.current.x, e.current.y, e.current.heading.value_or(0.0), e.dims);
  double heading = e.current.heading.value_or(0.0);
  if (const PredictedTrajectory* f = e.forecast(); f && !f->empty()) {
    const Eigen::Vector2d d = f->samples.back().mean.position() - e.current.position();
    if (d.norm() > 0.1) heading = std::atan2(d.y(), d.x());
  }
  return make_box(e.id, e.cls, e.current.x, e.current.y, heading, default_dims(e.cls));
}

VehicleEvaluation evaluate_vehicle(const Scenario& scenario, const RunLog& log, VehicleId vehicle,
                                   const MetricsConfig& cfg) {
  VehicleEvaluation out;
  const Duration step = Duration::from_seconds(cfg.step_s);
  const auto n_steps = static_cast<std::size_t>(std::llround(cfg.horizon_s / cfg.step_s));
  if (step.micros <= 0 || n_steps == 0) throw InputError("evaluation grid must be positive");
  const std::string setting = log.settings.tag();

  for (const auto& st : log.steps) {
    if (st.vehicle != vehicle) continue;
    if (st.sent) out.message_bytes.push_back(static_cast<double>(st.sent->bytes));
    const auto fi = scenario.frame_at(st.t);
    if (!fi) continue;
    const Frame& frame = scenario.frames[*fi];
    const VehicleFrame* vf = frame.vehicle(vehicle);
    if (!vf) continue;

    std::vector<Timestamp> grid;
    for (std::size_t k = 1; k <= n_steps; ++k) grid.push_back(st.t + step * static_cast<std::int64_t>(k));

    // truth: other agents near the ego whose whole future horizon is known
    std::vector<BoundingBox> gt;
    std::vector<std::vector<Eigen::Vector2d>> gt_future;
    for (const auto& b : frame.ground_truth) {
      if (b.agent_id == vf->ego.agent_id) continue;
      if (distance(b.center, vf->ego.center) > cfg.eval_radius_m) continue;
      std::vector<Eigen::Vector2d> fut;
      for (Timestamp t : grid) {
        const auto k = scenario.frame_at(t);
        const BoundingBox* later = k ? scenario.frames[*k].truth(b.agent_id) : nullptr;
        if (!later) break;
        fut.push_back(later->center.position());
      }
      if (fut.size() != grid.size()) continue;
      gt.push_back(b);
      gt_future.push_back(std::move(fut));
    }

    std::vector<BoundingBox> pred;
    std::vector<std::vector<Eigen::Vector2d>> pred_future;
    std::vector<Category> pred_cat;
    for (const auto& e : st.entries) {
      const PredictedTrajectory* f = e.forecast();
      if (!f || f->empty()) continue;
      std::vector<Eigen::Vector2d> fut;
      try {
        for (Timestamp t : grid) fut.push_back(interpolate(*f, t).mean.position());
      } catch (const RangeError&) {
        continue;
      }
      pred.push_back(entry_box(e));
      pred_future.push_back(std::move(fut));
      pred_cat.push_back(e.category);
    }

    const MatchResult match = greedy_match(gt, pred, cfg.iou_threshold);
    std::vector<ForecastPair> pairs;
    for (const auto& [g, p] : match.matches) {
      pairs.push_back(ForecastPair{pred_future[p], gt_future[g]});
      if (pred_cat[p] == Category::S) ++out.s_entry_matches;
    }
    if (auto m = frame_metrics(pairs, gt.size(), cfg.tsr_threshold, setting)) out.frames.push_back(*m);
  }
  return out;
}

std::vector<Report> evaluate_run(const Scenario& scenario, const RunLog& log, const MetricsConfig& cfg) {
  if (log.scenario_id != scenario.meta.id)
    throw InputError("run log belongs to scenario '" + log.scenario_id + "', not '" + scenario.meta.id + "'");
  std::vector<Report> reports;
  for (VehicleId v : log.vehicles) {
    const VehicleEvaluation ev = evaluate_vehicle(scenario, log, v, cfg);
    if (ev.frames.empty()) continue;
    Report r = aggregate(ev.frames);
    r.scenario_id = scenario.meta.id;
    r.vehicle_id = v;
    r.message_bytes = size_stats(ev.message_bytes);
    reports.push_back(r);
  }
  if (reports.empty()) throw InputError("no frame of the run could be evaluated");
  return reports;
}

void write_report_csv(std::ostream& out, std::span<const Report> reports) {
  out << "scenario_id,vehicle_id,setting,ade_m,fde_m,mr,tsr_0_5,frames,mean_msg_bytes,p50_msg_bytes,p95_msg_bytes\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& r : reports)
    out << r.scenario_id << ',' << r.vehicle_id << ",\"" << r.setting << "\"," << r.ade << ',' << r.fde << ','
        << r.mr << ',' << r.tsr << ',' << r.frames << ',' << r.message_bytes.mean << ','
        << r.message_bytes.median << ',' << r.message_bytes.p95 << '\n';
  out.flags(flags);
  out.precision(precision);
}

nlohmann::json to_json(const Report& r) {
  const auto& m = r.message_bytes;
  return nlohmann::json{{"scenario_id", r.scenario_id},
                        {"vehicle_id", r.vehicle_id},
                        {"setting", r.setting},
                        {"ade_m", r.ade},
                        {"fde_m", r.fde},
                        {"mr", r.mr},
                        {"tsr_0_5", r.tsr},
                        {"frames", r.frames},
                        {"frames_with_matches", r.frames_with_matches},
                        {"message_bytes",
                         {{"count", m.count},
                          {"mean", m.mean},
                          {"min", m.min},
                          {"q1", m.q1},
                          {"median", m.median},
                          {"q3", m.q3},
                          {"p95", m.p95},
                          {"max", m.max}}}};
}

}  // namespace latefuse
