#include "latefuse/sim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "latefuse/codec.hpp"
#include "latefuse/geometry.hpp"

namespace latefuse {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct Vehicle {
  VehicleConfig cfg;
  Tracker tracker;
  PredictionMap map;
};

bool inside(const BoundingBox& box, const State2D& p) {
  geometry::Polygon<double> poly;
  for (const auto& c : box.corners()) poly.push_back(c);
  return geometry::contains<double>(poly, p.position());
}

std::vector<Timestamp> query_grid(Timestamp t, const PredictorConfig& p) {
  std::vector<Timestamp> q;
  for (std::size_t k = 1; k <= p.steps(); ++k) q.push_back(t + p.step * static_cast<std::int64_t>(k));
  return q;
}

// Decoded agent as a forecast that starts at the sender's own time.
PredictedTrajectory with_current(const wire::SharedAgent& agent, Timestamp gps_time) {
  PredictedTrajectory traj;
  PredictedSample head;
  head.t = gps_time;
  head.mean = State2D::at(agent.current.position());
  if (!agent.traj.empty()) {
    head.var_x = agent.traj.samples.front().var_x;
    head.var_y = agent.traj.samples.front().var_y;
  }
  traj.samples.push_back(head);
  for (const auto& s : agent.traj.samples)
    if (s.t > gps_time) traj.samples.push_back(s);
  return traj;
}

class Orchestrator {
 public:
  Orchestrator(const Scenario& scenario, const RunConfig& config, const RunSettings& settings,
               const TimingSink& timings)
      : scenario_(scenario), settings_(settings), timings_(timings), bus_(channel(config, settings), settings.seed) {
    for (const auto& [id, v] : config.vehicles)
      if (std::find(scenario.meta.vehicles.begin(), scenario.meta.vehicles.end(), id) ==
          scenario.meta.vehicles.end())
        throw ValidationError("config.vehicles." + std::to_string(id), "vehicle not present in scenario");
    for (VehicleId id : scenario.meta.vehicles) {
      VehicleConfig cfg = config.for_vehicle(id);
      cfg.validate(scenario.meta.dt);
      vehicles_.push_back(Vehicle{cfg, Tracker(cfg.tracker), {}});
      bus_.add_receiver(id);
    }
    log_.scenario_id = scenario.meta.id;
    log_.settings = settings;
    log_.vehicles = scenario.meta.vehicles;
  }

  RunLog run() {
    if (scenario_.frames.empty()) return log_;
    const Timestamp t0 = scenario_.frames.front().t;
    for (const auto& frame : scenario_.frames)
      for (auto& v : vehicles_) {
        const VehicleFrame* vf = frame.vehicle(v.cfg.vehicle_id);
        if (!vf || (frame.t - t0).micros % v.cfg.frame_period().micros != 0) continue;
        const bool broadcast_tick = (frame.t - t0).micros % v.cfg.broadcast_period().micros == 0;
        log_.steps.push_back(step(v, *vf, frame.t, broadcast_tick));
      }
    return std::move(log_);
  }

 private:
  static ChannelParams channel(const RunConfig& config, const RunSettings& settings) {
    ChannelParams p = config.channel;
    p.delay_enabled = settings.delay;
    p.drop_enabled = settings.drop;
    return p;
  }

  VehicleStep step(Vehicle& v, const VehicleFrame& vf, Timestamp t, bool broadcast_tick) {
    VehicleStep out;
    out.t = t;
    out.vehicle = v.cfg.vehicle_id;
    StepTiming timing{t, v.cfg.vehicle_id};
    State2D ego = vf.ego.center;
    ego.heading = vf.ego.heading;
    std::vector<LocalPrediction> locals;

    try {
      auto clock = Clock::now();
      out.n_detections = vf.detections.size();
      std::vector<BoundingBox> visible;
      if (v.cfg.mode == PerceptionMode::controlled && v.cfg.occlusion_enabled) {
        const auto scores = occlusion_scores(ego, vf.detections, v.cfg.occlusion.n_rays);
        visible = filter_visible(vf.detections, scores, v.cfg.occlusion.discard_threshold);
      } else {
        visible = vf.detections;
      }
      out.n_visible = visible.size();
      const auto& tracks = v.tracker.step(visible, t);
      out.n_tracks = tracks.size();
      timing.perception_ms = ms_since(clock);

      clock = Clock::now();
      for (const auto& trk : tracks) {
        if (!trk.confirmed) continue;
        locals.push_back(LocalPrediction{trk.track_id, trk.cls, trk.dims, trk.state(),
                                         predict(trk.history_trajectory(), trk.state(), v.cfg.predictor)});
      }
      update_from_predictor(v.map, locals, v.cfg.collab);
      timing.prediction_ms = ms_since(clock);

      clock = Clock::now();
      const bool aggregate = settings_.fusion && v.cfg.aggregate;
      for (const Delivery& d : bus_.poll(v.cfg.vehicle_id, t)) {
        ReceivedMessage rx{d.sender, d.bytes.size(), d.send_time, d.arrival, 0, 0, false};
        if (aggregate) out.pool_insertions += ingest(v, vf.ego, ego, t, d, rx);
        out.received.push_back(rx);
      }
      timing.comms_ms = ms_since(clock);

      clock = Clock::now();
      for (const auto& e : v.map.entries()) out.entries.push_back(LoggedEntry{e.agent_id, e.category, e.cls,
                                                                               e.current_state, e.dims, {}, {},
                                                                               e.pool.size()});
      if (settings_.fusion) {
        const Tracker& tracker = v.tracker;
        GateStatsLookup lookup = [&tracker](const AgentId& id) -> std::optional<GateStats> {
          for (const auto& trk : tracker.tracks())
            if (trk.track_id == id) return gate_stats(trk);
          return std::nullopt;
        };
        const auto query = query_grid(t, v.cfg.predictor);
        out.fusion = fuse_map(v.map, query, lookup, v.cfg.fusion);
      } else {
        for (auto& e : v.map.entries()) {
          e.fused_pred = e.local_pred;
          e.pool.clear();
        }
      }
      for (std::size_t i = 0; i < out.entries.size(); ++i) {
        out.entries[i].local = v.map.entries()[i].local_pred;
        out.entries[i].fused = v.map.entries()[i].fused_pred;
      }
      timing.fusion_ms = ms_since(clock);
    } catch (const Error& e) {
      spdlog::error("vehicle {} at t={}us: {}", v.cfg.vehicle_id, t.micros(), e.what());
    }

    if (broadcast_tick && v.cfg.broadcast) {
      const auto clock = Clock::now();
      try {
        out.sent = publish(v, ego, t, locals);
      } catch (const Error& e) {
        spdlog::error("vehicle {} broadcast at t={}us failed: {}", v.cfg.vehicle_id, t.micros(), e.what());
      }
      timing.comms_ms += ms_since(clock);
    }
    if (timings_) timings_(timing);
    return out;
  }

  std::size_t ingest(Vehicle& v, const BoundingBox& ego_box, const State2D& ego, Timestamp t,
                     const Delivery& d, ReceivedMessage& rx) {
    wire::DecodedMessage msg;
    try {
      msg = wire::decode(d.bytes);
    } catch (const Error& e) {
      spdlog::warn("vehicle {} dropped a malformed message from {}: {}", v.cfg.vehicle_id, d.sender, e.what());
      rx.rejected = true;
      return 0;
    }
    rx.n_agents = msg.agents.size();
    std::vector<AlignedShare> shares;
    for (std::size_t a = 0; a < msg.agents.size(); ++a) {
      const auto& agent = msg.agents[a];
      if (inside(ego_box, agent.current)) continue;  // the sender is reporting us
      auto aligned = temporal_align(with_current(agent, msg.gps_time), t);
      if (!aligned) continue;
      shares.push_back(AlignedShare{"v" + std::to_string(msg.sender_id) + "." + std::to_string(a), agent.cls,
                                    aligned->current_state, std::move(aligned->aligned),
                                    std::move(aligned->offsets)});
    }
    rx.n_aligned = shares.size();
    const SpatialMatch match = spatial_match(v.map, shares, v.cfg.collab.promote_gate_m);
    return update_from_association(v.map, shares, match, v.cfg.collab, ego);
  }

  SentMessage publish(const Vehicle& v, const State2D& ego, Timestamp t,
                      const std::vector<LocalPrediction>& locals) {
    std::vector<wire::SharedAgent> agents;
    for (const auto& p : locals) agents.push_back(wire::SharedAgent{p.cls, p.current, p.pred});
    std::stable_sort(agents.begin(), agents.end(), [&](const auto& a, const auto& b) {
      return distance(a.current, ego) < distance(b.current, ego);
    });
    SentMessage sent;
    std::vector<std::uint8_t> bytes;
    while (true) {
      try {
        bytes = wire::encode(v.cfg.vehicle_id, t, ego.position(), agents);
        break;
      } catch (const SizeError&) {
        if (agents.empty()) throw;
        agents.pop_back();
        ++sent.n_omitted;
      }
    }
    sent.bytes = bytes.size();
    sent.n_agents = agents.size();
    sent.compressed = bytes[1] & wire::kFlagCompressed;
    sent.outcomes = bus_.publish(v.cfg.vehicle_id, bytes, t);
    return sent;
  }

  const Scenario& scenario_;
  RunSettings settings_;
  const TimingSink& timings_;
  Bus bus_;
  std::vector<Vehicle> vehicles_;
  RunLog log_;
};

}  // namespace

RunLog run(const Scenario& scenario, const RunConfig& config, const RunSettings& settings,
           const TimingSink& timings) {
  Orchestrator orchestrator(scenario, config, settings, timings);
  return orchestrator.run();
}

}  // namespace latefuse
