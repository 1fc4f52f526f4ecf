#include "latefuse/runlog.hpp"

#include <fstream>

namespace latefuse {

using nlohmann::json;

const PredictedTrajectory* LoggedEntry::forecast() const {
  if (fused) return &*fused;
  if (local) return &*local;
  return nullptr;
}

namespace {

json traj_to_json(const std::optional<PredictedTrajectory>& traj) {
  if (!traj) return nullptr;
  json out = json::array();
  for (const auto& s : traj->samples)
    out.push_back(json::array({s.t.micros(), s.mean.x, s.mean.y, s.var_x, s.var_y}));
  return out;
}

std::optional<PredictedTrajectory> traj_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  PredictedTrajectory traj;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != 5) throw InputError("trajectory rows need 5 values");
    PredictedSample s;
    s.t = Timestamp(row[0].get<std::int64_t>());
    s.mean = State2D::at({row[1].get<double>(), row[2].get<double>()});
    s.var_x = row[3].get<double>();
    s.var_y = row[4].get<double>();
    traj.samples.push_back(s);
  }
  return traj;
}

json header_json(const RunLog& log) {
  return json{{"format", kRunLogFormat},
              {"version", kRunLogVersion},
              {"scenario_id", log.scenario_id},
              {"settings",
               {{"fusion", log.settings.fusion},
                {"delay", log.settings.delay},
                {"drop", log.settings.drop},
                {"seed", log.settings.seed}}},
              {"vehicles", log.vehicles}};
}

}  // namespace

json to_json(const VehicleStep& st) {
  json entries = json::array();
  for (const auto& e : st.entries) {
    entries.push_back(json{{"id", e.id},
                           {"category", e.category == Category::L ? "L" : "S"},
                           {"class", std::string(to_string(e.cls))},
                           {"x", e.current.x},
                           {"y", e.current.y},
                           {"heading", e.current.heading ? json(*e.current.heading) : json(nullptr)},
                           {"dims", json::array({e.dims.length, e.dims.width, e.dims.height})},
                           {"pool", e.pool},
                           {"local", traj_to_json(e.local)},
                           {"fused", traj_to_json(e.fused)}});
  }
  json received = json::array();
  for (const auto& r : st.received)
    received.push_back(json{{"sender", r.sender},
                            {"bytes", r.bytes},
                            {"send_us", r.send_time.micros()},
                            {"arrival_us", r.arrival.micros()},
                            {"n_agents", r.n_agents},
                            {"n_aligned", r.n_aligned},
                            {"rejected", r.rejected}});
  json sent = nullptr;
  if (st.sent) {
    json outcomes = json::array();
    for (const auto& o : st.sent->outcomes)
      outcomes.push_back(json{{"receiver", o.receiver}, {"delivered", o.delivered}, {"delay_ms", o.delay_ms}});
    sent = json{{"bytes", st.sent->bytes},
                {"n_agents", st.sent->n_agents},
                {"n_omitted", st.sent->n_omitted},
                {"compressed", st.sent->compressed},
                {"outcomes", outcomes}};
  }
  return json{{"t_us", st.t.micros()},
              {"vehicle", st.vehicle},
              {"n_detections", st.n_detections},
              {"n_visible", st.n_visible},
              {"n_tracks", st.n_tracks},
              {"pool_insertions", st.pool_insertions},
              {"fusion",
               {{"fused_L", st.fusion.fused_L},
                {"fused_S", st.fusion.fused_S},
                {"failures", st.fusion.failures}}},
              {"entries", entries},
              {"received", received},
              {"sent", sent}};
}

void write_runlog(std::ostream& out, const RunLog& log) {
  out << header_json(log).dump() << '\n';
  for (const auto& st : log.steps) out << to_json(st).dump() << '\n';
}

void save_runlog(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write run log " + path.string());
  write_runlog(out, log);
}

namespace {

VehicleStep step_from_json(const json& j) {
  VehicleStep st;
  st.t = Timestamp(j.at("t_us").get<std::int64_t>());
  st.vehicle = j.at("vehicle").get<VehicleId>();
  st.n_detections = j.at("n_detections").get<std::size_t>();
  st.n_visible = j.at("n_visible").get<std::size_t>();
  st.n_tracks = j.at("n_tracks").get<std::size_t>();
  st.pool_insertions = j.at("pool_insertions").get<std::size_t>();
  const json& f = j.at("fusion");
  st.fusion.fused_L = f.at("fused_L").get<std::size_t>();
  st.fusion.fused_S = f.at("fused_S").get<std::size_t>();
  st.fusion.failures = f.at("failures").get<std::size_t>();
  for (const auto& e : j.at("entries")) {
    LoggedEntry le;
    le.id = e.at("id").get<std::string>();
    const auto cat = e.at("category").get<std::string>();
    if (cat != "L" && cat != "S") throw InputError("unknown entry category '" + cat + "'");
    le.category = cat == "L" ? Category::L : Category::S;
    le.cls = class_from_string(e.at("class").get<std::string>());
    le.current = State2D::at({e.at("x").get<double>(), e.at("y").get<double>()});
    if (!e.at("heading").is_null()) le.current.heading = e.at("heading").get<double>();
    const json& d = e.at("dims");
    le.dims = BoxDims{d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
    le.pool = e.at("pool").get<std::size_t>();
    le.local = traj_from_json(e.at("local"));
    le.fused = traj_from_json(e.at("fused"));
    st.entries.push_back(std::move(le));
  }
  for (const auto& r : j.at("received")) {
    ReceivedMessage m;
    m.sender = r.at("sender").get<VehicleId>();
    m.bytes = r.at("bytes").get<std::size_t>();
    m.send_time = Timestamp(r.at("send_us").get<std::int64_t>());
    m.arrival = Timestamp(r.at("arrival_us").get<std::int64_t>());
    m.n_agents = r.at("n_agents").get<std::size_t>();
    m.n_aligned = r.at("n_aligned").get<std::size_t>();
    m.rejected = r.at("rejected").get<bool>();
    st.received.push_back(m);
  }
  if (!j.at("sent").is_null()) {
    const json& s = j.at("sent");
    SentMessage m;
    m.bytes = s.at("bytes").get<std::size_t>();
    m.n_agents = s.at("n_agents").get<std::size_t>();
    m.n_omitted = s.at("n_omitted").get<std::size_t>();
    m.compressed = s.at("compressed").get<bool>();
    for (const auto& o : s.at("outcomes"))
      m.outcomes.push_back(ChannelEvent{o.at("receiver").get<VehicleId>(), o.at("delivered").get<bool>(),
                                        o.at("delay_ms").get<double>()});
    st.sent = std::move(m);
  }
  return st;
}

}  // namespace

RunLog parse_runlog(std::istream& in, const std::string& source) {
  RunLog log;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.at("format") != kRunLogFormat) throw InputError("not a run log");
        if (j.at("version") != kRunLogVersion) throw InputError("unsupported run log version");
        log.scenario_id = j.at("scenario_id").get<std::string>();
        const json& s = j.at("settings");
        log.settings.fusion = s.at("fusion").get<bool>();
        log.settings.delay = s.at("delay").get<bool>();
        log.settings.drop = s.at("drop").get<bool>();
        log.settings.seed = s.at("seed").get<std::uint64_t>();
        log.vehicles = j.at("vehicles").get<std::vector<VehicleId>>();
        have_header = true;
      } else {
        log.steps.push_back(step_from_json(j));
      }
    } catch (const json::exception& e) {
      throw ValidationError(where, e.what());
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError(where, e.what());
    }
  }
  if (!have_header) throw ValidationError(source, "empty run log");
  return log;
}

RunLog load_runlog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open run log");
  return parse_runlog(in, path.string());
}

}  // namespace latefuse
