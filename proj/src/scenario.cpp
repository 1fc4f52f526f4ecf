#include "latefuse/scenario.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "latefuse/channel.hpp"
#include "latefuse/occlusion.hpp"

namespace latefuse {

using nlohmann::json;

const VehicleFrame* Frame::vehicle(VehicleId id) const {
  for (const auto& v : vehicles)
    if (v.vehicle_id == id) return &v;
  return nullptr;
}

const BoundingBox* Frame::truth(const AgentId& id) const {
  for (const auto& b : ground_truth)
    if (b.agent_id == id) return &b;
  return nullptr;
}

std::optional<std::size_t> Scenario::frame_at(Timestamp t) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), t,
                             [](const Frame& f, Timestamp x) { return f.t < x; });
  if (it == frames.end() || it->t != t) return std::nullopt;
  return static_cast<std::size_t>(it - frames.begin());
}

namespace {

std::string frame_where(std::size_t k) { return "frame " + std::to_string(k); }

void check_boxes(const std::vector<BoundingBox>& boxes, const std::string& where) {
  std::set<AgentId> seen;
  for (const auto& b : boxes) {
    try {
      b.validate();
    } catch (const Error& e) {
      throw ValidationError(where + " box '" + b.agent_id + "'", e.what());
    }
    if (!seen.insert(b.agent_id).second)
      throw ValidationError(where, "duplicate agent id '" + b.agent_id + "'");
  }
}

}  // namespace

void Scenario::validate() const {
  if (meta.id.empty()) throw ValidationError("header.id", "must be non-empty");
  if (meta.dt.micros <= 0) throw ValidationError("header.dt_us", "must be positive");
  if (meta.vehicles.empty()) throw ValidationError("header.vehicles", "must list at least one vehicle");
  if (std::set<VehicleId>(meta.vehicles.begin(), meta.vehicles.end()).size() != meta.vehicles.size())
    throw ValidationError("header.vehicles", "duplicate vehicle id");
  if (frames.empty()) throw ValidationError("frames", "scenario has no frames");
  if (meta.duration != meta.dt * static_cast<std::int64_t>(frames.size()))
    throw ValidationError("header.duration_us", "must equal frame count times dt");

  const std::set<VehicleId> declared(meta.vehicles.begin(), meta.vehicles.end());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame& f = frames[k];
    const std::string where = frame_where(k);
    if (k > 0) {
      if (!(frames[k - 1].t < f.t))
        throw ValidationError(where, "timestamps must increase");
      if (f.t - frames[k - 1].t != meta.dt)
        throw ValidationError(where, "frame spacing differs from dt");
    }
    check_boxes(f.ground_truth, where + " ground_truth");
    std::set<VehicleId> present;
    for (const auto& v : f.vehicles) {
      if (!declared.count(v.vehicle_id))
        throw ValidationError(where, "vehicle " + std::to_string(v.vehicle_id) + " not declared in header");
      if (!present.insert(v.vehicle_id).second)
        throw ValidationError(where, "vehicle " + std::to_string(v.vehicle_id) + " appears twice");
      check_boxes({v.ego}, where + " vehicle " + std::to_string(v.vehicle_id) + " ego");
      check_boxes(v.detections, where + " vehicle " + std::to_string(v.vehicle_id) + " detections");
    }
  }
}

namespace {

class Field {
 public:
  Field(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  const json& at(const char* key) const {
    if (!j_.is_object()) throw ValidationError(where_, "expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) throw ValidationError(where_ + "." + key, "missing field");
    return *it;
  }
  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) throw ValidationError(where_ + "." + key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(where_ + "." + key, "must be finite");
    return d;
  }
  std::int64_t integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ValidationError(where_ + "." + key, "expected an integer");
    return v.get<std::int64_t>();
  }
  std::string string(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) throw ValidationError(where_ + "." + key, "expected a string");
    return v.get<std::string>();
  }
  const json& array(const char* key) const {
    const json& v = at(key);
    if (!v.is_array()) throw ValidationError(where_ + "." + key, "expected an array");
    return v;
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
};

BoundingBox box_from_json(const json& j, const std::string& where) {
  Field f(j, where);
  BoundingBox b;
  b.agent_id = f.string("id");
  try {
    b.cls = class_from_string(f.string("class"));
  } catch (const InputError& e) {
    throw ValidationError(where + ".class", e.what());
  }
  b.center = State2D::at({f.number("x"), f.number("y")});
  b.heading = f.number("heading");
  b.center.heading = b.heading;
  b.length = f.number("length");
  b.width = f.number("width");
  b.height = f.number("height");
  return b;
}

json box_to_json(const BoundingBox& b) {
  return json{{"id", b.agent_id},   {"class", std::string(to_string(b.cls))},
              {"x", b.center.x},    {"y", b.center.y},
              {"heading", b.heading}, {"length", b.length},
              {"width", b.width},   {"height", b.height}};
}

VehicleId vehicle_id_from(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 65535)
    throw ValidationError(where, "vehicle id must be an integer in [0, 65535]");
  return static_cast<VehicleId>(v.get<std::int64_t>());
}

}  // namespace

Scenario parse_scenario(std::istream& in, const std::string& source) {
  Scenario s;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where, std::string("invalid JSON: ") + e.what());
    }
    Field f(j, where);
    if (!have_header) {
      if (f.string("format") != kScenarioFormat)
        throw ValidationError(where + ".format", "expected '" + std::string(kScenarioFormat) + "'");
      if (f.integer("version") != kScenarioVersion)
        throw ValidationError(where + ".version", "unsupported version");
      s.meta.id = f.string("id");
      s.meta.dt = Duration{f.integer("dt_us")};
      s.meta.duration = Duration{f.integer("duration_us")};
      const json& vs = f.array("vehicles");
      for (std::size_t i = 0; i < vs.size(); ++i)
        s.meta.vehicles.push_back(vehicle_id_from(vs[i], where + ".vehicles[" + std::to_string(i) + "]"));
      have_header = true;
      continue;
    }
    Frame fr;
    const std::int64_t t = f.integer("t_us");
    if (t < 0) throw ValidationError(where + ".t_us", "must be non-negative");
    fr.t = Timestamp(t);
    const json& vs = f.array("vehicles");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string vw = where + ".vehicles[" + std::to_string(i) + "]";
      Field vf(vs[i], vw);
      VehicleFrame v;
      v.vehicle_id = vehicle_id_from(vf.at("id"), vw + ".id");
      v.ego = box_from_json(vf.at("ego"), vw + ".ego");
      const json& ds = vf.array("detections");
      for (std::size_t d = 0; d < ds.size(); ++d)
        v.detections.push_back(box_from_json(ds[d], vw + ".detections[" + std::to_string(d) + "]"));
      fr.vehicles.push_back(std::move(v));
    }
    const json& gt = f.array("ground_truth");
    for (std::size_t g = 0; g < gt.size(); ++g)
      fr.ground_truth.push_back(box_from_json(gt[g], where + ".ground_truth[" + std::to_string(g) + "]"));

    if (!s.frames.empty()) {
      // report ordering problems against the physical line
      if (!(s.frames.back().t < fr.t))
        throw ValidationError(where + ".t_us", "timestamps must increase (frame " +
                                                   std::to_string(s.frames.size()) + ")");
      if (fr.t - s.frames.back().t != s.meta.dt)
        throw ValidationError(where + ".t_us", "frame spacing differs from dt (frame " +
                                                   std::to_string(s.frames.size()) + ")");
    }
    s.frames.push_back(std::move(fr));
  }
  if (!have_header) throw ValidationError(source, "empty scenario file");
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open scenario file");
  return parse_scenario(in, path.string());
}

void write_scenario(std::ostream& out, const Scenario& s) {
  json header{{"format", kScenarioFormat},       {"version", kScenarioVersion},
              {"id", s.meta.id},                 {"dt_us", s.meta.dt.micros},
              {"duration_us", s.meta.duration.micros}, {"vehicles", s.meta.vehicles}};
  out << header.dump() << '\n';
  for (const auto& f : s.frames) {
    json vehicles = json::array();
    for (const auto& v : f.vehicles) {
      json dets = json::array();
      for (const auto& d : v.detections) dets.push_back(box_to_json(d));
      vehicles.push_back(json{{"id", v.vehicle_id}, {"ego", box_to_json(v.ego)}, {"detections", dets}});
    }
    json gt = json::array();
    for (const auto& b : f.ground_truth) gt.push_back(box_to_json(b));
    out << json{{"t_us", f.t.micros()}, {"vehicles", vehicles}, {"ground_truth", gt}}.dump() << '\n';
  }
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write scenario file " + path.string());
  write_scenario(out, s);
}

// ---------------------------------------------------------------------------
// synthetic generation

namespace {

struct Mover {
  AgentId id;
  AgentClass cls;
  Eigen::Vector2d p0;
  Eigen::Vector2d v;
  double heading;
  std::optional<VehicleId> vehicle;
};

double round6(double v) { return std::round(v * 1e6) / 1e6; }

Mover make_mover(AgentId id, AgentClass cls, Eigen::Vector2d p0, Eigen::Vector2d v,
                 std::optional<double> heading = std::nullopt) {
  const double h = heading ? *heading : (v.norm() > 0 ? std::atan2(v.y(), v.x()) : 0.0);
  return Mover{std::move(id), cls, p0, v, wrap_angle(h), std::nullopt};
}

Scenario assemble(const std::string& id, const std::vector<Mover>& movers, const SynthParams& p,
                  Rng& rng) {
  Scenario s;
  s.meta.id = id;
  s.meta.dt = Duration::from_seconds(p.dt_s);
  if (s.meta.dt.micros <= 0) throw InputError("synthetic dt must be positive");
  const auto n = static_cast<std::size_t>(std::llround(p.duration_s / p.dt_s));
  if (n == 0) throw InputError("synthetic duration shorter than one frame");
  s.meta.duration = s.meta.dt * static_cast<std::int64_t>(n);
  for (const auto& m : movers)
    if (m.vehicle) s.meta.vehicles.push_back(*m.vehicle);

  for (std::size_t k = 0; k < n; ++k) {
    Frame f;
    f.t = Timestamp(0) + s.meta.dt * static_cast<std::int64_t>(k);
    const double t = f.t.seconds();
    for (const auto& m : movers) {
      const Eigen::Vector2d p = m.p0 + m.v * t;
      f.ground_truth.push_back(make_box(m.id, m.cls, round6(p.x()), round6(p.y()), m.heading,
                                        default_dims(m.cls)));
    }
    for (std::size_t i = 0; i < movers.size(); ++i) {
      if (!movers[i].vehicle) continue;
      VehicleFrame v;
      v.vehicle_id = *movers[i].vehicle;
      v.ego = f.ground_truth[i];
      for (std::size_t j = 0; j < movers.size(); ++j) {
        if (j == i) continue;
        const BoundingBox& b = f.ground_truth[j];
        if (distance(b.center, v.ego.center) > p.sensor_range_m) continue;
        BoundingBox d = b;
        if (p.detection_noise_m > 0.0) {
          d.center = State2D::at({round6(b.center.x + p.detection_noise_m * rng.normal()),
                                  round6(b.center.y + p.detection_noise_m * rng.normal())});
          d.center.heading = d.heading;
        }
        v.detections.push_back(std::move(d));
      }
      f.vehicles.push_back(std::move(v));
    }
    s.frames.push_back(std::move(f));
  }
  s.validate();
  return s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Far cars on lanes parallel to x, clear of the scene core.
void add_far_cars(std::vector<Mover>& movers, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    const double lane = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(26.0, 40.0);
    const double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double speed = rng.uniform(5.0, 12.0);
    movers.push_back(make_mover("car" + std::to_string(i + 1), AgentClass::car,
                                {rng.uniform(-30.0, 40.0), lane}, {dir * speed, 0.0}));
  }
}

Scenario occlusion_crossing(const SynthParams& p, std::uint64_t seed, Rng& rng) {
  // Vehicle 1 waits behind a parked truck; a pedestrian crosses in the truck's
  // shadow. Vehicle 2 watches the crossing from the side street.
  const double tx = rng.uniform(9.0, 11.0);
  const double ty = rng.uniform(-0.3, 0.3);
  const double px = rng.uniform(19.0, 23.0);
  const double speed = rng.uniform(1.1, 1.5);
  const BoxDims truck = default_dims(AgentClass::truck);
  const double near_face = tx - 0.5 * truck.length;
  const double shadow_lo = (ty - 0.5 * truck.width) * px / near_face;

  std::vector<Mover> movers;
  movers.push_back(make_mover("veh1", AgentClass::car, {0.0, 0.0}, {0.0, 0.0}, 0.0));
  movers.back().vehicle = 1;
  movers.push_back(make_mover("veh2", AgentClass::car, {px + rng.uniform(8.0, 12.0), rng.uniform(15.0, 18.0)},
                              {0.0, 0.0}, -std::numbers::pi / 2));
  movers.back().vehicle = 2;
  movers.push_back(make_mover("truck1", AgentClass::truck, {tx, ty}, {0.0, 0.0}, 0.0));
  movers.push_back(make_mover("ped1", AgentClass::pedestrian, {px, shadow_lo - rng.uniform(0.6, 1.0)},
                              {0.0, speed}));
  add_far_cars(movers, p.extra_agents, rng);
  return assemble("occlusion_crossing-" + std::to_string(seed), movers, p, rng);
}

Scenario convoy(const SynthParams& p, std::uint64_t seed, Rng& rng) {
  const double speed = rng.uniform(8.0, 14.0);
  std::vector<Mover> movers;
  double x = 0.0;
  const int n = 4 + std::max(0, p.extra_agents);
  for (int i = 0; i < n; ++i) {
    const double lane = (i % 2) ? 3.5 : 0.0;
    const bool vehicle = i < 2;
    const std::string id = vehicle ? "veh" + std::to_string(i + 1) : "car" + std::to_string(i - 1);
    movers.push_back(make_mover(id, AgentClass::car, {x, lane}, {speed, 0.0}));
    if (vehicle) movers.back().vehicle = static_cast<VehicleId>(i + 1);
    x += rng.uniform(10.0, 16.0);
  }
  return assemble("convoy-" + std::to_string(seed), movers, p, rng);
}

Scenario random_traffic(const SynthParams& p, std::uint64_t seed, Rng& rng) {
  std::vector<Mover> movers;
  auto random_mover = [&](const std::string& id, AgentClass cls) {
    const double speed = is_vehicle(cls) ? rng.uniform(3.0, 12.0)
                         : cls == AgentClass::pedestrian ? rng.uniform(0.8, 1.6)
                                                         : rng.uniform(3.0, 6.0);
    const double dir = rng.uniform(-std::numbers::pi, std::numbers::pi);
    return make_mover(id, cls, {rng.uniform(-40.0, 40.0), rng.uniform(-40.0, 40.0)},
                      {speed * std::cos(dir), speed * std::sin(dir)});
  };
  for (VehicleId v = 1; v <= 2; ++v) {
    movers.push_back(random_mover("veh" + std::to_string(v), AgentClass::car));
    movers.back().vehicle = v;
  }
  const int n = 4 + std::max(0, p.extra_agents);
  for (int i = 0; i < n; ++i) {
    const AgentClass cls = kAllClasses[rng.below(kAllClasses.size())];
    movers.push_back(random_mover("agent" + std::to_string(i + 1), cls));
  }
  return assemble("random_traffic-" + std::to_string(seed), movers, p, rng);
}

}  // namespace

double occlusion_window_s(const Scenario& s, const AgentId& agent, VehicleId hidden_for,
                          VehicleId clear_for, double hidden, double clear, int n_rays) {
  auto score = [&](const Frame& f, VehicleId v) -> std::optional<double> {
    const VehicleFrame* vf = f.vehicle(v);
    if (!vf) return std::nullopt;
    const auto scores = occlusion_scores(vf->ego.center, vf->detections, n_rays);
    auto it = scores.find(agent);
    if (it == scores.end()) return std::nullopt;
    return it->second;
  };
  double best = 0.0;
  bool open = false;
  Timestamp start;
  for (const auto& f : s.frames) {
    const auto a = score(f, hidden_for);
    const auto b = score(f, clear_for);
    if (a && b && *a > hidden && *b < clear) {
      if (!open) start = f.t;
      open = true;
      best = std::max(best, (f.t - start).seconds());
    } else {
      open = false;
    }
  }
  return best;
}

Scenario generate_synthetic(const std::string& preset, const SynthParams& params,
                            std::uint64_t seed) {
  if (preset == "convoy") {
    Rng rng(mix_seed(seed, 0));
    return convoy(params, seed, rng);
  }
  if (preset == "random_traffic") {
    Rng rng(mix_seed(seed, 0));
    return random_traffic(params, seed, rng);
  }
  if (preset == "occlusion_crossing") {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
      Rng rng(mix_seed(seed, attempt));
      Scenario s = occlusion_crossing(params, seed, rng);
      if (occlusion_window_s(s, "ped1", 1, 2) >= 1.0) return s;
    }
    throw Error("occlusion_crossing: no layout met the occlusion guarantee");
  }
  throw UsageError("unknown preset '" + preset + "' (expected occlusion_crossing, convoy or random_traffic)");
}

}  // namespace latefuse
