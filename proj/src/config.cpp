#include "latefuse/config.hpp"

#include <cmath>
#include <fstream>

namespace latefuse {

using nlohmann::json;

namespace {

Duration period_of(double hz, const char* what) {
  if (!(hz > 0.0) || !std::isfinite(hz)) throw ValidationError(what, "rate must be positive");
  const double us = 1e6 / hz;
  if (std::abs(us - std::round(us)) > 1e-6) throw ValidationError(what, "period is not a whole microsecond");
  return Duration{std::llround(us)};
}

}  // namespace

Duration VehicleConfig::frame_period() const { return period_of(fps, "fps"); }
Duration VehicleConfig::broadcast_period() const { return period_of(broadcast_hz, "broadcast_hz"); }

void VehicleConfig::validate(Duration scenario_dt) const {
  const std::string where = "vehicle " + std::to_string(vehicle_id);
  const Duration fp = frame_period();
  const Duration bp = broadcast_period();
  if (broadcast_hz > 10.0) throw ValidationError(where + ".broadcast_hz", "must not exceed 10 Hz");
  if (fp.micros % scenario_dt.micros != 0)
    throw ValidationError(where + ".fps", "frame period must be a multiple of the scenario step");
  if (bp.micros % fp.micros != 0)
    throw ValidationError(where + ".broadcast_hz", "broadcast period must be a multiple of the frame period");
  try {
    occlusion.validate();
    predictor.validate();
    fusion.gate.validate();
    collab.validate();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(where, e.what());
  }
  if (predictor.step.micros % fp.micros != 0)
    throw ValidationError(where + ".predictor.step_s", "prediction step must be a multiple of the frame period");
  if (tracker.lifetime < 0 || tracker.confirm_hits < 1 || !(tracker.measurement_var > 0.0) ||
      !(tracker.process_noise > 0.0) || tracker.history_capacity < 2)
    throw ValidationError(where + ".tracker", "invalid tracker parameters");
}

std::string RunSettings::tag() const {
  auto s = [](bool b) { return b ? "on" : "off"; };
  return std::string("fusion=") + s(fusion) + ",delay=" + s(delay) + ",drop=" + s(drop);
}

VehicleConfig RunConfig::for_vehicle(VehicleId id) const {
  auto it = vehicles.find(id);
  VehicleConfig v = it == vehicles.end() ? defaults : it->second;
  v.vehicle_id = id;
  return v;
}

namespace {

json vehicle_to_json(const VehicleConfig& v) {
  const auto& t = v.tracker;
  const auto& p = v.predictor;
  const auto& f = v.fusion;
  return json{
      {"fps", v.fps},
      {"broadcast_hz", v.broadcast_hz},
      {"mode", v.mode == PerceptionMode::controlled ? "controlled" : "real"},
      {"broadcast", v.broadcast},
      {"aggregate", v.aggregate},
      {"occlusion",
       {{"enabled", v.occlusion_enabled},
        {"n_rays", v.occlusion.n_rays},
        {"discard_threshold", v.occlusion.discard_threshold}}},
      {"tracker",
       {{"process_noise", t.process_noise},
        {"measurement_var", t.measurement_var},
        {"lifetime", t.lifetime},
        {"confirm_hits", t.confirm_hits},
        {"box_ema", t.box_ema},
        {"history_capacity", t.history_capacity},
        {"init_vel_var", t.init_vel_var},
        {"init_acc_var", t.init_acc_var},
        {"bootstrap_velocity", t.bootstrap_velocity},
        {"gates",
         {{"euclid_confirmed_m", t.gates.euclid_confirmed_m},
          {"euclid_tentative_m", t.gates.euclid_tentative_m},
          {"vehicle_scale", t.gates.vehicle_scale},
          {"nis_max", t.gates.nis_max}}}}},
      {"predictor",
       {{"history_window_s", p.history_window.seconds()},
        {"horizon_s", p.horizon.seconds()},
        {"step_s", p.step.seconds()},
        {"sigma0_sq", p.sigma0_sq},
        {"sigma_v_sq", p.sigma_v_sq},
        {"single_sample_inflation", p.single_sample_inflation},
        {"fit_acceleration", p.fit_acceleration}}},
      {"fusion",
       {{"min_streak", f.gate.min_streak},
        {"cov_ratio", f.gate.cov_ratio},
        {"min_output_var", f.min_output_var},
        {"starts", f.fit.starts},
        {"evals_per_start", f.fit.evals_per_start},
        {"screen_points", f.fit.screen_points},
        {"bounds",
         {{"signal_var_min", f.fit.bounds.signal_var_min},
          {"signal_var_max", f.fit.bounds.signal_var_max},
          {"lengthscale_min", f.fit.bounds.lengthscale_min},
          {"lengthscale_max", f.fit.bounds.lengthscale_max}}}}},
      {"collab",
       {{"promote_gate_m", v.collab.promote_gate_m},
        {"relevance_radius_m", v.collab.relevance_radius_m},
        {"relevance_threshold", v.collab.relevance_threshold},
        {"stale_S_steps", v.collab.stale_S_steps}}},
  };
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key, "missing or wrong type");
  }
}

// Rejects keys in `patch` that the reference document does not have.
void check_known(const json& patch, const json& reference, const std::string& where) {
  if (!patch.is_object()) throw ValidationError(where, "expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    auto ref = reference.find(it.key());
    if (ref == reference.end()) throw ValidationError(where + "." + it.key(), "unknown field");
    if (ref->is_object()) check_known(it.value(), *ref, where + "." + it.key());
  }
}

VehicleConfig vehicle_from_json(const json& j, const std::string& w) {
  VehicleConfig v;
  v.fps = get<double>(j, "fps", w);
  v.broadcast_hz = get<double>(j, "broadcast_hz", w);
  const auto mode = get<std::string>(j, "mode", w);
  if (mode == "controlled")
    v.mode = PerceptionMode::controlled;
  else if (mode == "real")
    v.mode = PerceptionMode::real;
  else
    throw ValidationError(w + ".mode", "expected 'controlled' or 'real'");
  v.broadcast = get<bool>(j, "broadcast", w);
  v.aggregate = get<bool>(j, "aggregate", w);

  const json& o = j.at("occlusion");
  v.occlusion_enabled = get<bool>(o, "enabled", w + ".occlusion");
  v.occlusion.n_rays = get<int>(o, "n_rays", w + ".occlusion");
  v.occlusion.discard_threshold = get<double>(o, "discard_threshold", w + ".occlusion");

  const json& t = j.at("tracker");
  const std::string tw = w + ".tracker";
  auto& tc = v.tracker;
  tc.mode = v.mode == PerceptionMode::controlled ? AssociationMode::gt_id : AssociationMode::hungarian_nis;
  tc.process_noise = get<double>(t, "process_noise", tw);
  tc.measurement_var = get<double>(t, "measurement_var", tw);
  tc.lifetime = get<int>(t, "lifetime", tw);
  tc.confirm_hits = get<int>(t, "confirm_hits", tw);
  tc.box_ema = get<double>(t, "box_ema", tw);
  tc.history_capacity = get<std::size_t>(t, "history_capacity", tw);
  tc.init_vel_var = get<double>(t, "init_vel_var", tw);
  tc.init_acc_var = get<double>(t, "init_acc_var", tw);
  tc.bootstrap_velocity = get<bool>(t, "bootstrap_velocity", tw);
  const json& g = t.at("gates");
  tc.gates.euclid_confirmed_m = get<double>(g, "euclid_confirmed_m", tw + ".gates");
  tc.gates.euclid_tentative_m = get<double>(g, "euclid_tentative_m", tw + ".gates");
  tc.gates.vehicle_scale = get<double>(g, "vehicle_scale", tw + ".gates");
  tc.gates.nis_max = get<double>(g, "nis_max", tw + ".gates");

  const json& p = j.at("predictor");
  const std::string pw = w + ".predictor";
  v.predictor.history_window = Duration::from_seconds(get<double>(p, "history_window_s", pw));
  v.predictor.horizon = Duration::from_seconds(get<double>(p, "horizon_s", pw));
  v.predictor.step = Duration::from_seconds(get<double>(p, "step_s", pw));
  v.predictor.sigma0_sq = get<double>(p, "sigma0_sq", pw);
  v.predictor.sigma_v_sq = get<double>(p, "sigma_v_sq", pw);
  v.predictor.single_sample_inflation = get<double>(p, "single_sample_inflation", pw);
  v.predictor.fit_acceleration = get<bool>(p, "fit_acceleration", pw);

  const json& f = j.at("fusion");
  const std::string fw = w + ".fusion";
  v.fusion.gate.min_streak = get<int>(f, "min_streak", fw);
  v.fusion.gate.cov_ratio = get<double>(f, "cov_ratio", fw);
  v.fusion.min_output_var = get<double>(f, "min_output_var", fw);
  v.fusion.fit.starts = get<int>(f, "starts", fw);
  v.fusion.fit.evals_per_start = get<int>(f, "evals_per_start", fw);
  v.fusion.fit.screen_points = get<int>(f, "screen_points", fw);
  const json& b = f.at("bounds");
  v.fusion.fit.bounds.signal_var_min = get<double>(b, "signal_var_min", fw + ".bounds");
  v.fusion.fit.bounds.signal_var_max = get<double>(b, "signal_var_max", fw + ".bounds");
  v.fusion.fit.bounds.lengthscale_min = get<double>(b, "lengthscale_min", fw + ".bounds");
  v.fusion.fit.bounds.lengthscale_max = get<double>(b, "lengthscale_max", fw + ".bounds");
  if (v.fusion.fit.starts < 1 || v.fusion.fit.evals_per_start < 1 || v.fusion.fit.screen_points < 2)
    throw ValidationError(fw, "optimizer budget must be positive");

  const json& c = j.at("collab");
  const std::string cw = w + ".collab";
  v.collab.promote_gate_m = get<double>(c, "promote_gate_m", cw);
  v.collab.relevance_radius_m = get<double>(c, "relevance_radius_m", cw);
  v.collab.relevance_threshold = get<double>(c, "relevance_threshold", cw);
  v.collab.stale_S_steps = get<int>(c, "stale_S_steps", cw);
  return v;
}

json channel_to_json(const ChannelParams& c) {
  return json{{"k_ms_per_byte", c.k_ms_per_byte},   {"mu", c.mu},
              {"sigma", c.sigma},                   {"tier_low_bytes", c.tier_low_bytes},
              {"tier_high_bytes", c.tier_high_bytes}, {"p_mid", c.p_mid},
              {"p_high", c.p_high}};
}

json metrics_to_json(const MetricsConfig& m) {
  return json{{"iou_threshold", m.iou_threshold},
              {"tsr_threshold", m.tsr_threshold},
              {"eval_radius_m", m.eval_radius_m},
              {"horizon_s", m.horizon_s},
              {"step_s", m.step_s}};
}

json run_to_json(const RunSettings& r) {
  return json{{"fusion", r.fusion}, {"delay", r.delay}, {"drop", r.drop}, {"seed", r.seed}};
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json vehicles = json::object();
  for (const auto& [id, v] : cfg.vehicles) vehicles[std::to_string(id)] = vehicle_to_json(v);
  return json{{"version", kConfigVersion},
              {"defaults", vehicle_to_json(cfg.defaults)},
              {"vehicles", vehicles},
              {"channel", channel_to_json(cfg.channel)},
              {"metrics", metrics_to_json(cfg.metrics)},
              {"run", run_to_json(cfg.run)}};
}

RunConfig parse_config(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ValidationError(source, "config must be a JSON object");
  const RunConfig base;
  const json reference = to_json(base);
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!reference.contains(it.key()) && it.key() != "$schema")
      throw ValidationError(source + "." + it.key(), "unknown field");
  if (doc.contains("version") && doc.at("version") != kConfigVersion)
    throw ValidationError(source + ".version", "unsupported config version");

  RunConfig cfg;
  json defaults = reference.at("defaults");
  if (doc.contains("defaults")) {
    check_known(doc.at("defaults"), defaults, source + ".defaults");
    defaults.merge_patch(doc.at("defaults"));
  }
  cfg.defaults = vehicle_from_json(defaults, source + ".defaults");

  if (doc.contains("vehicles")) {
    const json& vs = doc.at("vehicles");
    if (!vs.is_object()) throw ValidationError(source + ".vehicles", "expected an object keyed by vehicle id");
    for (auto it = vs.begin(); it != vs.end(); ++it) {
      const std::string w = source + ".vehicles." + it.key();
      long id = -1;
      try {
        std::size_t used = 0;
        id = std::stol(it.key(), &used);
        if (used != it.key().size()) id = -1;
      } catch (const std::exception&) {
      }
      if (id < 0 || id > 65535) throw ValidationError(w, "vehicle key must be an integer id");
      check_known(it.value(), defaults, w);
      json merged = defaults;
      merged.merge_patch(it.value());
      VehicleConfig v = vehicle_from_json(merged, w);
      v.vehicle_id = static_cast<VehicleId>(id);
      cfg.vehicles[v.vehicle_id] = v;
    }
  }

  auto section = [&](const char* key) {
    json out = reference.at(key);
    if (doc.contains(key)) {
      check_known(doc.at(key), out, source + "." + key);
      out.merge_patch(doc.at(key));
    }
    return out;
  };
  const json ch = section("channel");
  const std::string cw = source + ".channel";
  cfg.channel.k_ms_per_byte = get<double>(ch, "k_ms_per_byte", cw);
  cfg.channel.mu = get<double>(ch, "mu", cw);
  cfg.channel.sigma = get<double>(ch, "sigma", cw);
  cfg.channel.tier_low_bytes = get<std::size_t>(ch, "tier_low_bytes", cw);
  cfg.channel.tier_high_bytes = get<std::size_t>(ch, "tier_high_bytes", cw);
  cfg.channel.p_mid = get<double>(ch, "p_mid", cw);
  cfg.channel.p_high = get<double>(ch, "p_high", cw);
  try {
    cfg.channel.validate();
  } catch (const InputError& e) {
    throw ValidationError(cw, e.what());
  }

  const json m = section("metrics");
  const std::string mw = source + ".metrics";
  cfg.metrics.iou_threshold = get<double>(m, "iou_threshold", mw);
  cfg.metrics.tsr_threshold = get<double>(m, "tsr_threshold", mw);
  cfg.metrics.eval_radius_m = get<double>(m, "eval_radius_m", mw);
  cfg.metrics.horizon_s = get<double>(m, "horizon_s", mw);
  cfg.metrics.step_s = get<double>(m, "step_s", mw);
  if (!(cfg.metrics.iou_threshold > 0.0 && cfg.metrics.iou_threshold <= 1.0) ||
      !(cfg.metrics.tsr_threshold > 0.0) || !(cfg.metrics.eval_radius_m > 0.0) ||
      !(cfg.metrics.step_s > 0.0) || !(cfg.metrics.horizon_s >= cfg.metrics.step_s))
    throw ValidationError(mw, "thresholds out of range");

  const json r = section("run");
  const std::string rw = source + ".run";
  cfg.run.fusion = get<bool>(r, "fusion", rw);
  cfg.run.delay = get<bool>(r, "delay", rw);
  cfg.run.drop = get<bool>(r, "drop", rw);
  cfg.run.seed = get<std::uint64_t>(r, "seed", rw);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, path.string());
}

}  // namespace latefuse
