#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "latefuse/channel.hpp"
#include "latefuse/config.hpp"
#include "latefuse/metrics.hpp"
#include "latefuse/runlog.hpp"
#include "latefuse/scenario.hpp"
#include "latefuse/sim.hpp"

namespace fs = std::filesystem;
using namespace latefuse;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("latefuse");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("LATEFUSE_LOG")) {
    const std::string v = env;
    if (v == "error")
      level = spdlog::level::err;
    else if (v == "warn")
      level = spdlog::level::warn;
    else if (v == "info")
      level = spdlog::level::info;
    else if (v == "debug")
      level = spdlog::level::debug;
    else if (v == "trace")
      level = spdlog::level::trace;
    else
      std::cerr << "ignoring LATEFUSE_LOG=" << v << " (expected error, warn, info, debug or trace)\n";
  }
  spdlog::set_level(level);
}

bool on_off(const std::string& v) { return v == "on"; }

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

struct RunArgs {
  std::string scenario, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> fusion, delay, drop;
};

int cmd_run(const RunArgs& a) {
  const Scenario scenario = load_scenario(a.scenario);
  const RunConfig cfg = config_or_default(a.config);
  RunSettings settings = cfg.run;
  if (a.seed) settings.seed = *a.seed;
  if (a.fusion) settings.fusion = on_off(*a.fusion);
  if (a.delay) settings.delay = on_off(*a.delay);
  if (a.drop) settings.drop = on_off(*a.drop);

  fs::create_directories(a.out);
  std::ofstream timings(fs::path(a.out) / "timings.jsonl");
  const RunLog log = run(scenario, cfg, settings, [&](const StepTiming& t) {
    timings << nlohmann::json{{"t_us", t.t.micros()},
                              {"vehicle", t.vehicle},
                              {"perception_ms", t.perception_ms},
                              {"prediction_ms", t.prediction_ms},
                              {"comms_ms", t.comms_ms},
                              {"fusion_ms", t.fusion_ms}}
                   .dump()
            << '\n';
  });
  const fs::path out = fs::path(a.out) / "run.jsonl";
  save_runlog(log, out);

  std::size_t sent = 0, inserted = 0;
  for (const auto& st : log.steps) {
    sent += st.sent ? 1 : 0;
    inserted += st.pool_insertions;
  }
  std::cout << "run " << scenario.meta.id << " [" << settings.tag() << ",seed=" << settings.seed << "]: "
            << log.steps.size() << " vehicle steps, " << sent << " messages, " << inserted
            << " pool insertions -> " << out.string() << '\n';
  return 0;
}

struct SynthArgs {
  std::string preset, out;
  std::uint64_t seed = 0;
  SynthParams params;
};

int cmd_synth(const SynthArgs& a) {
  const Scenario s = generate_synthetic(a.preset, a.params, a.seed);
  save_scenario(s, a.out);
  std::cout << "wrote " << s.meta.id << " (" << s.frames.size() << " frames, " << s.meta.vehicles.size()
            << " vehicles) to " << a.out << '\n';
  return 0;
}

struct MetricsArgs {
  std::string run, scenario, config, out, json;
};

int cmd_metrics(const MetricsArgs& a) {
  const Scenario scenario = load_scenario(a.scenario);
  const RunLog log = load_runlog(a.run);
  const RunConfig cfg = config_or_default(a.config);
  const auto reports = evaluate_run(scenario, log, cfg.metrics);
  if (a.out.empty()) {
    write_report_csv(std::cout, reports);
  } else {
    std::ofstream out(a.out);
    if (!out) throw InputError("cannot write " + a.out);
    write_report_csv(out, reports);
  }
  if (!a.json.empty()) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : reports) doc.push_back(to_json(r));
    std::ofstream out(a.json);
    if (!out) throw InputError("cannot write " + a.json);
    out << doc.dump(2) << '\n';
  }
  return 0;
}

struct ChannelArgs {
  std::vector<std::size_t> sizes;
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  std::string config;
};

int cmd_channel_stats(const ChannelArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  Rng rng(a.seed);
  std::cout << "size_bytes,p_drop,p_drop_empirical,delay_p50_ms,delay_p50_ms_empirical,delay_p95_ms,"
               "delay_p95_ms_empirical\n";
  std::cout << std::fixed << std::setprecision(4);
  for (std::size_t size : a.sizes) {
    if (size == 0) throw ValidationError("--sizes", "packet sizes must be positive");
    const ChannelStats st = channel_stats(size, a.n, cfg.channel, rng);
    std::cout << size << ',' << p_drop(size, cfg.channel) << ',' << st.drop_rate << ','
              << delay_quantile_ms(size, 0.5, cfg.channel) << ',' << st.delay_p50_ms << ','
              << delay_quantile_ms(size, 0.95, cfg.channel) << ',' << st.delay_p95_ms << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Late-fusion collaborative trajectory prediction simulator"};
  app.require_subcommand(1);
  const std::vector<std::string> switch_values{"on", "off"};

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Replay a scenario and write a run log");
  run_cmd->add_option("--scenario", run_args.scenario, "Scenario file (JSONL)")->required();
  run_cmd->add_option("--config", run_args.config, "Config file (JSON)");
  run_cmd->add_option("--out", run_args.out, "Output directory")->required();
  run_cmd->add_option("--seed", run_args.seed, "Channel seed");
  run_cmd->add_option("--fusion", run_args.fusion)->check(CLI::IsMember(switch_values));
  run_cmd->add_option("--delay", run_args.delay)->check(CLI::IsMember(switch_values));
  run_cmd->add_option("--drop", run_args.drop)->check(CLI::IsMember(switch_values));

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scenario");
  synth_cmd->add_option("--preset", synth_args.preset, "occlusion_crossing, convoy or random_traffic")->required();
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--out", synth_args.out, "Scenario file to write")->required();
  synth_cmd->add_option("--duration", synth_args.params.duration_s, "Seconds");
  synth_cmd->add_option("--dt", synth_args.params.dt_s, "Frame step in seconds");
  synth_cmd->add_option("--extra-agents", synth_args.params.extra_agents);
  synth_cmd->add_option("--sensor-range", synth_args.params.sensor_range_m);
  synth_cmd->add_option("--detection-noise", synth_args.params.detection_noise_m, "Per-axis sd in metres");

  MetricsArgs metrics_args;
  auto* metrics_cmd = app.add_subcommand("metrics", "Score a run log against its scenario");
  metrics_cmd->add_option("--run", metrics_args.run, "Run log (JSONL)")->required();
  metrics_cmd->add_option("--scenario", metrics_args.scenario, "Scenario file (JSONL)")->required();
  metrics_cmd->add_option("--config", metrics_args.config, "Config file (JSON)");
  metrics_cmd->add_option("--out", metrics_args.out, "CSV report path (default: stdout)");
  metrics_cmd->add_option("--json", metrics_args.json, "Also write a JSON report");

  ChannelArgs channel_args;
  auto* channel_cmd = app.add_subcommand("channel-stats", "Monte-Carlo delay and drop statistics");
  channel_cmd->add_option("--sizes", channel_args.sizes, "Packet sizes in bytes")->delimiter(',')->required();
  channel_cmd->add_option("--n", channel_args.n, "Samples per size")->check(CLI::PositiveNumber);
  channel_cmd->add_option("--seed", channel_args.seed);
  channel_cmd->add_option("--config", channel_args.config, "Config file (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*synth_cmd) return cmd_synth(synth_args);
    if (*metrics_cmd) return cmd_metrics(metrics_args);
    if (*channel_cmd) return cmd_channel_stats(channel_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
