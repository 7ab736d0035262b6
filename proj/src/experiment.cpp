#include "roadalarm/experiment.hpp"

#include <sodium.h>

#include <future>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "roadalarm/identity.hpp"

namespace roadalarm {

using nlohmann::json;

std::string config_hash(const std::string& scenario_text, std::uint64_t seed, const std::string& controller,
                        const std::string& variant, double horizon) {
  std::ostringstream settings;
  settings.precision(17);
  settings << "\nseed=" << seed << "\ncontroller=" << controller << "\nvariant=" << variant << "\nhorizon=" << horizon;
  const std::string all = scenario_text + settings.str();
  std::array<std::uint8_t, crypto_hash_sha256_BYTES> digest{};
  crypto_hash_sha256(digest.data(), reinterpret_cast<const unsigned char*>(all.data()), all.size());
  return to_hex(digest);
}

Metrics run_scenario(const Scenario& scenario, const RunOptions& options) {
  World world(scenario, options);
  world.run();
  Metrics m = world.finish();
  m.config_hash = config_hash(scenario.text, m.seed, m.controller, m.variant, m.horizon);
  return m;
}

ComparisonReport compare(const Scenario& scenario, const std::vector<ControllerKind>& controllers,
                         const RunOptions& base, bool parallel) {
  if (controllers.size() < 2) throw std::invalid_argument("compare needs at least two controllers");
  ComparisonReport report;
  report.seed = base.seed.value_or(scenario.seed);
  auto options_for = [&](ControllerKind k) {
    RunOptions o = base;
    o.seed = report.seed;
    o.controller = k;
    return o;
  };
  if (parallel) {
    std::vector<std::future<Metrics>> jobs;
    for (auto k : controllers)
      jobs.push_back(std::async(std::launch::async, [&scenario, o = options_for(k)] { return run_scenario(scenario, o); }));
    for (auto& j : jobs) report.runs.push_back(j.get());
  } else {
    for (auto k : controllers) report.runs.push_back(run_scenario(scenario, options_for(k)));
  }
  return report;
}

namespace {

json figures(const Metrics& m) {
  std::uint64_t peak = 0;
  for (const auto& [t, n] : m.queue_series) peak = std::max(peak, n);
  std::size_t finished = 0;
  for (const auto& v : m.vehicles) finished += v.finished ? 1 : 0;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"controller", m.controller},
          {"config_hash", m.config_hash},
          {"mean_delay", m.mean_delay()},
          {"p95_delay", m.p95_delay()},
          {"finished", finished},
          {"peak_halted", peak},
          {"alerts", m.alerts.size()},
          {"commands", m.commands.size()},
          {"incident_to_alert", opt(m.incident_to_alert)},
          {"alert_to_command", opt(m.alert_to_command)}};
}

}  // namespace

std::string ComparisonReport::json() const {
  nlohmann::json j;
  j["schema"] = "roadalarm-comparison/1";
  j["seed"] = seed;
  bool paired = true;
  for (const auto& r : runs) paired = paired && r.seed == seed;
  j["paired"] = paired;
  j["scenario"] = runs.empty() ? "" : runs.front().scenario;
  auto cols = nlohmann::json::array();
  auto deltas = nlohmann::json::array();
  for (const auto& r : runs) {
    cols.push_back(figures(r));
    const auto& b = runs.front();
    deltas.push_back({{"controller", r.controller},
                      {"mean_delay", r.mean_delay() - b.mean_delay()},
                      {"p95_delay", r.p95_delay() - b.p95_delay()},
                      {"alerts", static_cast<double>(r.alerts.size()) - static_cast<double>(b.alerts.size())}});
  }
  j["runs"] = cols;
  j["deltas_vs_first"] = deltas;
  return j.dump(2) + "\n";
}

bool report_matches(const std::string& summary_json, const Scenario& scenario) {
  const auto j = nlohmann::json::parse(summary_json, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("config_hash")) return false;
  try {
    const auto expect = config_hash(scenario.text, j.at("seed").get<std::uint64_t>(),
                                    j.at("controller").get<std::string>(), j.at("variant").get<std::string>(),
                                    j.at("horizon").get<double>());
    return expect == j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return false;
  }
}

}  // namespace roadalarm
