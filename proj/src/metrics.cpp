#include "roadalarm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace roadalarm {

using nlohmann::json;

std::uint64_t Metrics::outcome_count(const std::string& group, const std::string& reason) const {
  auto g = outcomes.find(group);
  if (g == outcomes.end()) return 0;
  auto r = g->second.find(reason);
  return r == g->second.end() ? 0 : r->second;
}

void Metrics::log(double t, std::string kind, std::string agent, std::string detail) {
  events.push_back(Event{t, std::move(kind), std::move(agent), std::move(detail)});
}

double Metrics::mean_delay() const {
  if (vehicles.empty()) return 0;
  double sum = 0;
  for (const auto& v : vehicles) sum += v.delay;
  return sum / static_cast<double>(vehicles.size());
}

double Metrics::p95_delay() const {
  if (vehicles.empty()) return 0;
  std::vector<double> d;
  for (const auto& v : vehicles) d.push_back(v.delay);
  std::sort(d.begin(), d.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size()))) - 1;
  return d[std::min(idx, d.size() - 1)];
}

std::uint64_t Metrics::true_alerts() const {
  return static_cast<std::uint64_t>(std::count_if(alerts.begin(), alerts.end(), [](const auto& a) { return a.truthful; }));
}

std::uint64_t Metrics::false_alerts() const { return alerts.size() - true_alerts(); }

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string Metrics::summary_json() const {
  json j;
  j["schema"] = "roadalarm-summary/1";
  j["scenario"] = scenario;
  j["controller"] = controller;
  j["variant"] = variant;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["horizon"] = horizon;

  std::size_t finished = 0;
  for (const auto& v : vehicles) finished += v.finished ? 1 : 0;
  j["vehicles"] = {{"total", vehicles.size()}, {"finished", finished}};
  j["delay"] = {{"mean", mean_delay()}, {"p95", p95_delay()}};
  j["latency"] = {{"incident_to_alert", optional_number(incident_to_alert)},
                  {"alert_to_command", optional_number(alert_to_command)}};
  j["alerts"] = {{"total", alerts.size()}, {"true", true_alerts()}, {"false", false_alerts()}};
  j["counters"] = counters;
  j["outcomes"] = outcomes;
  j["safety"] = {{"mmu_violations", mmu_violations},
                 {"cycle_violations", cycle_violations},
                 {"delta_violations", delta_violations},
                 {"min_cycle", min_cycle},
                 {"max_cycle", max_cycle}};
  j["pseudonyms"] = {{"keys", pseudonym_keys}, {"violations", pseudonym_violations}};

  json alert_list = json::array();
  for (const auto& a : alerts)
    alert_list.push_back({{"time", a.time},
                          {"mrsu", a.mrsu},
                          {"rid", a.rid},
                          {"lane", a.lane},
                          {"center", a.center},
                          {"count", a.count},
                          {"emergency", a.emergency},
                          {"truthful", a.truthful}});
  j["alert_log"] = alert_list;

  json cmd_list = json::array();
  for (const auto& c : commands)
    cmd_list.push_back({{"lbs", c.lbs},
                        {"kind", c.kind},
                        {"cause", c.cause},
                        {"issued", c.issued},
                        {"next_boundary", c.next_boundary},
                        {"effective", c.effective},
                        {"stage_delta", c.stage_delta},
                        {"cycle_after", c.cycle_after}});
  j["command_log"] = cmd_list;

  json queue = json::array();
  for (const auto& [t, n] : queue_series) queue.push_back({t, n});
  j["queue_series"] = queue;
  j["max_queue"] = max_queue;
  return j.dump(2) + "\n";
}

std::string Metrics::events_csv() const {
  std::ostringstream out;
  out << "time,kind,agent,detail\n";
  out.precision(17);
  for (const auto& e : events) {
    std::string detail = e.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    out << e.time << ',' << e.kind << ',' << e.agent << ',' << detail << '\n';
  }
  return out.str();
}

}  // namespace roadalarm
