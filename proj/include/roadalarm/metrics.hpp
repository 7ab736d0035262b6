#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace roadalarm {

struct AlertRecord {
  double time = 0;
  std::string mrsu;
  std::string rid;
  int lane = 0;
  double center = 0;
  std::uint32_t count = 0;
  bool emergency = false;
  bool truthful = false;  // ground truth agrees with the alert
};

struct CommandRecord {
  std::string lbs;
  std::string kind;
  std::string cause;
  double issued = 0;
  double next_boundary = 0;  // first phase boundary after issue
  double effective = -1;
  std::vector<double> stage_delta;
  double cycle_after = 0;
};

struct VehicleOutcome {
  std::string id;
  double spawn = 0;
  double freeflow = 0;
  double delay = 0;
  bool finished = false;
};

/// Everything a run reports. Maps keep key order stable for byte-identical output.
struct Metrics {
  std::string scenario;
  std::string controller;
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_hash;
  double horizon = 0;

  std::map<std::string, std::uint64_t> counters;
  std::map<std::string, std::map<std::string, std::uint64_t>> outcomes;
  std::vector<AlertRecord> alerts;
  std::vector<CommandRecord> commands;
  std::vector<VehicleOutcome> vehicles;
  std::vector<std::pair<double, std::uint64_t>> queue_series;  // halted vehicles
  std::map<std::string, std::uint64_t> max_queue;              // per lane

  std::optional<double> incident_to_alert;
  std::optional<double> alert_to_command;
  std::uint64_t mmu_violations = 0;
  std::uint64_t cycle_violations = 0;
  std::uint64_t delta_violations = 0;
  double min_cycle = 0;
  double max_cycle = 0;
  std::uint64_t pseudonym_keys = 0;
  std::uint64_t pseudonym_violations = 0;

  struct Event {
    double time;
    std::string kind;
    std::string agent;
    std::string detail;
  };
  std::vector<Event> events;

  void count(const std::string& key, std::uint64_t n = 1) { counters[key] += n; }
  void outcome(const std::string& group, const std::string& reason) { ++outcomes[group][reason]; }
  std::uint64_t outcome_count(const std::string& group, const std::string& reason) const;
  void log(double t, std::string kind, std::string agent, std::string detail);

  double mean_delay() const;
  double p95_delay() const;
  std::uint64_t true_alerts() const;
  std::uint64_t false_alerts() const;

  std::string summary_json() const;
  std::string events_csv() const;
};

}  // namespace roadalarm
