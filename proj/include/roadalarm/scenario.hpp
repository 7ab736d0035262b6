#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "roadalarm/codec.hpp"
#include "roadalarm/control.hpp"
#include "roadalarm/detection.hpp"
#include "roadalarm/geometry.hpp"
#include "roadalarm/kinematics.hpp"
#include "roadalarm/protocol.hpp"

namespace roadalarm {

inline constexpr const char* kScenarioSchema = "roadalarm-scenario/1";

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Carries "<file>:<line>: <field>: <message>".
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FlowSpec {
  std::string name;
  std::vector<std::string> path;  // intersection ids, consecutive ones share a segment
  double start = 0;
  double end = 0;
  double headway = 2.0;
  double jitter = 0;  // uniform +/- seconds, drawn from the scenario seed
  double speed = 0;   // desired speed, 0 means the lane limit
  VehicleType vtype = VehicleType::Normal;
};

struct IncidentSpec {
  std::string rid;
  int lid = 0;
  double location = 0;  // meters along the lane
  double start = 0;
  std::optional<double> duration;  // unbounded when absent
  bool blocks_lane = true;
};

enum class AdversaryKind { Replay, Forge, DosFlood, Jam, Botnet };
const char* to_string(AdversaryKind k);

struct AdversaryConfig {
  AdversaryKind kind = AdversaryKind::Replay;
  std::string segment;
  double start = 0;
  double duration = 0;
  std::size_t count = 0;        // replay, forge
  double fast_fraction = 0.5;   // replay
  double fast_delay = 0.1;      // replay
  double stale_delay = 0;       // replay, 0 means freshness window + 1 s
  double rate = 0;              // dos, forge (messages per second)
  Box2 region;                  // jam
  std::size_t members = 0;      // botnet
  int lane = 0;                 // botnet
  double center = 0;            // botnet
};

struct Scenario {
  std::string name;
  std::string source;  // file name for messages
  std::string text;    // raw bytes, hashed into reports
  std::uint64_t seed = 1;
  double horizon = 600;
  Variant variant = Variant::S1;
  ControllerKind controller = ControllerKind::AlertEnabled;
  std::map<std::string, ControllerKind> controller_overrides;
  bool detection_enabled = true;

  ProtocolTiming timing;
  DetectionParams detection;
  ControlParams control;
  KinematicsParams kinematics;
  double tick = 0.5;
  double rsu_range = 7.0;
  double verification_rate = 5000.0;
  double setback = 12.0;

  RoadNetwork network;
  std::map<std::string, PhasePlan> plans;  // by intersection id
  std::vector<FlowSpec> flows;
  std::vector<IncidentSpec> incidents;
  std::vector<AdversaryConfig> adversaries;

  ControllerKind controller_at(const std::string& intersection) const;
  /// Lanes travelled by a flow path.
  std::vector<LaneRef> route_lanes(const std::vector<std::string>& path) const;
};

Scenario parse_scenario(const std::string& text, const std::string& source = "<memory>");
Scenario load_scenario(const std::string& path);

}  // namespace roadalarm
