#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "roadalarm/adversary.hpp"
#include "roadalarm/control.hpp"
#include "roadalarm/detection.hpp"
#include "roadalarm/kinematics.hpp"
#include "roadalarm/metrics.hpp"
#include "roadalarm/protocol.hpp"
#include "roadalarm/scenario.hpp"

namespace roadalarm {

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<ControllerKind> controller;  // applies to every controlled intersection
  std::optional<Variant> variant;
  std::optional<double> horizon;
};

struct SimVehicle {
  std::string id;
  std::vector<LaneRef> route;
  std::size_t leg = 0;
  VehicleKinematics kin;
  double prev_s = 0;
  double desired_cap = 0;  // flow speed, 0 for the lane limit
  double spawn_time = 0;
  bool spawned = false;
  bool finished = false;
  double finish_time = 0;
  double covered_freeflow = 0;  // free-flow seconds of completed lanes
  double freeflow = 0;          // free-flow seconds of the whole route
  std::unique_ptr<Vehicle> agent;

  const LaneRef& lane() const { return route[leg]; }
  bool active() const { return spawned && !finished; }
};

/// Deterministic discrete-event engine. Events run in (time, sequence) order.
class World {
 public:
  explicit World(Scenario scenario, const RunOptions& options = {});
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  void schedule(double t, std::function<void()> fn);
  /// Dispatches one event; false once the queue is empty or past the horizon.
  bool step();
  void run();
  /// Finalises delay, audits and latency figures.
  Metrics finish();

  double now() const { return clock_; }
  const Scenario& scenario() const { return sc_; }
  const Metrics& metrics() const { return metrics_; }
  const std::vector<SimVehicle>& vehicles() const { return vehicles_; }
  CertificateAuthority& ca() { return *ca_; }
  Lbs* lbs_at(const std::string& intersection);
  Mrsu* mrsu_of(const std::string& rid);
  const std::vector<std::size_t>& lane_queue(const LaneRef& lane) const;
  Vec2 position_of(const SimVehicle& v) const;
  bool jammed(const Vec2& receiver, double t) const;
  std::map<std::string, DetectorCounts> loop_detector_counts(const std::string& intersection) const;
  std::uint64_t halted_on(const LaneRef& lane) const;

 private:
  struct Event {
    double time;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };
  struct RsuSlot {
    std::unique_ptr<Rsu> rsu;
    bool at_from_end;
  };
  struct Incident {
    IncidentSpec spec;
    bool active = false;
  };

  std::uint64_t seed_for(const std::string& name) const;
  void build_agents();
  void build_vehicles();
  void build_adversaries();

  void tick();
  void update_control();
  void spawn_vehicles();
  void move_vehicles();
  void transfer(std::size_t idx);
  void protocol_motion(const std::set<std::size_t>& moved_between_lanes);
  void send_status();
  void sample_queues();

  void broadcast(std::size_t rsu_index);
  void deliver_status(const SignedEnvelope& env, const Vec2& from, const std::string& tag);
  void ingest(Mrsu& mrsu, const SignedEnvelope& env, const std::string& tag);
  void raise_alert(Mrsu& mrsu, const SignedEnvelope& env);
  void deliver_alert(const std::string& intersection, const SignedEnvelope& env, int hops, const std::string& tag);
  void record_commands(const std::vector<ScheduleCommand>& cmds, double next_boundary);
  void exit_vehicle(SimVehicle& v, const LaneRef& lane);

  std::optional<Obstacle> end_of_lane(const LaneRef& ref, const SimVehicle& v) const;
  double lane_desired(const SimVehicle& v, const LaneRef& ref) const;
  bool ground_truth(const CongestionAlert& alert, int lane) const;
  int resolve_lane(const CongestionAlert& alert) const;

  void attack_tick();
  void capture(const SignedEnvelope& env, const std::string& mrsu_id);

  Scenario sc_;
  double clock_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  Metrics metrics_;
  std::mt19937_64 rng_;

  std::unique_ptr<CertificateAuthority> ca_;
  TrustAnchors anchors_;
  std::vector<RsuSlot> rsus_;
  std::map<std::string, std::unique_ptr<Mrsu>> mrsus_;  // by rid
  std::map<std::string, Vec2> mrsu_pos_;
  std::map<std::string, double> mrsu_range_;
  std::map<std::string, std::unique_ptr<Lbs>> lbs_;  // by intersection
  std::map<std::string, std::size_t> lbs_cycles_;
  std::map<std::string, std::vector<std::size_t>> pending_records_;  // lbs -> command record indices
  std::map<std::string, std::map<std::string, DetectorCounts>> detectors_;

  std::vector<SimVehicle> vehicles_;
  std::size_t next_spawn_ = 0;
  std::vector<std::size_t> backlog_;  // due but waiting for space at the lane start
  std::map<LaneRef, std::vector<std::size_t>> lanes_;  // front first
  std::vector<Incident> incidents_;

  // adversaries
  std::map<std::size_t, std::vector<CapturedEnvelope>> captured_;  // by adversary index
  std::map<std::string, Certificate> last_pseudonym_cert_;         // by rid, observed on air
  std::unique_ptr<Forger> forger_;
  std::map<std::size_t, std::vector<BotnetMember>> botnets_;
  std::map<std::size_t, std::size_t> forged_sent_;
  std::optional<SignedEnvelope> flood_envelope_;
  std::size_t status_index_ = 0;
};

}  // namespace roadalarm
