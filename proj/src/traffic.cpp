#include <algorithm>
#include <cmath>
#include <limits>

#include "roadalarm/world.hpp"

namespace roadalarm {

namespace {

// Vehicles held at a stop line halt this far short of the lane end, which is
// where a lane transfer triggers.
constexpr double kStopMargin = 0.1;

double wrap180(double deg) {
  const double w = wrap_degrees(deg);
  return w > 180.0 ? w - 360.0 : w;
}

}  // namespace

double World::lane_desired(const SimVehicle& v, const LaneRef& ref) const {
  const double limit = sc_.network.segment(ref.rid).lane(ref.lid).avg_speed_limit;
  return v.desired_cap > 0 ? std::min(v.desired_cap, limit) : limit;
}

Vec2 World::position_of(const SimVehicle& v) const {
  const auto& seg = sc_.network.segment(v.lane().rid);
  return seg.lane_point(v.lane().lid, std::min(v.kin.s, seg.lane(v.lane().lid).length_m));
}

void World::spawn_vehicles() {
  while (next_spawn_ < vehicles_.size() && vehicles_[next_spawn_].spawn_time <= clock_ + 1e-9)
    backlog_.push_back(next_spawn_++);
  const auto& kp = sc_.kinematics;
  std::set<LaneRef> blocked;
  std::vector<std::size_t> waiting;
  for (std::size_t idx : backlog_) {
    SimVehicle& v = vehicles_[idx];
    const LaneRef& ref = v.route.front();
    auto& q = lanes_[ref];
    if (blocked.count(ref) ||
        (!q.empty() && vehicles_[q.back()].kin.s - kp.vehicle_length - kp.standstill_gap < 0)) {
      blocked.insert(ref);
      waiting.push_back(idx);
      continue;
    }
    v.spawned = true;
    v.kin.desired = lane_desired(v, ref);
    v.kin.s = 0;
    v.kin.v = std::min(v.kin.desired, kp.entry_speed_cap);
    if (!q.empty()) v.kin.v = std::min(v.kin.v, vehicles_[q.back()].kin.v);
    v.prev_s = 0;
    q.push_back(idx);
    const auto& seg = sc_.network.segment(ref.rid);
    v.agent->spawn(ref.rid, ref.lid, seg.lane_point(ref.lid, 0), seg.lane_heading(ref.lid));
    metrics_.count("vehicles.spawned");
  }
  backlog_ = std::move(waiting);
}

std::optional<Obstacle> World::end_of_lane(const LaneRef& ref, const SimVehicle& v) const {
  const auto& kp = sc_.kinematics;
  const auto& seg = sc_.network.segment(ref.rid);
  const double len = seg.lane(ref.lid).length_m;
  const Obstacle stop_line{len - kStopMargin + kp.standstill_gap, 0.0};
  auto lbs = lbs_.find(seg.lane_end_intersection(ref.lid));
  if (lbs != lbs_.end()) {
    const auto states = lbs->second->runner().lights();
    auto it = states.find(RoadNetwork::light_id(ref));
    if (it != states.end()) {
      if (it->second == LightState::Red) return stop_line;
      if (it->second == LightState::Yellow && v.kin.v * v.kin.v / (2.0 * kp.decel) < len - v.kin.s - 0.5)
        return stop_line;
    }
  }
  if (v.leg + 1 >= v.route.size()) return std::nullopt;
  const auto& next = lane_queue(v.route[v.leg + 1]);
  if (next.empty()) return std::nullopt;
  const SimVehicle& back = vehicles_[next.back()];
  return Obstacle{len + back.kin.s - kp.vehicle_length, back.kin.v};
}

void World::move_vehicles() {
  const auto& kp = sc_.kinematics;
  const double dt = sc_.tick;
  std::vector<std::size_t> reached;
  for (auto& [ref, q] : lanes_) {
    const auto& seg = sc_.network.segment(ref.rid);
    const double len = seg.lane(ref.lid).length_m;
    const double advance = std::max(0.0, len - 50.0);
    const std::string& end_iid = seg.lane_end_intersection(ref.lid);
    const bool detected = lbs_.count(end_iid) > 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      SimVehicle& v = vehicles_[q[i]];
      v.prev_s = v.kin.s;
      std::optional<Obstacle> ahead;
      if (i == 0) {
        ahead = end_of_lane(ref, v);
      } else {
        const SimVehicle& leader = vehicles_[q[i - 1]];
        ahead = Obstacle{leader.kin.s - kp.vehicle_length, leader.kin.v};
      }
      for (const auto& inc : incidents_) {
        if (!inc.active || !inc.spec.blocks_lane || inc.spec.rid != ref.rid || inc.spec.lid != ref.lid) continue;
        if (inc.spec.location < v.kin.s) continue;
        if (!ahead || inc.spec.location < ahead->position) ahead = Obstacle{inc.spec.location, 0.0};
      }
      v.kin = mobility_update(v.kin, dt, ahead, kp);
      if (detected && v.prev_s < advance && v.kin.s >= advance)
        detectors_[end_iid][RoadNetwork::light_id(ref)].demand += 1;
      if (v.kin.s >= len) reached.push_back(q[i]);
    }
  }

  std::set<std::size_t> moved;
  for (std::size_t idx : reached) {
    const LaneRef from = vehicles_[idx].lane();
    transfer(idx);
    if (vehicles_[idx].finished || vehicles_[idx].lane() != from) moved.insert(idx);
  }
  // A refused transfer leaves its vehicle at the stop line; keep followers behind it.
  for (auto& [ref, q] : lanes_)
    for (std::size_t i = 1; i < q.size(); ++i) {
      SimVehicle& v = vehicles_[q[i]];
      const double limit = vehicles_[q[i - 1]].kin.s - kp.vehicle_length - kp.standstill_gap;
      if (v.kin.s > limit) {
        v.kin.s = std::max(v.prev_s, limit);
        v.kin.v = 0;
      }
    }
  protocol_motion(moved);
}

void World::transfer(std::size_t idx) {
  const auto& kp = sc_.kinematics;
  SimVehicle& v = vehicles_[idx];
  const LaneRef ref = v.lane();
  const auto& seg = sc_.network.segment(ref.rid);
  const double len = seg.lane(ref.lid).length_m;
  auto& q = lanes_[ref];
  const std::string& end_iid = seg.lane_end_intersection(ref.lid);

  if (v.leg + 1 >= v.route.size()) {
    q.erase(std::find(q.begin(), q.end(), idx));
    v.finished = true;
    v.finish_time = clock_;
    v.covered_freeflow += len / lane_desired(v, ref);
    exit_vehicle(v, ref);
    if (lbs_.count(end_iid)) detectors_[end_iid][RoadNetwork::light_id(ref)].discharge += 1;
    metrics_.count("vehicles.finished");
    return;
  }

  const LaneRef next = v.route[v.leg + 1];
  auto& nq = lanes_[next];
  const double room = nq.empty() ? std::numeric_limits<double>::infinity()
                                 : vehicles_[nq.back()].kin.s - kp.vehicle_length - kp.standstill_gap;
  if (room < 0) {
    v.kin.s = len;
    v.kin.v = 0;
    metrics_.count("vehicles.refused_transfers");
    return;
  }
  // The overshoot is dropped: every lane is entered at its start at capped speed.
  const double s_new = 0.0;
  exit_vehicle(v, ref);

  // Dead-reckon the manoeuvre so the path ends exactly at the new lane start.
  Vehicle& agent = *v.agent;
  agent.dead_reckon(0.0, len - v.prev_s, 1.0);
  const auto& nseg = sc_.network.segment(next.rid);
  const Vec2 p_end = seg.lane_point(ref.lid, len);
  const Vec2 p_new = nseg.lane_point(next.lid, s_new);
  const Vec2 hop = p_new - p_end;
  if (hop.norm() > 1e-9) {
    agent.dead_reckon(wrap180(heading_of(hop) - agent.path().heading_deg), 0.0, 1.0);
    agent.dead_reckon(0.0, hop.norm(), 1.0);
  }
  agent.dead_reckon(wrap180(nseg.lane_heading(next.lid) - agent.path().heading_deg), 0.0, 1.0);

  q.erase(std::find(q.begin(), q.end(), idx));
  nq.push_back(idx);
  if (lbs_.count(end_iid)) detectors_[end_iid][RoadNetwork::light_id(ref)].discharge += 1;
  v.covered_freeflow += len / lane_desired(v, ref);
  ++v.leg;
  v.kin.s = s_new;
  v.prev_s = s_new;
  v.kin.desired = lane_desired(v, next);
  v.kin.v = std::min(v.kin.v, sc_.kinematics.entry_speed_cap);
  agent.update_motion(MotionSample{0.0, v.kin.v, 0.0, p_new, nseg.lane(next.lid).length_m});
}

void World::protocol_motion(const std::set<std::size_t>& moved) {
  const double dt = sc_.tick;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    SimVehicle& v = vehicles_[i];
    if (!v.active() || moved.count(i)) continue;
    const auto& seg = sc_.network.segment(v.lane().rid);
    const double len = seg.lane(v.lane().lid).length_m;
    const double travelled = std::max(0.0, v.kin.s - v.prev_s);
    v.agent->update_motion(MotionSample{dt, travelled / dt, 0.0, position_of(v), len});
  }
}

}  // namespace roadalarm
