#include <algorithm>
#include <cmath>

#include "roadalarm/world.hpp"

namespace roadalarm {

void World::broadcast(std::size_t rsu_index) {
  Rsu& rsu = *rsus_[rsu_index].rsu;
  if (auto env = rsu.broadcast_tick(clock_)) {
    metrics_.count("messages.rid_state");
    for (auto& v : vehicles_) {
      if (!v.active()) continue;
      const Vec2 pos = position_of(v);
      if ((pos - rsu.position()).norm() > rsu.range()) continue;
      if (jammed(pos, clock_)) {
        metrics_.count("radio.jammed");
        continue;
      }
      metrics_.outcome("vehicle_rid_state", to_string(v.agent->handle_rid_state(*env, clock_)));
    }
  }
  schedule(clock_ + sc_.timing.broadcast_period, [this, rsu_index] { broadcast(rsu_index); });
}

void World::send_status() {
  for (auto& v : vehicles_) {
    if (!v.active()) continue;
    if (auto env = v.agent->status_tick(clock_)) {
      metrics_.count("messages.status");
      deliver_status(*env, position_of(v), "status");
    }
  }
}

void World::deliver_status(const SignedEnvelope& env, const Vec2& from, const std::string& tag) {
  for (auto& [rid, mrsu] : mrsus_) {
    if ((from - mrsu_pos_[rid]).norm() > mrsu_range_[rid]) continue;
    if (jammed(mrsu_pos_[rid], clock_)) {
      metrics_.count("radio.jammed");
      continue;
    }
    if (tag == "status") capture(env, mrsu->id());
    Mrsu* target = mrsu.get();
    const double done = target->schedule_verification(clock_);
    schedule(done, [this, target, env, tag] { ingest(*target, env, tag); });
  }
}

void World::ingest(Mrsu& mrsu, const SignedEnvelope& env, const std::string& tag) {
  const IngestOutcome out = mrsu.ingest(env, clock_);
  metrics_.outcome("mrsu_ingest", to_string(out));
  if (tag != "status") metrics_.outcome(tag, to_string(out));
  if (out == IngestOutcome::CacheUpdated && env.certificate.role == Role::Pseudonym)
    last_pseudonym_cert_[mrsu.rid()] = env.certificate;
  if (out != IngestOutcome::CacheUpdated || !sc_.detection_enabled) return;
  for (const auto& alert : mrsu.detect(clock_)) raise_alert(mrsu, alert);
}

int World::resolve_lane(const CongestionAlert& alert) const {
  if (alert.lane != 0) return alert.lane;
  const auto& seg = sc_.network.segment(alert.rid);
  std::map<int, int> votes;
  for (const auto& p : alert.positions)
    if (auto l = lane_from_position(p, seg)) ++votes[*l];
  int lane = 0;
  int best = 0;
  for (const auto& [l, n] : votes)
    if (n > best) {
      best = n;
      lane = l;
    }
  return lane;
}

bool World::ground_truth(const CongestionAlert& alert, int lane) const {
  const auto& seg = sc_.network.segment(alert.rid);
  std::size_t n = 0;
  for (auto idx : lane_queue(LaneRef{alert.rid, lane})) {
    const SimVehicle& v = vehicles_[idx];
    if (v.kin.v >= sc_.detection.speed_threshold) continue;
    double coord = 0;
    if (sc_.variant == Variant::S1) {
      if (v.agent->state() != Routestate::Onroad || v.agent->rid() != alert.rid) continue;
      coord = v.agent->dist();
    } else {
      coord = seg.frame.along(position_of(v));
    }
    if (std::abs(coord - alert.center) <= sc_.detection.radius) ++n;
  }
  return n >= sc_.detection.n_min;
}

void World::raise_alert(Mrsu& mrsu, const SignedEnvelope& env) {
  const auto alert = decode_as<CongestionAlert>(env.payload);
  if (!alert) return;
  AlertRecord r;
  r.time = clock_;
  r.mrsu = mrsu.id();
  r.rid = alert->rid;
  r.lane = resolve_lane(*alert);
  r.center = alert->center;
  r.count = alert->vehicle_count;
  r.emergency = alert->includes_emergency;
  r.truthful = r.lane != 0 && ground_truth(*alert, r.lane);
  metrics_.alerts.push_back(r);
  metrics_.count("messages.alert");
  metrics_.log(clock_, "alert", mrsu.id(),
               alert->rid + "/" + std::to_string(r.lane) + " count " + std::to_string(r.count) +
                   (r.truthful ? " true" : " false"));
  const auto& seg = sc_.network.segment(alert->rid);
  for (const auto& iid : {seg.from_intersection, seg.to_intersection})
    if (lbs_.count(iid)) schedule(clock_, [this, iid, env] { deliver_alert(iid, env, 0, "alert"); });
}

void World::deliver_alert(const std::string& intersection, const SignedEnvelope& env, int hops,
                          const std::string& tag) {
  Lbs& lbs = *lbs_.at(intersection);
  lbs.runner().tick(clock_);
  std::map<std::string, double> pressure;
  for (const auto& light : lbs.runner().plan().lights()) {
    const auto slash = light.rfind('/');
    const LaneRef ref{light.substr(0, slash), std::stoi(light.substr(slash + 1))};
    pressure[light] = static_cast<double>(halted_on(ref));
  }
  const AlertDecision d = lbs.handle_alert(env, hops, clock_, pressure);
  const std::string reason = d.accepted ? "Accepted" : d.drop_reason;
  metrics_.outcome(hops == 0 ? "lbs_alert" : "lbs_forwarded", reason);
  if (tag != "alert") metrics_.outcome(tag, reason);
  if (d.infeasible) metrics_.count("commands.infeasible");
  record_commands(d.commands, lbs.runner().phase_end());
  for (const auto& nb : d.forward_to) {
    const std::string nb_iid = sc_.network.intersection_of_lbs(nb).id;
    metrics_.count("messages.alert_forwarded");
    schedule(clock_, [this, nb_iid, env, hops, tag] { deliver_alert(nb_iid, env, hops + 1, tag); });
  }
}

void World::exit_vehicle(SimVehicle& v, const LaneRef& lane) {
  Vehicle& agent = *v.agent;
  if (agent.state() != Routestate::Onroad || agent.rid() != lane.rid) return;
  const auto& seg = sc_.network.segment(lane.rid);
  const bool at_from_end = seg.lane(lane.lid).direction == Direction::Left;
  for (auto& slot : rsus_) {
    if (slot.rsu->rid() != lane.rid || slot.at_from_end != at_from_end) continue;
    const SignedEnvelope env = slot.rsu->exit_signal(agent.pseudonyms().active()->public_key, clock_);
    metrics_.count("messages.exit");
    metrics_.outcome("exit", to_string(mrsus_.at(lane.rid)->purge_on_exit(env, clock_)));
    break;
  }
  agent.exit_segment();
}

}  // namespace roadalarm
