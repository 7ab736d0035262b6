#include <algorithm>

#include "roadalarm/bytes.hpp"
#include "roadalarm/control.hpp"

namespace roadalarm {

Lbs::Lbs(std::string id, std::string intersection, const RoadNetwork& network, PhasePlan baseline, ControllerKind kind,
         ControlParams params, TrustAnchors anchors, std::set<std::string> neighbors)
    : id_(std::move(id)),
      intersection_(std::move(intersection)),
      network_(&network),
      kind_(kind),
      params_(params),
      anchors_(std::move(anchors)),
      neighbors_(std::move(neighbors)),
      runner_(std::move(baseline)) {}

std::set<std::string> Lbs::feeding_lights(const std::set<LaneRef>& lanes) const {
  std::set<std::string> out;
  for (const auto& [in, outgoing] : network_->intersection(intersection_).movements)
    if (lanes.count(outgoing)) out.insert(RoadNetwork::light_id(in));
  return out;
}

void Lbs::submit(ScheduleCommand cmd, const std::string& key, std::vector<ScheduleCommand>& out) {
  cmd.lbs = id_;
  runner_.submit(cmd);
  active_.push_back(Active{cmd, key});
  out.push_back(std::move(cmd));
}

AlertDecision Lbs::handle_alert(const SignedEnvelope& env, int hops, double now,
                                const std::map<std::string, double>& light_pressure) {
  AlertDecision d;
  if (seen_.count(env.signature)) {
    d.drop_reason = "Duplicate";
    return d;
  }
  if (auto err = check_envelope(env, anchors_, now, &certs_)) {
    d.drop_reason = to_string(*err);
    return d;
  }
  if (env.certificate.role != Role::MainRsu) {
    d.drop_reason = "CertError";
    return d;
  }
  std::optional<CongestionAlert> alert;
  try {
    alert = decode_as<CongestionAlert>(env.payload);
  } catch (const MalformedBytes&) {
  }
  const Segment* seg = alert ? network_->find_segment(alert->rid) : nullptr;
  if (!seg) {
    d.drop_reason = "Malformed";
    return d;
  }
  int lid = alert->lane;
  if (lid == 0) {
    std::map<int, int> votes;
    for (const auto& p : alert->positions)
      if (auto l = lane_from_position(p, *seg)) ++votes[*l];
    int best = 0;
    for (const auto& [l, n] : votes)
      if (n > best) {
        best = n;
        lid = l;
      }
  }
  if (!seg->has_lane(lid)) {
    d.drop_reason = "UnresolvedLane";
    return d;
  }
  seen_.insert(env.signature);
  d.accepted = true;
  const LaneRef lane{seg->rid, lid};
  d.lane = lane;
  congested_[lane] = now;
  if (kind_ != ControllerKind::AlertEnabled) return d;
  if (hops < params_.hop_limit) d.forward_to.assign(neighbors_.begin(), neighbors_.end());

  if (seg->lane_start_intersection(lid) == intersection_) {
    try {
      auto cmd = rebalance_green(runner_.projected(), feeding_lights({lane}), light_pressure,
                                 alert->includes_emergency, params_.rebalance, now);
      cmd.kind = CommandKind::Rebalance;
      cmd.cause = "congestion on " + lane.str();
      submit(std::move(cmd), lane.str(), d.commands);
    } catch (const NoFeasibleShift&) {
      d.infeasible = true;
    }
  }

  const bool endpoint = seg->from_intersection == intersection_ || seg->to_intersection == intersection_;
  if (!endpoint && !diverting_.count(seg->rid)) {
    bool all = true;
    for (const auto& l : seg->lanes) {
      auto it = congested_.find(LaneRef{seg->rid, l.lid});
      if (it == congested_.end() || now - it->second > params_.hold) all = false;
    }
    if (all) {
      std::set<LaneRef> toward;
      for (const auto& [in, outgoing] : network_->intersection(intersection_).movements) {
        const Segment& s = network_->segment(outgoing.rid);
        const auto& end = s.lane_end_intersection(outgoing.lid);
        if (end == seg->from_intersection || end == seg->to_intersection) toward.insert(outgoing);
      }
      try {
        auto cmd = rebalance_green(runner_.projected(), feeding_lights(toward), light_pressure, false,
                                   params_.rebalance, now);
        cmd.kind = CommandKind::Divert;
        cmd.cause = "both directions of " + seg->rid + " congested";
        diverting_.insert(seg->rid);
        submit(std::move(cmd), "divert:" + seg->rid, d.commands);
      } catch (const NoFeasibleShift&) {
        d.infeasible = true;
      }
    }
  }
  return d;
}

std::optional<ScheduleCommand> Lbs::decay_tick(double now) {
  auto expired = [&](const std::string& key) {
    double last = -1e300;
    if (key.rfind("divert:", 0) == 0) {
      const std::string rid = key.substr(7);
      for (const auto& [lane, t] : congested_)
        if (lane.rid == rid) last = std::max(last, t);
    } else {
      for (const auto& [lane, t] : congested_)
        if (lane.str() == key) last = t;
    }
    return now - last > params_.hold;
  };
  for (auto it = active_.rbegin(); it != active_.rend(); ++it) {
    if (!expired(it->key)) continue;
    ScheduleCommand inv = inverse(it->cmd, now);
    try {
      apply_command(runner_.projected(), inv);
    } catch (const std::invalid_argument&) {
      continue;
    }
    const std::string key = it->key;
    active_.erase(std::next(it).base());
    if (key.rfind("divert:", 0) == 0 &&
        std::none_of(active_.begin(), active_.end(), [&](const Active& a) { return a.key == key; }))
      diverting_.erase(key.substr(7));
    inv.lbs = id_;
    runner_.submit(inv);
    return inv;
  }
  return std::nullopt;
}

std::optional<ScheduleCommand> Lbs::adaptive_tick(const std::map<std::string, DetectorCounts>& counts, double now) {
  if (kind_ != ControllerKind::Adaptive) return std::nullopt;
  auto cmd = adaptive_baseline_tick(runner_.projected(), counts, params_.adaptive, now);
  if (!cmd) return std::nullopt;
  cmd->lbs = id_;
  runner_.submit(*cmd);
  return cmd;
}

}  // namespace roadalarm
