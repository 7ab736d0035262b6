#include "roadalarm/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace roadalarm {

namespace {

constexpr double kAutoHalfWidth = 10.0;  // degrees either side of the lane-start chord

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& msg) const {
    std::ostringstream os;
    os << source_ << ":" << (at.Mark().line >= 0 ? at.Mark().line + 1 : 0) << ": " << field << ": " << msg;
    throw ValidationError(os.str());
  }

  void expect_map(const YAML::Node& n, const std::string& field) const {
    if (!n.IsMap()) fail(n, field, "expected a mapping");
  }
  void expect_seq(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence()) fail(n, field, "expected a list");
  }

  void known_keys(const YAML::Node& map, const std::string& field, std::initializer_list<const char*> keys) const {
    expect_map(map, field);
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
        fail(kv.first, join(field, key), "unknown key");
    }
  }

  template <typename T>
  T scalar(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, field, "expected a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, field, "cannot convert '" + n.Scalar() + "'");
    }
  }

  template <typename T>
  T get(const YAML::Node& map, const char* key, const std::string& field, T fallback) const {
    const YAML::Node n = map[key];
    return n ? scalar<T>(n, join(field, key)) : fallback;
  }

  template <typename T>
  T require(const YAML::Node& map, const char* key, const std::string& field) const {
    const YAML::Node n = map[key];
    if (!n) fail(map, join(field, key), "missing");
    return scalar<T>(n, join(field, key));
  }

  double positive(const YAML::Node& map, const char* key, const std::string& field, double fallback) const {
    const double v = get<double>(map, key, field, fallback);
    if (!(v > 0)) fail(map[key] ? map[key] : map, join(field, key), "must be positive");
    return v;
  }

  double non_negative(const YAML::Node& map, const char* key, const std::string& field, double fallback) const {
    const double v = get<double>(map, key, field, fallback);
    if (!(v >= 0)) fail(map[key] ? map[key] : map, join(field, key), "must not be negative");
    return v;
  }

  Vec2 point(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence() || n.size() != 2) fail(n, field, "expected [x, y]");
    return Vec2(scalar<double>(n[0], field), scalar<double>(n[1], field));
  }

  static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }
  static std::string index(const std::string& a, std::size_t i) { return a + "[" + std::to_string(i) + "]"; }

 private:
  std::string source_;
};

Variant parse_variant(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  if (s == "s1") return Variant::S1;
  if (s == "s2") return Variant::S2;
  r.fail(n, field, "expected s1 or s2, got '" + s + "'");
}

ControllerKind parse_controller(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  try {
    return controller_from_string(s);
  } catch (const std::invalid_argument&) {
    r.fail(n, field, "unknown controller '" + s + "'");
  }
}

VehicleType parse_vtype(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  for (auto t : {VehicleType::Normal, VehicleType::EmergencyActive, VehicleType::PublicTransport})
    if (s == to_string(t)) return t;
  r.fail(n, field, "unknown vehicle type '" + s + "'");
}

Direction parse_direction(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  if (s == "right") return Direction::Right;
  if (s == "left") return Direction::Left;
  r.fail(n, field, "expected right or left, got '" + s + "'");
}

AdversaryKind parse_adversary_kind(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  for (auto k : {AdversaryKind::Replay, AdversaryKind::Forge, AdversaryKind::DosFlood, AdversaryKind::Jam,
                 AdversaryKind::Botnet})
    if (s == to_string(k)) return k;
  r.fail(n, field, "unknown adversary kind '" + s + "'");
}

std::optional<LaneRef> parse_lane_ref(const std::string& s) {
  const auto slash = s.rfind('/');
  if (slash == std::string::npos || slash == 0) return std::nullopt;
  try {
    std::size_t used = 0;
    const int lid = std::stoi(s.substr(slash + 1), &used);
    if (used != s.size() - slash - 1) return std::nullopt;
    return LaneRef{s.substr(0, slash), lid};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void parse_parameters(const Reader& r, const YAML::Node& root, Scenario& sc) {
  if (const auto t = root["timing"]) {
    r.known_keys(t, "timing", {"status_period", "broadcast_period", "broadcast_window", "freshness_window", "gated",
                               "parking_reports", "pseudonym_batch"});
    auto& p = sc.timing;
    p.status_period = r.positive(t, "status_period", "timing", p.status_period);
    p.broadcast_period = r.positive(t, "broadcast_period", "timing", p.broadcast_period);
    p.broadcast_window = r.positive(t, "broadcast_window", "timing", p.broadcast_window);
    p.freshness_window = r.positive(t, "freshness_window", "timing", p.freshness_window);
    p.gated = r.get<bool>(t, "gated", "timing", p.gated);
    p.parking_reports = r.get<int>(t, "parking_reports", "timing", p.parking_reports);
    p.pseudonym_batch = r.get<std::size_t>(t, "pseudonym_batch", "timing", p.pseudonym_batch);
    if (p.pseudonym_batch == 0) r.fail(t, "timing.pseudonym_batch", "must be at least 1");
  }
  if (const auto d = root["detection"]) {
    r.known_keys(d, "detection", {"n_min", "window", "radius", "speed_threshold", "hold_down"});
    auto& p = sc.detection;
    p.n_min = r.get<std::size_t>(d, "n_min", "detection", p.n_min);
    p.window = r.get<double>(d, "window", "detection", p.window);
    p.radius = r.get<double>(d, "radius", "detection", p.radius);
    p.speed_threshold = r.get<double>(d, "speed_threshold", "detection", p.speed_threshold);
    p.hold_down = r.non_negative(d, "hold_down", "detection", p.hold_down);
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      r.fail(d, "detection", e.what());
    }
  }
  if (const auto c = root["control"]) {
    r.known_keys(c, "control", {"step", "emergency_step", "hop_limit", "hold", "saturation_flow", "grow_above",
                                "shrink_below"});
    auto& p = sc.control;
    p.rebalance.step = r.get<double>(c, "step", "control", p.rebalance.step);
    p.rebalance.emergency_step = r.get<double>(c, "emergency_step", "control", p.rebalance.emergency_step);
    for (auto [key, v] : {std::pair{"step", p.rebalance.step}, std::pair{"emergency_step", p.rebalance.emergency_step}})
      if (v < kMinStep || v > kMaxStep) r.fail(c[key] ? c[key] : c, Reader::join("control", key), "must lie in [4, 7]");
    p.hop_limit = r.get<int>(c, "hop_limit", "control", p.hop_limit);
    if (p.hop_limit < 0) r.fail(c["hop_limit"], "control.hop_limit", "must not be negative");
    p.hold = r.positive(c, "hold", "control", p.hold);
    p.adaptive.saturation_flow = r.positive(c, "saturation_flow", "control", p.adaptive.saturation_flow);
    p.adaptive.grow_above = r.positive(c, "grow_above", "control", p.adaptive.grow_above);
    p.adaptive.shrink_below = r.positive(c, "shrink_below", "control", p.adaptive.shrink_below);
  }
  if (const auto k = root["kinematics"]) {
    r.known_keys(k, "kinematics", {"accel", "decel", "standstill_gap", "vehicle_length", "entry_speed_cap",
                                   "entry_cap_distance"});
    auto& p = sc.kinematics;
    p.accel = r.positive(k, "accel", "kinematics", p.accel);
    p.decel = r.positive(k, "decel", "kinematics", p.decel);
    p.standstill_gap = r.non_negative(k, "standstill_gap", "kinematics", p.standstill_gap);
    p.vehicle_length = r.positive(k, "vehicle_length", "kinematics", p.vehicle_length);
    p.entry_speed_cap = r.positive(k, "entry_speed_cap", "kinematics", p.entry_speed_cap);
    p.entry_cap_distance = r.non_negative(k, "entry_cap_distance", "kinematics", p.entry_cap_distance);
  }
  if (const auto s = root["sim"]) {
    r.known_keys(s, "sim", {"tick", "rsu_range", "verification_rate", "setback"});
    sc.tick = r.positive(s, "tick", "sim", sc.tick);
    sc.rsu_range = r.positive(s, "rsu_range", "sim", sc.rsu_range);
    sc.verification_rate = r.positive(s, "verification_rate", "sim", sc.verification_rate);
    sc.setback = r.non_negative(s, "setback", "sim", sc.setback);
  }
}

void parse_network(const Reader& r, const YAML::Node& root, Scenario& sc) {
  const auto inters = root["intersections"];
  if (!inters) r.fail(root, "intersections", "missing");
  r.expect_seq(inters, "intersections");
  for (std::size_t i = 0; i < inters.size(); ++i) {
    const auto n = inters[i];
    const auto field = Reader::index("intersections", i);
    r.known_keys(n, field, {"id", "pos"});
    Intersection x;
    x.id = r.require<std::string>(n, "id", field);
    if (sc.network.find_intersection(x.id)) r.fail(n["id"], field + ".id", "duplicate intersection " + x.id);
    if (!n["pos"]) r.fail(n, field + ".pos", "missing");
    x.position = r.point(n["pos"], field + ".pos");
    x.lbs_id = "LBS-" + x.id;
    sc.network.intersections.push_back(std::move(x));
  }

  const auto segs = root["segments"];
  if (!segs) r.fail(root, "segments", "missing");
  r.expect_seq(segs, "segments");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto n = segs[i];
    const auto field = Reader::index("segments", i);
    r.known_keys(n, field, {"id", "from", "to", "lanes", "speed_limit", "lane_width", "neighbors"});
    Segment seg;
    seg.rid = r.require<std::string>(n, "id", field);
    if (seg.rid.find('/') != std::string::npos) r.fail(n["id"], field + ".id", "must not contain '/'");
    if (sc.network.find_segment(seg.rid)) r.fail(n["id"], field + ".id", "duplicate segment " + seg.rid);
    seg.from_intersection = r.require<std::string>(n, "from", field);
    seg.to_intersection = r.require<std::string>(n, "to", field);
    const auto* a = sc.network.find_intersection(seg.from_intersection);
    const auto* b = sc.network.find_intersection(seg.to_intersection);
    if (!a) r.fail(n["from"], field + ".from", "unknown intersection " + seg.from_intersection);
    if (!b) r.fail(n["to"], field + ".to", "unknown intersection " + seg.to_intersection);
    const Vec2 chord = b->position - a->position;
    const double length = chord.norm() - 2.0 * sc.setback;
    if (!(length > 0)) r.fail(n, field, "intersections too close for the stop-line setback");
    seg.lane_width = r.positive(n, "lane_width", field, kDefaultLaneWidth);
    seg.frame.heading_deg = heading_of(chord);
    seg.frame.origin = a->position + sc.setback * seg.frame.axis();
    const double limit = r.positive(n, "speed_limit", field, 13.9);

    const auto lanes = n["lanes"];
    if (!lanes) r.fail(n, field + ".lanes", "missing");
    r.expect_seq(lanes, field + ".lanes");
    if (lanes.size() == 0) r.fail(lanes, field + ".lanes", "at least one lane required");
    for (std::size_t k = 0; k < lanes.size(); ++k) {
      const auto ln = lanes[k];
      const auto lf = Reader::index(field + ".lanes", k);
      r.known_keys(ln, lf, {"lid", "direction", "speed_limit"});
      Lane lane;
      lane.lid = r.require<int>(ln, "lid", lf);
      if (lane.lid <= 0) r.fail(ln["lid"], lf + ".lid", "lane ids start at 1");
      if (seg.has_lane(lane.lid)) r.fail(ln["lid"], lf + ".lid", "duplicate lane " + std::to_string(lane.lid));
      if (!ln["direction"]) r.fail(ln, lf + ".direction", "missing");
      lane.direction = parse_direction(r, ln["direction"], lf + ".direction");
      lane.avg_speed_limit = r.positive(ln, "speed_limit", lf, limit);
      lane.length_m = length;
      seg.lanes.push_back(lane);
    }
    seg.rsu_ids = {"RSU-" + seg.rid + "-" + seg.from_intersection, "RSU-" + seg.rid + "-" + seg.to_intersection};
    seg.mrsu_id = "MRSU-" + seg.rid;
    seg.derive_extents();

    if (const auto nb = n["neighbors"]) {
      r.expect_seq(nb, field + ".neighbors");
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const auto e = nb[k];
        const auto ef = Reader::index(field + ".neighbors", k);
        r.known_keys(e, ef, {"from", "lo", "hi", "to"});
        NeighborEntry entry;
        const auto from = parse_lane_ref(r.require<std::string>(e, "from", ef));
        if (!from) r.fail(e["from"], ef + ".from", "expected <segment>/<lane>");
        entry.from_rid = from->rid;
        entry.from_lid = from->lid;
        entry.interval = AngleInterval{r.require<double>(e, "lo", ef), r.require<double>(e, "hi", ef)};
        entry.to_lid = r.require<int>(e, "to", ef);
        if (!seg.has_lane(entry.to_lid)) r.fail(e["to"], ef + ".to", "segment " + seg.rid + " has no such lane");
        seg.neighbor_table.entries.push_back(entry);
      }
    }
    sc.network.segments.push_back(std::move(seg));
  }

  // neighbor references need every segment parsed first
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& seg = sc.network.segments[i];
    for (std::size_t k = 0; k < seg.neighbor_table.entries.size(); ++k) {
      const auto& e = seg.neighbor_table.entries[k];
      if (!sc.network.has_lane(LaneRef{e.from_rid, e.from_lid}))
        r.fail(segs[i]["neighbors"][k]["from"], Reader::index(Reader::index("segments", i) + ".neighbors", k) + ".from",
               "unknown lane " + e.from_rid + "/" + std::to_string(e.from_lid));
    }
  }

  for (auto& x : sc.network.intersections) {
    for (const auto& seg : sc.network.segments)
      for (const auto& l : seg.lanes)
        if (seg.lane_end_intersection(l.lid) == x.id) x.light_ids.push_back(RoadNetwork::light_id({seg.rid, l.lid}));
    if (x.light_ids.empty()) r.fail(inters, "intersections", "intersection " + x.id + " has no incoming lane");
  }
  for (const auto& seg : sc.network.segments) {
    const auto& a = sc.network.intersection(seg.from_intersection).lbs_id;
    const auto& b = sc.network.intersection(seg.to_intersection).lbs_id;
    if (a == b) continue;
    sc.network.lbs_neighbor_links[a].insert(b);
    sc.network.lbs_neighbor_links[b].insert(a);
  }
}

void parse_plans(const Reader& r, const YAML::Node& root, Scenario& sc) {
  const auto plans = root["plans"];
  if (!plans) return;
  r.expect_map(plans, "plans");
  for (const auto& kv : plans) {
    const auto iid = kv.first.as<std::string>();
    const auto field = Reader::join("plans", iid);
    const auto* x = sc.network.find_intersection(iid);
    if (!x) r.fail(kv.first, field, "unknown intersection");
    const auto n = kv.second;
    r.known_keys(n, field, {"yellow", "min_green", "stages"});
    PhasePlan plan;
    plan.yellow = r.non_negative(n, "yellow", field, plan.yellow);
    plan.min_green = r.positive(n, "min_green", field, plan.min_green);
    const auto stages = n["stages"];
    if (!stages) r.fail(n, field + ".stages", "missing");
    r.expect_seq(stages, field + ".stages");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto st = stages[s];
      const auto sf = Reader::index(field + ".stages", s);
      r.known_keys(st, sf, {"green", "lights"});
      Stage stage;
      stage.green = r.require<double>(st, "green", sf);
      const auto lights = st["lights"];
      if (!lights) r.fail(st, sf + ".lights", "missing");
      r.expect_seq(lights, sf + ".lights");
      for (std::size_t k = 0; k < lights.size(); ++k) {
        const auto name = r.scalar<std::string>(lights[k], sf + ".lights");
        std::vector<std::string> expanded;
        if (name.find('/') == std::string::npos) {
          // a bare segment id stands for all of its lanes that end here
          for (const auto& light : x->light_ids)
            if (light.rfind(name + "/", 0) == 0) expanded.push_back(light);
        } else if (std::find(x->light_ids.begin(), x->light_ids.end(), name) != x->light_ids.end()) {
          expanded.push_back(name);
        }
        if (expanded.empty()) r.fail(lights[k], sf + ".lights", "no incoming lane '" + name + "' at " + iid);
        stage.lights.insert(stage.lights.end(), expanded.begin(), expanded.end());
      }
      plan.stages.push_back(std::move(stage));
    }
    try {
      plan.validate();
    } catch (const std::invalid_argument& e) {
      r.fail(n, field, e.what());
    }
    sc.plans[iid] = std::move(plan);
  }
}

void parse_flows(const Reader& r, const YAML::Node& root, Scenario& sc) {
  const auto flows = root["flows"];
  if (!flows) return;
  r.expect_seq(flows, "flows");
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto n = flows[i];
    const auto field = Reader::index("flows", i);
    r.known_keys(n, field, {"name", "path", "start", "end", "headway", "jitter", "speed", "type"});
    FlowSpec f;
    f.name = r.get<std::string>(n, "name", field, "flow-" + std::to_string(i));
    const auto path = n["path"];
    if (!path) r.fail(n, field + ".path", "missing");
    r.expect_seq(path, field + ".path");
    for (std::size_t k = 0; k < path.size(); ++k) f.path.push_back(r.scalar<std::string>(path[k], field + ".path"));
    if (f.path.size() < 2) r.fail(path, field + ".path", "needs at least two intersections");
    try {
      sc.route_lanes(f.path);
    } catch (const std::invalid_argument& e) {
      r.fail(path, field + ".path", e.what());
    }
    f.start = r.non_negative(n, "start", field, 0.0);
    f.end = r.require<double>(n, "end", field);
    if (f.end < f.start) r.fail(n["end"], field + ".end", "ends before it starts");
    f.headway = r.positive(n, "headway", field, f.headway);
    f.jitter = r.non_negative(n, "jitter", field, 0.0);
    f.speed = r.non_negative(n, "speed", field, 0.0);
    if (n["type"]) f.vtype = parse_vtype(r, n["type"], field + ".type");
    sc.flows.push_back(std::move(f));
  }
}

/// Movements follow the flow routes. Segments without an explicit neighbor
/// table get one entry per movement: the chord between the two lane starts,
/// widened by kAutoHalfWidth and split halfway toward any other target lane
/// reached from the same origin.
void derive_movements(Scenario& sc) {
  std::set<std::pair<LaneRef, LaneRef>> moves;
  for (const auto& f : sc.flows) {
    const auto lanes = sc.route_lanes(f.path);
    for (std::size_t k = 0; k + 1 < lanes.size(); ++k) moves.insert({lanes[k], lanes[k + 1]});
  }
  for (auto& x : sc.network.intersections)
    for (const auto& [in, out] : moves)
      if (sc.network.segment(in.rid).lane_end_intersection(in.lid) == x.id) x.movements.push_back({in, out});

  for (auto& seg : sc.network.segments) {
    if (!seg.neighbor_table.entries.empty()) continue;
    std::map<LaneRef, std::vector<std::pair<double, int>>> by_origin;
    for (const auto& [in, out] : moves) {
      if (out.rid != seg.rid) continue;
      const auto& from = sc.network.segment(in.rid);
      const Vec2 chord = seg.lane_point(out.lid, 0) - from.lane_point(in.lid, 0);
      by_origin[in].push_back({heading_of(chord), out.lid});
    }
    for (auto& [origin, targets] : by_origin) {
      std::sort(targets.begin(), targets.end());
      for (std::size_t k = 0; k < targets.size(); ++k) {
        const double a = targets[k].first;
        double lo = a - kAutoHalfWidth;
        double hi = a + kAutoHalfWidth;
        if (k > 0) lo = std::max(lo, (targets[k - 1].first + a) / 2 + 1e-6);
        if (k + 1 < targets.size()) hi = std::min(hi, (a + targets[k + 1].first) / 2 - 1e-6);
        seg.neighbor_table.entries.push_back(NeighborEntry{origin.rid, origin.lid, AngleInterval{lo, hi},
                                                           targets[k].second});
      }
    }
  }
}

void parse_incidents(const Reader& r, const YAML::Node& root, Scenario& sc) {
  const auto incidents = root["incidents"];
  if (!incidents) return;
  r.expect_seq(incidents, "incidents");
  for (std::size_t i = 0; i < incidents.size(); ++i) {
    const auto n = incidents[i];
    const auto field = Reader::index("incidents", i);
    r.known_keys(n, field, {"segment", "lane", "at", "start", "duration", "blocks_lane"});
    IncidentSpec inc;
    inc.rid = r.require<std::string>(n, "segment", field);
    const auto* seg = sc.network.find_segment(inc.rid);
    if (!seg) r.fail(n["segment"], field + ".segment", "unknown segment " + inc.rid);
    inc.lid = r.require<int>(n, "lane", field);
    if (!seg->has_lane(inc.lid)) r.fail(n["lane"], field + ".lane", "segment " + inc.rid + " has no such lane");
    inc.location = r.require<double>(n, "at", field);
    if (inc.location < 0 || inc.location > seg->lane(inc.lid).length_m)
      r.fail(n["at"], field + ".at", "outside the lane");
    inc.start = r.non_negative(n, "start", field, 0.0);
    if (n["duration"]) inc.duration = r.non_negative(n, "duration", field, 0.0);
    inc.blocks_lane = r.get<bool>(n, "blocks_lane", field, true);
    sc.incidents.push_back(inc);
  }
}

void parse_adversaries(const Reader& r, const YAML::Node& root, Scenario& sc) {
  const auto advs = root["adversaries"];
  if (!advs) return;
  r.expect_seq(advs, "adversaries");
  for (std::size_t i = 0; i < advs.size(); ++i) {
    const auto n = advs[i];
    const auto field = Reader::index("adversaries", i);
    r.known_keys(n, field, {"kind", "segment", "start", "duration", "count", "fast_fraction", "fast_delay",
                            "stale_delay", "rate", "region", "members", "lane", "center"});
    AdversaryConfig a;
    if (!n["kind"]) r.fail(n, field + ".kind", "missing");
    a.kind = parse_adversary_kind(r, n["kind"], field + ".kind");
    a.start = r.non_negative(n, "start", field, 0.0);
    a.duration = r.positive(n, "duration", field, sc.horizon);
    const Segment* seg = nullptr;
    if (a.kind != AdversaryKind::Jam) {
      a.segment = r.require<std::string>(n, "segment", field);
      seg = sc.network.find_segment(a.segment);
      if (!seg) r.fail(n["segment"], field + ".segment", "unknown segment " + a.segment);
    }
    switch (a.kind) {
      case AdversaryKind::Replay:
        a.count = r.require<std::size_t>(n, "count", field);
        a.fast_fraction = r.get<double>(n, "fast_fraction", field, a.fast_fraction);
        if (a.fast_fraction < 0 || a.fast_fraction > 1) r.fail(n["fast_fraction"], field + ".fast_fraction", "must lie in [0, 1]");
        a.fast_delay = r.non_negative(n, "fast_delay", field, a.fast_delay);
        a.stale_delay = r.non_negative(n, "stale_delay", field, a.stale_delay);
        break;
      case AdversaryKind::Forge:
        a.count = r.require<std::size_t>(n, "count", field);
        a.rate = r.positive(n, "rate", field, 10.0);
        break;
      case AdversaryKind::DosFlood:
        a.rate = r.positive(n, "rate", field, 1000.0);
        break;
      case AdversaryKind::Jam: {
        if (!n["region"] || !n["region"].IsSequence() || n["region"].size() != 2)
          r.fail(n["region"] ? n["region"] : n, field + ".region", "expected [[x0, y0], [x1, y1]]");
        a.region.extend(r.point(n["region"][0], field + ".region"));
        a.region.extend(r.point(n["region"][1], field + ".region"));
        break;
      }
      case AdversaryKind::Botnet:
        a.members = r.require<std::size_t>(n, "members", field);
        a.lane = r.require<int>(n, "lane", field);
        if (!seg->has_lane(a.lane)) r.fail(n["lane"], field + ".lane", "segment " + a.segment + " has no such lane");
        a.center = r.require<double>(n, "center", field);
        break;
    }
    sc.adversaries.push_back(a);
  }
}

}  // namespace

ControllerKind Scenario::controller_at(const std::string& intersection) const {
  auto it = controller_overrides.find(intersection);
  return it == controller_overrides.end() ? controller : it->second;
}

std::vector<LaneRef> Scenario::route_lanes(const std::vector<std::string>& path) const {
  std::vector<LaneRef> out;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const auto& a = path[k];
    const auto& b = path[k + 1];
    std::optional<LaneRef> hop;
    for (const auto& seg : network.segments) {
      for (const auto& l : seg.lanes)
        if (seg.lane_start_intersection(l.lid) == a && seg.lane_end_intersection(l.lid) == b) {
          hop = LaneRef{seg.rid, l.lid};
          break;
        }
      if (hop) break;
    }
    if (!hop) throw std::invalid_argument("no lane leads from " + a + " to " + b);
    out.push_back(*hop);
  }
  return out;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  const Reader r(source);
  if (!root.IsMap()) throw ParseError(source + ": top level must be a mapping");
  r.known_keys(root, "", {"schema", "name", "seed", "horizon", "variant", "controller", "controllers",
                          "detection_enabled", "timing", "detection", "control", "kinematics", "sim", "intersections",
                          "segments", "plans", "flows", "incidents", "adversaries"});

  Scenario sc;
  sc.source = source;
  sc.text = text;
  const auto schema = r.require<std::string>(root, "schema", "");
  if (schema != kScenarioSchema)
    r.fail(root["schema"], "schema", "expected " + std::string(kScenarioSchema) + ", got " + schema);
  sc.name = r.require<std::string>(root, "name", "");
  sc.seed = r.get<std::uint64_t>(root, "seed", "", sc.seed);
  sc.horizon = r.get<double>(root, "horizon", "", sc.horizon);
  if (!(sc.horizon > 0)) r.fail(root["horizon"], "horizon", "must be positive");
  if (root["variant"]) sc.variant = parse_variant(r, root["variant"], "variant");
  if (root["controller"]) sc.controller = parse_controller(r, root["controller"], "controller");
  sc.detection_enabled = r.get<bool>(root, "detection_enabled", "", sc.detection_enabled);

  parse_parameters(r, root, sc);
  parse_network(r, root, sc);
  parse_plans(r, root, sc);
  if (const auto c = root["controllers"]) {
    r.expect_map(c, "controllers");
    for (const auto& kv : c) {
      const auto iid = kv.first.as<std::string>();
      if (!sc.plans.count(iid)) r.fail(kv.first, "controllers." + iid, "no plan for this intersection");
      sc.controller_overrides[iid] = parse_controller(r, kv.second, "controllers." + iid);
    }
  }
  parse_flows(r, root, sc);
  parse_incidents(r, root, sc);
  parse_adversaries(r, root, sc);
  derive_movements(sc);

  try {
    sc.network.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(root["segments"], "segments", e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), std::filesystem::path(path).filename().string());
}

}  // namespace roadalarm
