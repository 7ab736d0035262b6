#include "roadalarm/world.hpp"

#include <algorithm>
#include <cmath>

namespace roadalarm {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

World::World(Scenario scenario, const RunOptions& options) : sc_(std::move(scenario)) {
  if (options.seed) sc_.seed = *options.seed;
  if (options.controller) {
    sc_.controller = *options.controller;
    sc_.controller_overrides.clear();
  }
  if (options.variant) sc_.variant = *options.variant;
  if (options.horizon) sc_.horizon = *options.horizon;
  if (!(sc_.horizon > 0)) throw std::invalid_argument("horizon must be positive");
  rng_.seed(splitmix(sc_.seed));

  metrics_.scenario = sc_.name;
  metrics_.controller = to_string(sc_.controller);
  metrics_.variant = to_string(sc_.variant);
  metrics_.seed = sc_.seed;
  metrics_.horizon = sc_.horizon;
  metrics_.min_cycle = kMaxCycle;
  metrics_.max_cycle = kMinCycle;

  build_agents();
  build_vehicles();
  build_adversaries();

  for (const auto& spec : sc_.incidents) {
    const std::size_t i = incidents_.size();
    incidents_.push_back(Incident{spec, false});
    schedule(spec.start, [this, i] {
      auto& inc = incidents_[i];
      if (inc.spec.duration && *inc.spec.duration <= 0) return;
      inc.active = true;
      metrics_.log(clock_, "incident_start", inc.spec.rid + "/" + std::to_string(inc.spec.lid),
                   "at " + std::to_string(inc.spec.location));
    });
    if (spec.duration && *spec.duration > 0)
      schedule(spec.start + *spec.duration, [this, i] {
        incidents_[i].active = false;
        metrics_.log(clock_, "incident_end", incidents_[i].spec.rid + "/" + std::to_string(incidents_[i].spec.lid), "");
      });
  }
  schedule(0.0, [this] { tick(); });
  for (std::size_t i = 0; i < rsus_.size(); ++i) schedule(0.0, [this, i] { broadcast(i); });
}

World::~World() = default;

std::uint64_t World::seed_for(const std::string& name) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix(h ^ splitmix(sc_.seed));
}

void World::build_agents() {
  ca_ = std::make_unique<CertificateAuthority>("CA", seed_for("CA"));
  anchors_ = ca_->anchors(sc_.timing.freshness_window);
  const double w = sc_.network.segments.empty() ? kDefaultLaneWidth : sc_.network.segments.front().lane_width;
  for (const auto& seg : sc_.network.segments) {
    const double len = seg.length();
    for (int end = 0; end < 2; ++end) {
      const std::string& id = seg.rsu_ids[static_cast<std::size_t>(end)];
      auto hsm = std::make_unique<Hsm>(id, seed_for(id));
      auto cred = ca_->register_unit(id, Role::Rsu, *hsm, 0);
      RidStateMsg ann;
      ann.rid = seg.rid;
      ann.mrsu_addr = seg.mrsu_id;
      if (sc_.variant == Variant::S1)
        ann.segment_info = seg.neighbor_table;
      else
        ann.segment_info = *seg.rpos;
      const Vec2 pos = seg.frame.to_world(end == 0 ? 0.0 : len, 0.0);
      rsus_.push_back(RsuSlot{std::make_unique<Rsu>(id, ann, pos, sc_.rsu_range, std::move(hsm), cred.key_ref,
                                                    sc_.timing),
                              end == 0});
    }
    auto hsm = std::make_unique<Hsm>(seg.mrsu_id, seed_for(seg.mrsu_id));
    auto cred = ca_->register_unit(seg.mrsu_id, Role::MainRsu, *hsm, 0);
    mrsus_[seg.rid] = std::make_unique<Mrsu>(seg.mrsu_id, seg, sc_.variant, sc_.detection, anchors_, std::move(hsm),
                                             cred.key_ref, sc_.verification_rate);
    mrsu_pos_[seg.rid] = seg.frame.to_world(len / 2.0, 0.0);
    mrsu_range_[seg.rid] = len / 2.0 + 2.0 * w;
  }
  for (const auto& inter : sc_.network.intersections) {
    auto plan = sc_.plans.find(inter.id);
    if (plan == sc_.plans.end()) continue;
    std::set<std::string> neighbors;
    for (const auto& seg : sc_.network.segments) {
      std::string other;
      if (seg.from_intersection == inter.id) other = seg.to_intersection;
      if (seg.to_intersection == inter.id) other = seg.from_intersection;
      if (!other.empty() && sc_.plans.count(other)) neighbors.insert(sc_.network.intersection(other).lbs_id);
    }
    lbs_[inter.id] = std::make_unique<Lbs>(inter.lbs_id, inter.id, sc_.network, plan->second,
                                           sc_.controller_at(inter.id), sc_.control, anchors_, neighbors);
    lbs_cycles_[inter.id] = 0;
  }
}

void World::build_vehicles() {
  struct Due {
    double t;
    std::size_t flow;
  };
  std::vector<Due> due;
  for (std::size_t f = 0; f < sc_.flows.size(); ++f) {
    const auto& flow = sc_.flows[f];
    std::uniform_real_distribution<double> jitter(-flow.jitter, flow.jitter);
    for (double t = flow.start; t < flow.end - 1e-9; t += flow.headway) {
      const double j = flow.jitter > 0 ? jitter(rng_) : 0.0;
      due.push_back(Due{std::max(flow.start, t + j), f});
    }
  }
  std::stable_sort(due.begin(), due.end(), [](const Due& a, const Due& b) { return a.t < b.t; });
  vehicles_.reserve(due.size());
  for (std::size_t n = 0; n < due.size(); ++n) {
    const auto& flow = sc_.flows[due[n].flow];
    SimVehicle v;
    v.id = "veh-" + std::to_string(n);
    v.route = sc_.route_lanes(flow.path);
    v.desired_cap = flow.speed;
    v.spawn_time = due[n].t;
    for (const auto& ref : v.route)
      v.freeflow += sc_.network.segment(ref.rid).lane(ref.lid).length_m / lane_desired(v, ref);
    auto hsm = std::make_unique<Hsm>(v.id, seed_for(v.id));
    auto cred = ca_->register_vehicle(v.id, *hsm, 0);
    v.agent = std::make_unique<Vehicle>(v.id, sc_.variant, flow.vtype, std::move(hsm), std::move(cred), anchors_,
                                        sc_.timing, ca_.get());
    vehicles_.push_back(std::move(v));
  }
}

void World::schedule(double t, std::function<void()> fn) {
  if (t < clock_) t = clock_;
  queue_.push(Event{t, seq_++, std::move(fn)});
}

bool World::step() {
  if (queue_.empty()) return false;
  if (queue_.top().time > sc_.horizon + 1e-9) return false;
  Event ev = queue_.top();
  queue_.pop();
  clock_ = ev.time;
  ev.fn();
  return true;
}

void World::run() {
  while (step()) {
  }
}

Lbs* World::lbs_at(const std::string& intersection) {
  auto it = lbs_.find(intersection);
  return it == lbs_.end() ? nullptr : it->second.get();
}

Mrsu* World::mrsu_of(const std::string& rid) {
  auto it = mrsus_.find(rid);
  return it == mrsus_.end() ? nullptr : it->second.get();
}

const std::vector<std::size_t>& World::lane_queue(const LaneRef& lane) const {
  static const std::vector<std::size_t> empty;
  auto it = lanes_.find(lane);
  return it == lanes_.end() ? empty : it->second;
}

bool World::jammed(const Vec2& receiver, double t) const {
  for (const auto& a : sc_.adversaries)
    if (a.kind == AdversaryKind::Jam && t >= a.start && t < a.start + a.duration && a.region.contains(receiver))
      return true;
  return false;
}

std::map<std::string, DetectorCounts> World::loop_detector_counts(const std::string& intersection) const {
  auto it = detectors_.find(intersection);
  return it == detectors_.end() ? std::map<std::string, DetectorCounts>{} : it->second;
}

std::uint64_t World::halted_on(const LaneRef& lane) const {
  std::uint64_t n = 0;
  for (auto idx : lane_queue(lane))
    if (vehicles_[idx].kin.v < 0.1) ++n;
  return n;
}

void World::tick() {
  update_control();
  spawn_vehicles();
  move_vehicles();
  send_status();
  attack_tick();
  sample_queues();
  if (sc_.timing.gated)
    for (auto& slot : rsus_)
      for (const auto& v : vehicles_)
        if (v.active() && (position_of(v) - slot.rsu->position()).norm() <= slot.rsu->range()) {
          slot.rsu->notify_arrival(clock_);
          break;
        }
  schedule(clock_ + sc_.tick, [this] { tick(); });
}

void World::update_control() {
  for (auto& [iid, lbs] : lbs_) {
    auto& runner = lbs->runner();
    runner.tick(clock_);
    for (auto& cmd : runner.take_applied()) {
      auto& pending = pending_records_[lbs->id()];
      if (!pending.empty()) {
        metrics_.commands[pending.front()].effective = cmd.effective_from;
        pending.erase(pending.begin());
      }
      metrics_.log(cmd.effective_from, "command_applied", lbs->id(), to_string(cmd.kind));
    }
    if (!mmu_safe(runner.lights(), runner.baseline())) ++metrics_.mmu_violations;
    const double cycle = runner.plan().cycle_length();
    metrics_.min_cycle = std::min(metrics_.min_cycle, cycle);
    metrics_.max_cycle = std::max(metrics_.max_cycle, cycle);
    if (cycle < kMinCycle - 1e-9 || cycle > kMaxCycle + 1e-9) ++metrics_.cycle_violations;

    if (runner.cycles() > lbs_cycles_[iid]) {
      lbs_cycles_[iid] = runner.cycles();
      std::optional<ScheduleCommand> cmd;
      if (lbs->kind() == ControllerKind::AlertEnabled) cmd = lbs->decay_tick(clock_);
      if (lbs->kind() == ControllerKind::Adaptive) cmd = lbs->adaptive_tick(detectors_[iid], clock_);
      detectors_[iid].clear();
      if (cmd) record_commands({*cmd}, runner.phase_end());
    }
  }
}

void World::record_commands(const std::vector<ScheduleCommand>& cmds, double next_boundary) {
  for (const auto& c : cmds) {
    CommandRecord r;
    r.lbs = c.lbs;
    r.kind = to_string(c.kind);
    r.cause = c.cause;
    r.issued = c.issued_at;
    r.next_boundary = next_boundary;
    r.stage_delta = c.stage_delta;
    for (double d : c.stage_delta)
      if (d != 0 && (std::abs(d) < kMinStep - 1e-9 || std::abs(d) > kMaxStep + 1e-9)) ++metrics_.delta_violations;
    const auto& iid = sc_.network.intersection_of_lbs(c.lbs).id;
    r.cycle_after = lbs_.at(iid)->runner().projected().cycle_length();
    pending_records_[c.lbs].push_back(metrics_.commands.size());
    metrics_.commands.push_back(std::move(r));
    metrics_.count(std::string("commands.") + to_string(c.kind));
    metrics_.log(clock_, c.kind == CommandKind::Divert ? "divert" : "command_issued", c.lbs, c.cause);
  }
}

void World::sample_queues() {
  const double phase = std::fmod(clock_ + 1e-9, 10.0);
  const bool sample = phase < sc_.tick / 2;
  std::uint64_t total = 0;
  for (const auto& [ref, q] : lanes_) {
    const std::uint64_t n = halted_on(ref);
    total += n;
    auto& m = metrics_.max_queue[ref.str()];
    m = std::max(m, n);
  }
  if (sample) metrics_.queue_series.emplace_back(clock_, total);
}

Metrics World::finish() {
  Metrics m = metrics_;
  m.vehicles.clear();
  for (const auto& v : vehicles_) {
    if (v.spawn_time > sc_.horizon) continue;
    VehicleOutcome o;
    o.id = v.id;
    o.spawn = v.spawn_time;
    o.freeflow = v.freeflow;
    o.finished = v.finished;
    if (v.finished) {
      o.delay = (v.finish_time - v.spawn_time) - v.freeflow;
    } else {
      double credit = v.covered_freeflow;
      if (v.spawned) credit += std::min(v.kin.s, sc_.network.segment(v.lane().rid).lane(v.lane().lid).length_m) /
                               lane_desired(v, v.lane());
      o.delay = (clock_ - v.spawn_time) - credit;
    }
    m.vehicles.push_back(o);
  }

  for (const auto& inc : incidents_) {
    for (const auto& a : m.alerts)
      if (a.rid == inc.spec.rid && a.lane == inc.spec.lid && a.truthful && a.time >= inc.spec.start) {
        const double lat = a.time - inc.spec.start;
        m.incident_to_alert = m.incident_to_alert ? std::max(*m.incident_to_alert, lat) : lat;
        break;
      }
  }
  for (const auto& c : m.commands) {
    if (c.kind != "rebalance" && c.kind != "divert") continue;
    if (c.effective < 0) continue;
    const double lat = c.effective - c.issued;
    m.alert_to_command = m.alert_to_command ? std::max(*m.alert_to_command, lat) : lat;
    if (c.effective > c.next_boundary + 1e-9) m.count("commands.late");
  }

  std::map<PublicKey, std::set<std::string>> seen;
  for (const auto& [rid, mrsu] : mrsus_)
    for (const auto& [key, n] : mrsu->observed_keys()) seen[key].insert(rid);
  m.pseudonym_keys = seen.size();
  m.pseudonym_violations = 0;
  for (const auto& [key, rids] : seen) {
    if (rids.size() > 1) ++m.pseudonym_violations;
    if (!ca_->resolve(key)) ++m.pseudonym_violations;
  }
  for (const auto& v : vehicles_) {
    std::set<std::string> bound;
    for (const auto& p : v.agent->pseudonyms().all())
      if (p.used_on_segment && !bound.insert(*p.used_on_segment).second) ++m.pseudonym_violations;
  }
  return m;
}

}  // namespace roadalarm
