#include "roadalarm/geometry.hpp"

#include <algorithm>

namespace roadalarm {

namespace {
constexpr double kAngleEps = 1e-9;
}

bool AngleInterval::contains(double deg) const {
  const double span = hi_deg - lo_deg;
  const double d = wrap_degrees(deg - lo_deg);
  return d <= span + kAngleEps;
}

bool AngleInterval::overlaps(const AngleInterval& other) const {
  return contains(other.lo_deg) || contains(other.hi_deg) || other.contains(lo_deg) ||
         other.contains(hi_deg);
}

void NeighborTable::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    if (!(a.interval.lo_deg < a.interval.hi_deg))
      throw std::invalid_argument("neighbor entry from " + a.from_rid + "/" +
                                  std::to_string(a.from_lid) + ": empty angle interval");
    if (a.interval.hi_deg - a.interval.lo_deg >= 360.0)
      throw std::invalid_argument("neighbor entry from " + a.from_rid + ": interval spans a full turn");
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const auto& b = entries[j];
      if (a.from_rid == b.from_rid && a.from_lid == b.from_lid && a.to_lid != b.to_lid &&
          a.interval.overlaps(b.interval))
        throw std::invalid_argument("neighbor entries from " + a.from_rid + "/" +
                                    std::to_string(a.from_lid) + " overlap");
    }
  }
}

bool NeighborTable::has_origin(const LaneRef& from) const {
  return std::any_of(entries.begin(), entries.end(), [&](const NeighborEntry& e) {
    return e.from_rid == from.rid && e.from_lid == from.lid;
  });
}

const Lane& Segment::lane(int lid) const {
  for (const auto& l : lanes)
    if (l.lid == lid) return l;
  throw std::out_of_range("segment " + rid + " has no lane " + std::to_string(lid));
}

bool Segment::has_lane(int lid) const {
  return std::any_of(lanes.begin(), lanes.end(), [&](const Lane& l) { return l.lid == lid; });
}

double Segment::length() const {
  double m = 0;
  for (const auto& l : lanes) m = std::max(m, l.length_m);
  return m;
}

double Segment::lane_offset(int lid) const {
  const double n = static_cast<double>(lanes.size());
  for (std::size_t i = 0; i < lanes.size(); ++i)
    if (lanes[i].lid == lid) return ((n - 1.0) / 2.0 - static_cast<double>(i)) * lane_width;
  throw std::out_of_range("segment " + rid + " has no lane " + std::to_string(lid));
}

Vec2 Segment::lane_point(int lid, double s) const {
  const Lane& l = lane(lid);
  const double x = l.direction == Direction::Right ? s : l.length_m - s;
  return frame.to_world(x, lane_offset(lid));
}

double Segment::lane_heading(int lid) const {
  return lane(lid).direction == Direction::Right ? wrap_degrees(frame.heading_deg)
                                                 : wrap_degrees(frame.heading_deg + 180.0);
}

const std::string& Segment::lane_start_intersection(int lid) const {
  return lane(lid).direction == Direction::Right ? from_intersection : to_intersection;
}

const std::string& Segment::lane_end_intersection(int lid) const {
  return lane(lid).direction == Direction::Right ? to_intersection : from_intersection;
}

Box2 Segment::lane_strip(int lid) const {
  const Lane& l = lane(lid);
  const double off = lane_offset(lid);
  return Box2(Vec2(0, off - lane_width / 2), Vec2(l.length_m, off + lane_width / 2));
}

void Segment::derive_extents() {
  lpos.clear();
  Box2 all;
  for (const auto& l : lanes) {
    const Box2 strip = lane_strip(l.lid);
    lpos[l.lid] = strip;
    for (auto c : {Box2::BottomLeft, Box2::BottomRight, Box2::TopLeft, Box2::TopRight}) {
      const Vec2 k = strip.corner(c);
      all.extend(frame.to_world(k.x(), k.y()));
    }
  }
  rpos = all;
}

const Segment* RoadNetwork::find_segment(const std::string& rid) const {
  for (const auto& s : segments)
    if (s.rid == rid) return &s;
  return nullptr;
}

const Segment& RoadNetwork::segment(const std::string& rid) const {
  if (const auto* s = find_segment(rid)) return *s;
  throw std::out_of_range("unknown segment " + rid);
}

const Intersection* RoadNetwork::find_intersection(const std::string& id) const {
  for (const auto& i : intersections)
    if (i.id == id) return &i;
  return nullptr;
}

const Intersection& RoadNetwork::intersection(const std::string& id) const {
  if (const auto* i = find_intersection(id)) return *i;
  throw std::out_of_range("unknown intersection " + id);
}

const Intersection& RoadNetwork::intersection_of_lbs(const std::string& lbs_id) const {
  for (const auto& i : intersections)
    if (i.lbs_id == lbs_id) return i;
  throw std::out_of_range("unknown LBS " + lbs_id);
}

bool RoadNetwork::has_lane(const LaneRef& ref) const {
  const auto* s = find_segment(ref.rid);
  return s && s->has_lane(ref.lid);
}

void RoadNetwork::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  std::set<std::string> lbs_ids;
  for (const auto& i : intersections) {
    if (i.light_ids.empty()) fail("intersection " + i.id + " has no traffic light");
    if (i.lbs_id.empty()) fail("intersection " + i.id + " has no LBS");
    if (!lbs_ids.insert(i.lbs_id).second) fail("LBS " + i.lbs_id + " serves two intersections");
    for (const auto& [in, out] : i.movements) {
      if (!has_lane(in)) fail("intersection " + i.id + ": movement from unknown lane " + in.str());
      if (!has_lane(out)) fail("intersection " + i.id + ": movement to unknown lane " + out.str());
    }
  }
  std::set<std::string> rids;
  for (const auto& s : segments) {
    if (!rids.insert(s.rid).second) fail("duplicate segment " + s.rid);
    if (s.lanes.empty()) fail("segment " + s.rid + " has no lanes");
    if (!find_intersection(s.from_intersection) || !find_intersection(s.to_intersection))
      fail("segment " + s.rid + " does not attach to two known intersections");
    std::set<int> lids;
    for (const auto& l : s.lanes) {
      if (!lids.insert(l.lid).second) fail("segment " + s.rid + ": duplicate lane " + std::to_string(l.lid));
      if (!(l.length_m > 0)) fail("segment " + s.rid + ": lane length must be positive");
      if (!(l.avg_speed_limit > 0)) fail("segment " + s.rid + ": lane speed limit must be positive");
    }
    s.neighbor_table.validate();
    if (s.rpos) {
      for (const auto& [lid, strip] : s.lpos) {
        Box2 grown = *s.rpos;
        grown.min().array() -= 1e-9;
        grown.max().array() += 1e-9;
        for (auto c : {Box2::BottomLeft, Box2::BottomRight, Box2::TopLeft, Box2::TopRight}) {
          const Vec2 k = strip.corner(c);
          if (!grown.contains(s.frame.to_world(k.x(), k.y())))
            fail("segment " + s.rid + ": lane strip outside road extent");
        }
      }
    }
  }
  for (const auto& [a, ns] : lbs_neighbor_links) {
    if (!lbs_ids.count(a)) fail("neighbor link names unknown LBS " + a);
    for (const auto& b : ns) {
      auto it = lbs_neighbor_links.find(b);
      if (it == lbs_neighbor_links.end() || !it->second.count(a))
        fail("neighbor link " + a + " -> " + b + " is not symmetric");
    }
  }
}

void PathRecord::reset(std::optional<LaneRef> origin) {
  points.assign(1, Vec2::Zero());
  origin_ref = std::move(origin);
}

void append_path_step(PathRecord& path, double wheel_angle_deg, double speed, double dt) {
  const double turn = path.gain * wheel_angle_deg * dt;
  const double half = radians(turn) / 2.0;
  const double sinc = std::abs(half) < 1e-12 ? 1.0 : std::sin(half) / half;
  const double chord = speed * dt * sinc;
  const Vec2 next = path.last() + chord * unit_heading(path.heading_deg + turn / 2.0);
  path.points.push_back(next);
  path.heading_deg = wrap_degrees(path.heading_deg + turn);
}

PathRecord record_path_step(const PathRecord& path, double wheel_angle_deg, double speed, double dt) {
  PathRecord out = path;
  append_path_step(out, wheel_angle_deg, speed, dt);
  return out;
}

double path_heading_angle(const PathRecord& path) {
  const Vec2 chord = path.points.back() - path.points.front();
  if (chord.norm() <= 1e-12) throw DegeneratePath();
  return heading_of(chord);
}

std::optional<int> classify_arrival(const PathRecord& path, const NeighborTable& table) {
  const double angle = path_heading_angle(path);
  if (!path.origin_ref) return std::nullopt;
  for (const auto& e : table.entries) {
    if (e.from_rid == path.origin_ref->rid && e.from_lid == path.origin_ref->lid &&
        e.interval.contains(angle))
      return e.to_lid;
  }
  return std::nullopt;
}

LaneChange classify_lane_change(const PathRecord& path, double lane_width) {
  const Vec2 chord = path.points.back() - path.points.front();
  if (chord.norm() <= 1e-12) throw DegeneratePath();
  const double cos_from_right = chord.dot(Vec2(0, -1)) / chord.norm();
  const bool obtuse = cos_from_right < -1e-12;
  const bool acute = cos_from_right > 1e-12;
  const double eps = 1e-9;
  if (obtuse && chord.y() >= lane_width - eps) return LaneChange::MovedLeft;
  if (acute && -chord.y() >= lane_width - eps) return LaneChange::MovedRight;
  return LaneChange::SameLane;
}

std::optional<int> lane_from_position(const Vec2& pos, const Segment& segment) {
  if (segment.lpos.empty()) throw MissingLposData(segment.rid);
  if (segment.rpos && !segment.rpos->contains(pos)) return std::nullopt;
  const Vec2 local((pos - segment.frame.origin).dot(segment.frame.axis()),
                   (pos - segment.frame.origin).dot(segment.frame.normal()));
  // A nanometre of slack keeps shared edges shared after the frame rotation.
  for (const auto& [lid, strip] : segment.lpos) {  // std::map: ascending lid
    Box2 grown = strip;
    grown.min().array() -= 1e-9;
    grown.max().array() += 1e-9;
    if (grown.contains(local)) return lid;
  }
  return std::nullopt;
}

}  // namespace roadalarm
