#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace roadalarm {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Extent2 = Eigen::AlignedBox<Scalar, 2>;

using Vec2 = Point2<double>;
using Box2 = Extent2<double>;

inline constexpr double kDefaultLaneWidth = 3.5;

/// Degrees in [0, 360).
template <typename Scalar>
Scalar wrap_degrees(Scalar deg) {
  Scalar r = std::fmod(deg, Scalar(360));
  if (r < 0) r += Scalar(360);
  if (r >= Scalar(360)) r -= Scalar(360);
  return r;
}

template <typename Scalar>
Scalar radians(Scalar deg) {
  return deg * Scalar(EIGEN_PI) / Scalar(180);
}

template <typename Scalar>
Scalar degrees(Scalar rad) {
  return rad * Scalar(180) / Scalar(EIGEN_PI);
}

template <typename Scalar>
Point2<Scalar> unit_heading(Scalar deg) {
  const Scalar r = radians(deg);
  return Point2<Scalar>(std::cos(r), std::sin(r));
}

/// Angle of a planar vector against +x, in [0, 360).
template <typename Derived>
typename Derived::Scalar heading_of(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  return wrap_degrees<S>(degrees<S>(std::atan2(v.y(), v.x())));
}

enum class Direction { Right, Left };

struct LaneRef {
  std::string rid;
  int lid = 0;
  auto operator<=>(const LaneRef&) const = default;
  std::string str() const { return rid + "/" + std::to_string(lid); }
};

struct Lane {
  int lid = 0;
  double length_m = 0;
  double avg_speed_limit = 0;
  Direction direction = Direction::Right;
};

/// Closed interval of headings. Intervals may straddle 0 deg (e.g. [-10, 10]).
struct AngleInterval {
  double lo_deg = 0;
  double hi_deg = 0;

  bool contains(double deg) const;
  bool overlaps(const AngleInterval& other) const;
  bool operator==(const AngleInterval&) const = default;
};

struct NeighborEntry {
  std::string from_rid;
  int from_lid = 0;
  AngleInterval interval;
  int to_lid = 0;
  bool operator==(const NeighborEntry&) const = default;
};

struct NeighborTable {
  std::vector<NeighborEntry> entries;

  /// Throws std::invalid_argument on lo >= hi or overlapping intervals
  /// for the same origin lane.
  void validate() const;
  bool has_origin(const LaneRef& from) const;
  bool operator==(const NeighborTable&) const = default;
};

/// Local frame of a segment: x runs from the `from` end to the `to` end.
struct SegmentFrame {
  Vec2 origin = Vec2::Zero();
  double heading_deg = 0;

  Vec2 axis() const { return unit_heading(heading_deg); }
  Vec2 normal() const { return unit_heading(heading_deg + 90.0); }
  Vec2 to_world(double x, double y) const { return origin + x * axis() + y * normal(); }
  double along(const Vec2& world) const { return (world - origin).dot(axis()); }
};

struct Segment {
  std::string rid;
  std::vector<Lane> lanes;  // ordered left edge to right edge, relative to the frame axis
  std::vector<std::string> rsu_ids;
  std::string mrsu_id;
  NeighborTable neighbor_table;
  SegmentFrame frame;
  double lane_width = kDefaultLaneWidth;
  std::string from_intersection;
  std::string to_intersection;
  std::optional<Box2> rpos;  // world axis-aligned
  std::map<int, Box2> lpos;  // frame coordinates: x along the axis, y to the left

  const Lane& lane(int lid) const;
  bool has_lane(int lid) const;
  double length() const;
  /// Lateral offset of the lane center from the frame axis.
  double lane_offset(int lid) const;
  /// World position after travelling s meters along the lane.
  Vec2 lane_point(int lid, double s) const;
  double lane_heading(int lid) const;
  const std::string& lane_start_intersection(int lid) const;
  const std::string& lane_end_intersection(int lid) const;
  Box2 lane_strip(int lid) const;
  /// Fills rpos and lpos from the frame geometry.
  void derive_extents();
};

struct Intersection {
  std::string id;
  Vec2 position = Vec2::Zero();
  std::vector<std::string> light_ids;
  std::string lbs_id;
  std::vector<std::pair<LaneRef, LaneRef>> movements;  // (incoming lane, outgoing lane)
};

struct RoadNetwork {
  std::vector<Segment> segments;
  std::vector<Intersection> intersections;
  std::map<std::string, std::set<std::string>> lbs_neighbor_links;

  const Segment& segment(const std::string& rid) const;
  const Segment* find_segment(const std::string& rid) const;
  const Intersection& intersection(const std::string& id) const;
  const Intersection* find_intersection(const std::string& id) const;
  const Intersection& intersection_of_lbs(const std::string& lbs_id) const;
  bool has_lane(const LaneRef& ref) const;
  /// Light controlling the end of an incoming lane.
  static std::string light_id(const LaneRef& incoming) { return incoming.str(); }
  void validate() const;
};

class DegeneratePath : public std::runtime_error {
 public:
  DegeneratePath() : std::runtime_error("path start and end coincide") {}
};

class MissingLposData : public std::runtime_error {
 public:
  explicit MissingLposData(const std::string& rid)
      : std::runtime_error("segment " + rid + " has no lane strips") {}
};

/// Dead-reckoned track since the last segment acceptance. Points are offsets
/// from the reset point in the reference frame whose +x is the "horizontal".
struct PathRecord {
  std::vector<Vec2> points{Vec2::Zero()};
  std::optional<LaneRef> origin_ref;
  double heading_deg = 0;
  double gain = 1.0;  // heading rate per unit wheel angle

  const Vec2& last() const { return points.back(); }
  /// Start a new record at the current point, keeping the heading.
  void reset(std::optional<LaneRef> origin);
};

/// heading += gain * wheel_angle * dt; displacement is the exact arc for a
/// constant turn rate over the step.
void append_path_step(PathRecord& path, double wheel_angle_deg, double speed, double dt);
PathRecord record_path_step(const PathRecord& path, double wheel_angle_deg, double speed, double dt);

double path_heading_angle(const PathRecord& path);

std::optional<int> classify_arrival(const PathRecord& path, const NeighborTable& table);

enum class LaneChange { SameLane, MovedLeft, MovedRight };

/// `path` must be expressed in the lane frame (+x along the lane axis, +y to
/// the left). The angle is measured from the rightward lane normal, so a
/// leftward shift reads obtuse and a rightward shift acute.
LaneChange classify_lane_change(const PathRecord& path, double lane_width = kDefaultLaneWidth);

/// Lowest lid wins on shared strip boundaries.
std::optional<int> lane_from_position(const Vec2& pos, const Segment& segment);

}  // namespace roadalarm
