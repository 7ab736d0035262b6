#pragma once

#include "roadalarm/geometry.hpp"

#include <random>
#include <string>

namespace roadalarm::testing {

/// Two-lane segment along `heading_deg`: lid 2 runs backwards on the left,
/// lid 1 forwards on the right.
inline Segment two_lane_segment(const std::string& rid, double length = 200.0, double heading_deg = 0.0,
                                Vec2 origin = Vec2::Zero()) {
  Segment s;
  s.rid = rid;
  s.lanes = {Lane{2, length, 13.9, Direction::Left}, Lane{1, length, 13.9, Direction::Right}};
  s.frame.origin = origin;
  s.frame.heading_deg = heading_deg;
  s.from_intersection = rid + "-from";
  s.to_intersection = rid + "-to";
  s.mrsu_id = "MRSU-" + rid;
  s.rsu_ids = {"RSU-" + rid + "-a", "RSU-" + rid + "-b"};
  s.derive_extents();
  return s;
}

inline std::mt19937_64 rng(std::uint64_t salt = 0) { return std::mt19937_64(0x5eed0000ULL + salt); }

}  // namespace roadalarm::testing
