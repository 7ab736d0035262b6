#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "roadalarm/geometry.hpp"
#include "roadalarm/identity.hpp"

namespace roadalarm {

enum class Routestate : std::uint8_t { Idle = 0, Onroad = 1, Parking = 2 };
enum class VehicleType : std::uint8_t { Normal = 0, EmergencyActive = 1, PublicTransport = 2 };
enum class Variant : std::uint8_t { S1 = 1, S2 = 2 };

const char* to_string(Routestate s);
const char* to_string(VehicleType t);
const char* to_string(Variant v);

/// Segment announcement from a secondary RSU.
struct RidStateMsg {
  std::string rid;
  double timestamp = 0;
  std::variant<NeighborTable, Box2> segment_info;  // S1 table or S2 extent
  std::string mrsu_addr;
  bool operator==(const RidStateMsg& o) const;
};

/// Periodic vehicle status. S1 fills lid_estimate and dist, S2 fills pos.
struct VeStateMsg {
  std::string rid;
  std::string mrsu_addr;
  double timestamp = 0;
  int lid_estimate = 0;
  double dist = 0;
  std::optional<Vec2> pos;
  double speed = 0;
  Routestate state = Routestate::Onroad;
  VehicleType vtype = VehicleType::Normal;
  bool operator==(const VeStateMsg& o) const;
};

struct ExitSignal {
  PublicKey pseudonym{};
  std::string rid;
  double timestamp = 0;
  bool operator==(const ExitSignal&) const = default;
};

struct CongestionAlert {
  std::string rid;
  int lane = 0;  // 0 when the lane is left to the receiving LBS
  double center = 0;
  std::uint32_t vehicle_count = 0;
  bool includes_emergency = false;
  double timestamp = 0;
  std::vector<Vec2> positions;
  bool operator==(const CongestionAlert& o) const;
};

using Message = std::variant<RidStateMsg, VeStateMsg, ExitSignal, CongestionAlert>;

/// Canonical byte form, see docs/wire-format.md.
Bytes encode_message(const Message& m);
/// Throws MalformedBytes on unknown tags, truncation or trailing bytes.
Message decode_message(std::span<const std::uint8_t> bytes);

template <typename T>
std::optional<T> decode_as(std::span<const std::uint8_t> bytes) {
  Message m = decode_message(bytes);
  if (auto* p = std::get_if<T>(&m)) return std::move(*p);
  return std::nullopt;
}

}  // namespace roadalarm
