#include "roadalarm/codec.hpp"

#include "roadalarm/bytes.hpp"

namespace roadalarm {

namespace {

enum Tag : std::uint8_t { kRidState = 1, kVeState = 2, kExit = 3, kAlert = 4 };

bool same_box(const Box2& a, const Box2& b) { return a.min() == b.min() && a.max() == b.max(); }

void put_vec(ByteWriter& w, const Vec2& v) {
  w.f64(v.x());
  w.f64(v.y());
}

Vec2 get_vec(ByteReader& r) {
  const double x = r.f64();
  const double y = r.f64();
  return {x, y};
}

void put_count(ByteWriter& w, std::size_t n) {
  if (n > 0xFFFFFFFFu) throw std::length_error("sequence too long to encode");
  w.u32(static_cast<std::uint32_t>(n));
}

template <typename E>
E get_enum(ByteReader& r, std::uint8_t max) {
  const std::uint8_t v = r.u8();
  if (v > max) throw MalformedBytes("enum value out of range");
  return static_cast<E>(v);
}

void encode(ByteWriter& w, const RidStateMsg& m) {
  w.u8(kRidState);
  w.str(m.rid);
  w.f64(m.timestamp);
  if (const auto* nb = std::get_if<NeighborTable>(&m.segment_info)) {
    w.u8(1);
    put_count(w, nb->entries.size());
    for (const auto& e : nb->entries) {
      w.str(e.from_rid);
      w.i32(e.from_lid);
      w.f64(e.interval.lo_deg);
      w.f64(e.interval.hi_deg);
      w.i32(e.to_lid);
    }
  } else {
    const auto& box = std::get<Box2>(m.segment_info);
    w.u8(2);
    put_vec(w, box.min());
    put_vec(w, box.max());
  }
  w.str(m.mrsu_addr);
}

void encode(ByteWriter& w, const VeStateMsg& m) {
  w.u8(kVeState);
  w.str(m.rid);
  w.str(m.mrsu_addr);
  w.f64(m.timestamp);
  if (m.pos) {
    w.u8(2);
    put_vec(w, *m.pos);
  } else {
    w.u8(1);
    w.i32(m.lid_estimate);
    w.f64(m.dist);
  }
  w.f64(m.speed);
  w.u8(static_cast<std::uint8_t>(m.state));
  w.u8(static_cast<std::uint8_t>(m.vtype));
}

void encode(ByteWriter& w, const ExitSignal& m) {
  w.u8(kExit);
  w.raw(m.pseudonym);
  w.str(m.rid);
  w.f64(m.timestamp);
}

void encode(ByteWriter& w, const CongestionAlert& m) {
  w.u8(kAlert);
  w.str(m.rid);
  w.i32(m.lane);
  w.f64(m.center);
  w.u32(m.vehicle_count);
  w.u8(m.includes_emergency ? 1 : 0);
  w.f64(m.timestamp);
  put_count(w, m.positions.size());
  for (const auto& p : m.positions) put_vec(w, p);
}

RidStateMsg decode_rid_state(ByteReader& r) {
  RidStateMsg m;
  m.rid = r.str();
  m.timestamp = r.f64();
  const std::uint8_t kind = r.u8();
  if (kind == 1) {
    NeighborTable nb;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      NeighborEntry e;
      e.from_rid = r.str();
      e.from_lid = r.i32();
      e.interval.lo_deg = r.f64();
      e.interval.hi_deg = r.f64();
      e.to_lid = r.i32();
      nb.entries.push_back(std::move(e));
    }
    m.segment_info = std::move(nb);
  } else if (kind == 2) {
    const Vec2 lo = get_vec(r);
    const Vec2 hi = get_vec(r);
    m.segment_info = Box2(lo, hi);
  } else {
    throw MalformedBytes("unknown segment info kind");
  }
  m.mrsu_addr = r.str();
  return m;
}

VeStateMsg decode_ve_state(ByteReader& r) {
  VeStateMsg m;
  m.rid = r.str();
  m.mrsu_addr = r.str();
  m.timestamp = r.f64();
  const std::uint8_t kind = r.u8();
  if (kind == 1) {
    m.lid_estimate = r.i32();
    m.dist = r.f64();
  } else if (kind == 2) {
    m.pos = get_vec(r);
  } else {
    throw MalformedBytes("unknown location kind");
  }
  m.speed = r.f64();
  m.state = get_enum<Routestate>(r, 2);
  m.vtype = get_enum<VehicleType>(r, 2);
  return m;
}

ExitSignal decode_exit(ByteReader& r) {
  ExitSignal m;
  r.raw(m.pseudonym);
  m.rid = r.str();
  m.timestamp = r.f64();
  return m;
}

CongestionAlert decode_alert(ByteReader& r) {
  CongestionAlert m;
  m.rid = r.str();
  m.lane = r.i32();
  m.center = r.f64();
  m.vehicle_count = r.u32();
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw MalformedBytes("flag out of range");
  m.includes_emergency = flag == 1;
  m.timestamp = r.f64();
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 16) throw MalformedBytes("truncated input");
  for (std::uint32_t i = 0; i < n; ++i) m.positions.push_back(get_vec(r));
  return m;
}

}  // namespace

const char* to_string(Routestate s) {
  switch (s) {
    case Routestate::Idle: return "idle";
    case Routestate::Onroad: return "onroad";
    case Routestate::Parking: return "parking";
  }
  return "?";
}

const char* to_string(VehicleType t) {
  switch (t) {
    case VehicleType::Normal: return "normal";
    case VehicleType::EmergencyActive: return "emergency_active";
    case VehicleType::PublicTransport: return "public_transport";
  }
  return "?";
}

const char* to_string(Variant v) { return v == Variant::S1 ? "s1" : "s2"; }

bool RidStateMsg::operator==(const RidStateMsg& o) const {
  if (rid != o.rid || timestamp != o.timestamp || mrsu_addr != o.mrsu_addr) return false;
  if (segment_info.index() != o.segment_info.index()) return false;
  if (const auto* nb = std::get_if<NeighborTable>(&segment_info)) return *nb == std::get<NeighborTable>(o.segment_info);
  return same_box(std::get<Box2>(segment_info), std::get<Box2>(o.segment_info));
}

bool VeStateMsg::operator==(const VeStateMsg& o) const {
  // S2 messages carry no lane estimate or distance.
  const bool location = pos ? pos == o.pos : (!o.pos && lid_estimate == o.lid_estimate && dist == o.dist);
  return rid == o.rid && mrsu_addr == o.mrsu_addr && timestamp == o.timestamp && location && speed == o.speed &&
         state == o.state && vtype == o.vtype;
}

bool CongestionAlert::operator==(const CongestionAlert& o) const {
  return rid == o.rid && lane == o.lane && center == o.center && vehicle_count == o.vehicle_count &&
         includes_emergency == o.includes_emergency && timestamp == o.timestamp && positions == o.positions;
}

Bytes encode_message(const Message& m) {
  ByteWriter w;
  std::visit([&w](const auto& msg) { encode(w, msg); }, m);
  return w.take();
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Message m;
  switch (r.u8()) {
    case kRidState: m = decode_rid_state(r); break;
    case kVeState: m = decode_ve_state(r); break;
    case kExit: m = decode_exit(r); break;
    case kAlert: m = decode_alert(r); break;
    default: throw MalformedBytes("unknown message tag");
  }
  if (!r.done()) throw MalformedBytes("trailing bytes");
  return m;
}

}  // namespace roadalarm
