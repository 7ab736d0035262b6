#include "roadalarm/adversary.hpp"

#include <cmath>

namespace roadalarm {

const char* to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::Replay: return "replay";
    case AdversaryKind::Forge: return "forge";
    case AdversaryKind::DosFlood: return "dos";
    case AdversaryKind::Jam: return "jam";
    case AdversaryKind::Botnet: return "botnet";
  }
  return "?";
}

ReplayKind replay_kind(std::size_t index, double fast_fraction) {
  const auto fast_before = static_cast<std::size_t>(std::ceil(fast_fraction * static_cast<double>(index) - 1e-9));
  const auto fast_after = static_cast<std::size_t>(std::ceil(fast_fraction * static_cast<double>(index + 1) - 1e-9));
  return fast_after > fast_before ? ReplayKind::Fast : ReplayKind::Stale;
}

std::vector<PlannedReplay> plan_replays(const std::vector<CapturedEnvelope>& captured, const AdversaryConfig& cfg,
                                        double freshness_window) {
  const double stale_delay = cfg.stale_delay > 0 ? cfg.stale_delay : freshness_window + 1.0;
  std::vector<PlannedReplay> out;
  for (const auto& c : captured) {
    if (out.size() >= cfg.count) break;
    const bool is_fast = replay_kind(out.size(), cfg.fast_fraction) == ReplayKind::Fast;
    out.push_back(PlannedReplay{c.envelope, c.captured_at + (is_fast ? cfg.fast_delay : stale_delay),
                                is_fast ? ReplayKind::Fast : ReplayKind::Stale});
  }
  return out;
}

Forger::Forger(std::uint64_t seed) : hsm_("adversary", seed) { hsm_.generate_key("attacker"); }

SignedEnvelope Forger::uncertified(const Bytes& payload, double now, const std::string& claimed_issuer) {
  Certificate cert;
  cert.subject_key = hsm_.public_key("attacker");
  cert.role = Role::Pseudonym;
  cert.issuer = claimed_issuer;
  cert.not_before = 0;
  cert.not_after = 1e9;
  cert.signature = hsm_.sign_raw("attacker", cert.signed_bytes());  // self-signed
  hsm_.install_certificate("attacker", cert);
  hsm_.advance_clock(now);
  return hsm_.sign("attacker", payload);
}

SignedEnvelope Forger::mismatched(const Bytes& payload, const Certificate& stolen, double now) {
  hsm_.install_certificate("attacker", stolen);
  hsm_.advance_clock(now);
  return hsm_.sign("attacker", payload);
}

VeStateMsg botnet_report(const AdversaryConfig& cfg, const Segment& segment, Variant variant,
                         const std::string& mrsu_addr, double along, double now) {
  VeStateMsg m;
  m.rid = segment.rid;
  m.mrsu_addr = mrsu_addr;
  m.timestamp = now;
  if (variant == Variant::S1) {
    m.lid_estimate = cfg.lane;
    m.dist = along;
  } else {
    m.pos = segment.lane_point(cfg.lane, along);
  }
  m.speed = 0;
  m.state = Routestate::Onroad;
  m.vtype = VehicleType::Normal;
  return m;
}

}  // namespace roadalarm
