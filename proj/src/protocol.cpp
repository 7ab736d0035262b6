#include "roadalarm/protocol.hpp"

#include <algorithm>

#include "roadalarm/bytes.hpp"

namespace roadalarm {

void check_transition(Routestate from, Routestate to) {
  using R = Routestate;
  const bool ok = (from == R::Idle && to == R::Onroad) || (from == R::Onroad && to == R::Parking) ||
                  (from == R::Parking && to == R::Onroad) || (from == R::Onroad && to == R::Idle);
  if (!ok) throw IllegalTransition(from, to);
}

const char* to_string(RidStateOutcome o) {
  switch (o) {
    case RidStateOutcome::Accepted: return "Accepted";
    case RidStateOutcome::Inconsistent: return "Inconsistent";
    case RidStateOutcome::CertError: return "CertError";
    case RidStateOutcome::SignatureError: return "SignatureError";
    case RidStateOutcome::StaleTimestamp: return "StaleTimestamp";
    case RidStateOutcome::Malformed: return "Malformed";
  }
  return "?";
}

Rsu::Rsu(std::string id, RidStateMsg announcement, Vec2 position, double range, std::unique_ptr<Hsm> hsm,
         std::string key_ref, ProtocolTiming timing)
    : id_(std::move(id)),
      announcement_(std::move(announcement)),
      position_(position),
      range_(range),
      hsm_(std::move(hsm)),
      key_ref_(std::move(key_ref)),
      timing_(timing) {}

std::optional<SignedEnvelope> Rsu::broadcast_tick(double now) {
  if (timing_.gated) {
    if (!last_arrival_ || now < *last_arrival_ || now > *last_arrival_ + timing_.broadcast_window) return std::nullopt;
  }
  if (next_emit_ && now < *next_emit_ - 1e-9) return std::nullopt;
  next_emit_ = now + timing_.broadcast_period;
  RidStateMsg msg = announcement_;
  msg.timestamp = now;
  hsm_->advance_clock(now);
  return hsm_->sign(key_ref_, encode_message(msg));
}

SignedEnvelope Rsu::exit_signal(const PublicKey& pseudonym, double now) {
  hsm_->advance_clock(now);
  return hsm_->sign(key_ref_, encode_message(ExitSignal{pseudonym, announcement_.rid, now}));
}

Vehicle::Vehicle(std::string id, Variant variant, VehicleType vtype, std::unique_ptr<Hsm> hsm,
                 LongTermCredential credential, TrustAnchors anchors, ProtocolTiming timing, CertificateAuthority* ca)
    : id_(std::move(id)),
      variant_(variant),
      vtype_(vtype),
      hsm_(std::move(hsm)),
      credential_(std::move(credential)),
      anchors_(std::move(anchors)),
      timing_(timing),
      ca_(ca) {}

void Vehicle::transition(Routestate to) {
  check_transition(state_, to);
  state_ = to;
}

void Vehicle::spawn(const std::string& rid, int lid, const Vec2& position, double heading_deg) {
  if (state_ != Routestate::Idle) throw std::logic_error("spawn of a vehicle that is not idle");
  bootstrap_ = std::make_pair(rid, lid);
  position_ = position;
  path_ = PathRecord{};
  path_.heading_deg = heading_deg;
}

RidStateOutcome Vehicle::handle_rid_state(const SignedEnvelope& env, double now) {
  std::optional<RidStateMsg> msg;
  try {
    msg = decode_as<RidStateMsg>(env.payload);
  } catch (const MalformedBytes&) {
    return RidStateOutcome::Malformed;
  }
  if (!msg) return RidStateOutcome::Malformed;
  if (state_ != Routestate::Idle) return RidStateOutcome::Inconsistent;

  const bool bootstrap = bootstrap_ && bootstrap_->first == msg->rid;
  int lid = 0;
  if (variant_ == Variant::S1) {
    const auto* nb = std::get_if<NeighborTable>(&msg->segment_info);
    if (!nb) return RidStateOutcome::Inconsistent;
    if (bootstrap) {
      lid = bootstrap_->second;
    } else {
      if (!path_.origin_ref || !nb->has_origin(*path_.origin_ref)) return RidStateOutcome::Inconsistent;
      std::optional<int> arrival;
      try {
        arrival = classify_arrival(path_, *nb);
      } catch (const DegeneratePath&) {
        return RidStateOutcome::Inconsistent;
      }
      if (!arrival) {
        // Heading outside every interval: fall back to the first listed target.
        for (const auto& e : nb->entries)
          if (e.from_rid == path_.origin_ref->rid && e.from_lid == path_.origin_ref->lid) {
            arrival = e.to_lid;
            break;
          }
        ++unclassified_;
      }
      lid = *arrival;
    }
  } else {
    const auto* box = std::get_if<Box2>(&msg->segment_info);
    if (!box || !box->contains(position_)) return RidStateOutcome::Inconsistent;
  }

  if (auto err = check_envelope(env, anchors_, now, &certs_)) {
    switch (*err) {
      case VerifyError::SignatureError: return RidStateOutcome::SignatureError;
      case VerifyError::StaleTimestamp: return RidStateOutcome::StaleTimestamp;
      default: return RidStateOutcome::CertError;
    }
  }
  if (env.certificate.role != Role::Rsu) return RidStateOutcome::CertError;

  transition(Routestate::Onroad);
  rid_ = msg->rid;
  lid_estimate_ = lid;
  dist_ = 0;
  path_.reset(LaneRef{rid_, lid});
  mrsu_addr_ = msg->mrsu_addr;
  if (pool_.unused() == 0) {
    if (!ca_) throw PseudonymPoolExhausted();
    pool_.add(ca_->issue_pseudonyms(credential_, *hsm_, timing_.pseudonym_batch, now));
    ++reissues_;
  }
  pool_.rotate(rid_);
  last_send_ = now;
  parking_sent_ = 0;
  bootstrap_.reset();
  return RidStateOutcome::Accepted;
}

SignedEnvelope Vehicle::sign_status(double now) {
  const Pseudonym* p = pool_.active();
  if (!p || p->used_on_segment != rid_) throw std::logic_error("status signed under a pseudonym of another segment");
  VeStateMsg msg;
  msg.rid = rid_;
  msg.mrsu_addr = mrsu_addr_;
  msg.timestamp = now;
  if (variant_ == Variant::S1) {
    msg.lid_estimate = lid_estimate_;
    msg.dist = dist_;
  } else {
    msg.pos = position_;
  }
  msg.speed = speed_;
  msg.state = state_;
  msg.vtype = vtype_;
  hsm_->advance_clock(now);
  return hsm_->sign(p->key_ref, encode_message(msg));
}

std::optional<SignedEnvelope> Vehicle::status_tick(double now) {
  if (state_ == Routestate::Idle) return std::nullopt;
  if (state_ == Routestate::Parking && parking_sent_ >= timing_.parking_reports) return std::nullopt;
  if (now - last_send_ < timing_.status_period - 1e-9) return std::nullopt;
  SignedEnvelope env = sign_status(now);
  last_send_ = now;
  if (state_ == Routestate::Parking) ++parking_sent_;
  return env;
}

void Vehicle::update_motion(const MotionSample& m) {
  speed_ = m.speed;
  position_ = m.position;
  append_path_step(path_, m.wheel_angle_deg, m.speed, m.dt);
  if (state_ == Routestate::Onroad) {
    dist_ += m.speed * m.dt;
    if (m.lane_length > 0) dist_ = std::min(dist_, m.lane_length);
  }
}

void Vehicle::dead_reckon(double wheel_angle_deg, double speed, double dt) {
  append_path_step(path_, wheel_angle_deg, speed, dt);
}

void Vehicle::park(double) {
  transition(Routestate::Parking);
  parking_sent_ = 0;
}

void Vehicle::unpark(double) { transition(Routestate::Onroad); }

void Vehicle::exit_segment() { transition(Routestate::Idle); }

}  // namespace roadalarm
