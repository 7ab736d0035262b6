#pragma once

#include <memory>
#include <optional>
#include <string>

#include "roadalarm/codec.hpp"
#include "roadalarm/geometry.hpp"
#include "roadalarm/identity.hpp"

namespace roadalarm {

struct ProtocolTiming {
  double status_period = 2.0;     // vehicle status interval
  double broadcast_period = 1.0;  // RSU announcement interval
  double broadcast_window = 5.0;  // gated mode: emit for this long after an arrival
  double freshness_window = 5.0;
  bool gated = false;
  int parking_reports = 3;
  std::size_t pseudonym_batch = 4;
};

/// Routestate transitions outside the allowed graph are programming errors.
class IllegalTransition : public std::logic_error {
 public:
  IllegalTransition(Routestate from, Routestate to)
      : std::logic_error(std::string("illegal routestate transition ") + to_string(from) + " -> " + to_string(to)) {}
};

void check_transition(Routestate from, Routestate to);

/// Secondary RSU at one end of a segment.
class Rsu {
 public:
  Rsu(std::string id, RidStateMsg announcement, Vec2 position, double range, std::unique_ptr<Hsm> hsm,
      std::string key_ref, ProtocolTiming timing);

  const std::string& id() const { return id_; }
  const std::string& rid() const { return announcement_.rid; }
  const Vec2& position() const { return position_; }
  double range() const { return range_; }
  Hsm& hsm() { return *hsm_; }

  /// Ungated: one envelope every broadcast_period. Gated: only within
  /// [arrival, arrival + broadcast_window].
  std::optional<SignedEnvelope> broadcast_tick(double now);
  void notify_arrival(double now) { last_arrival_ = now; }
  SignedEnvelope exit_signal(const PublicKey& pseudonym, double now);

 private:
  std::string id_;
  RidStateMsg announcement_;
  Vec2 position_;
  double range_;
  std::unique_ptr<Hsm> hsm_;
  std::string key_ref_;
  ProtocolTiming timing_;
  std::optional<double> next_emit_;
  std::optional<double> last_arrival_;
};

enum class RidStateOutcome { Accepted, Inconsistent, CertError, SignatureError, StaleTimestamp, Malformed };
const char* to_string(RidStateOutcome o);

/// What the vehicle's own sensors report for one kinematics step.
struct MotionSample {
  double dt = 0;
  double speed = 0;
  double wheel_angle_deg = 0;
  Vec2 position = Vec2::Zero();  // S2 positioning fix
  double lane_length = 0;        // caps dist
};

/// Protocol side of a vehicle: routestate, pseudonyms, path record, reports.
class Vehicle {
 public:
  Vehicle(std::string id, Variant variant, VehicleType vtype, std::unique_ptr<Hsm> hsm, LongTermCredential credential,
          TrustAnchors anchors, ProtocolTiming timing, CertificateAuthority* ca);

  const std::string& id() const { return id_; }
  Variant variant() const { return variant_; }
  VehicleType vtype() const { return vtype_; }
  void set_vtype(VehicleType t) { vtype_ = t; }
  Routestate state() const { return state_; }
  const std::string& rid() const { return rid_; }
  int lid_estimate() const { return lid_estimate_; }
  double dist() const { return dist_; }
  double speed() const { return speed_; }
  const Vec2& position() const { return position_; }
  const PathRecord& path() const { return path_; }
  const std::string& mrsu_addr() const { return mrsu_addr_; }
  const PseudonymPool& pseudonyms() const { return pool_; }
  Hsm& hsm() { return *hsm_; }
  std::size_t reissues() const { return reissues_; }
  std::size_t unclassified_arrivals() const { return unclassified_; }

  /// Place a freshly spawned vehicle: it accepts the first announcement of
  /// `rid` without a path check and takes `lid` as its lane estimate.
  void spawn(const std::string& rid, int lid, const Vec2& position, double heading_deg);

  RidStateOutcome handle_rid_state(const SignedEnvelope& env, double now);
  std::optional<SignedEnvelope> status_tick(double now);
  void update_motion(const MotionSample& m);
  /// Path-only step, used for manoeuvres between lanes.
  void dead_reckon(double wheel_angle_deg, double speed, double dt);
  void set_position(const Vec2& p) { position_ = p; }

  void park(double now);
  void unpark(double now);
  /// The segment-end RSU saw the vehicle leave.
  void exit_segment();

 private:
  void transition(Routestate to);
  SignedEnvelope sign_status(double now);

  std::string id_;
  Variant variant_;
  VehicleType vtype_;
  std::unique_ptr<Hsm> hsm_;
  LongTermCredential credential_;
  TrustAnchors anchors_;
  CertificateCache certs_;
  ProtocolTiming timing_;
  CertificateAuthority* ca_;
  PseudonymPool pool_;

  Routestate state_ = Routestate::Idle;
  std::string rid_;
  int lid_estimate_ = 0;
  double dist_ = 0;
  double speed_ = 0;
  Vec2 position_ = Vec2::Zero();
  PathRecord path_;
  std::string mrsu_addr_;
  double last_send_ = 0;
  int parking_sent_ = 0;
  std::optional<std::pair<std::string, int>> bootstrap_;
  std::size_t reissues_ = 0;
  std::size_t unclassified_ = 0;
};

}  // namespace roadalarm
