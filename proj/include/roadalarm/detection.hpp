#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roadalarm/codec.hpp"
#include "roadalarm/geometry.hpp"
#include "roadalarm/identity.hpp"

namespace roadalarm {

struct DetectionParams {
  std::size_t n_min = 5;
  double window = 60.0;          // seconds
  double radius = 50.0;          // meters along the road
  double speed_threshold = 2.8;  // m/s
  double hold_down = 30.0;       // per-lane alert debounce
  void validate() const;
};

struct StatusSample {
  double timestamp = 0;
  double along = 0;  // S1 dist, S2 projection on the road axis
  int lid = 0;       // S1 only
  std::optional<Vec2> pos;
  double speed = 0;
  Routestate state = Routestate::Onroad;
  VehicleType vtype = VehicleType::Normal;
};

inline constexpr std::size_t kRecordCapacity = 256;

struct VehicleRecord {
  PublicKey pseudonym{};
  std::deque<StatusSample> history;  // oldest first, at most kRecordCapacity
};

struct SegmentCache {
  std::string rid;
  Variant variant = Variant::S1;
  SegmentFrame frame;
  std::map<PublicKey, VehicleRecord> records;

  /// Appends and evicts the oldest sample beyond capacity.
  void append(const PublicKey& key, const StatusSample& sample);
  bool purge(const PublicKey& key) { return records.erase(key) > 0; }
};

struct Cluster {
  int lane = 0;
  double center = 0;
  std::vector<PublicKey> members;
  bool includes_emergency = false;
  std::vector<Vec2> positions;  // S2 latest positions of the members
};

/// Best qualifying cluster per lane group (S1: latest lid; S2: one group).
std::vector<Cluster> find_clusters(const SegmentCache& cache, const DetectionParams& params, double now);

/// Largest cluster over all lanes, ties to the lower lane.
std::optional<CongestionAlert> check_anomaly_s1(const SegmentCache& cache, const DetectionParams& params, double now);
std::optional<CongestionAlert> check_anomaly_s2(const SegmentCache& cache, const DetectionParams& params, double now);

enum class IngestOutcome {
  CacheUpdated,
  Purged,
  WrongAddressee,
  WrongSegment,
  CertError,
  SignatureError,
  StaleTimestamp,
  Duplicate,
  Malformed,
  OutOfOrder,
};
const char* to_string(IngestOutcome o);

enum class ExitOutcome { Purged, Unknown, CertError, SignatureError, StaleTimestamp, WrongSegment, Malformed };
const char* to_string(ExitOutcome o);

/// Main RSU of one segment.
class Mrsu {
 public:
  Mrsu(std::string id, const Segment& segment, Variant variant, DetectionParams params, TrustAnchors anchors,
       std::unique_ptr<Hsm> hsm, std::string key_ref, double verifications_per_second = 5000.0);

  const std::string& id() const { return id_; }
  const std::string& rid() const { return cache_.rid; }
  const SegmentCache& cache() const { return cache_; }
  const DetectionParams& params() const { return params_; }
  Hsm& hsm() { return *hsm_; }

  IngestOutcome ingest(const SignedEnvelope& env, double now);
  ExitOutcome purge_on_exit(const SignedEnvelope& env, double now);

  /// Runs the detector and returns signed alerts for lanes outside their hold-down.
  std::vector<SignedEnvelope> detect(double now);

  /// Verification budget: completion time of a message arriving at `now`.
  double schedule_verification(double now);
  double busy_until() const { return busy_until_; }

  std::size_t unknown_exits() const { return unknown_exits_; }
  /// Every pseudonym key whose status was accepted here.
  const std::map<PublicKey, std::size_t>& observed_keys() const { return observed_; }

 private:
  std::string id_;
  SegmentCache cache_;
  std::vector<std::string> rsu_ids_;
  DetectionParams params_;
  TrustAnchors anchors_;
  CertificateCache certs_;
  std::unique_ptr<Hsm> hsm_;
  std::string key_ref_;
  double verify_cost_;
  double busy_until_ = 0;
  ReplayGuard guard_;
  std::map<int, double> last_alert_;
  std::size_t unknown_exits_ = 0;
  std::map<PublicKey, std::size_t> observed_;
};

}  // namespace roadalarm
