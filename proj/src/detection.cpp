#include "roadalarm/detection.hpp"

#include <algorithm>
#include <limits>

#include "roadalarm/bytes.hpp"

namespace roadalarm {

void DetectionParams::validate() const {
  if (n_min == 0 || !(window > 0) || !(radius > 0) || !(speed_threshold > 0) || hold_down < 0)
    throw std::invalid_argument("detection parameters must be positive");
}

void SegmentCache::append(const PublicKey& key, const StatusSample& sample) {
  auto& rec = records[key];
  rec.pseudonym = key;
  rec.history.push_back(sample);
  while (rec.history.size() > kRecordCapacity) rec.history.pop_front();
}

namespace {

struct Track {
  const PublicKey* key;
  double lo;
  double hi;
  double latest;
  bool emergency;
  bool slow;  // may join a cluster; others still propose centers
  std::optional<Vec2> pos;
};

std::vector<Cluster> clusters_impl(const SegmentCache& cache, const DetectionParams& p, double now) {
  std::map<int, std::vector<Track>> groups;
  for (const auto& [key, rec] : cache.records) {
    const StatusSample* latest = nullptr;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double vmax = 0;
    for (const auto& s : rec.history) {
      if (s.timestamp < now - p.window || s.timestamp > now) continue;
      lo = std::min(lo, s.along);
      hi = std::max(hi, s.along);
      vmax = std::max(vmax, s.speed);
      latest = &s;
    }
    if (!latest) continue;
    const int group = cache.variant == Variant::S1 ? latest->lid : 0;
    groups[group].push_back(Track{&key, lo, hi, latest->along, latest->vtype == VehicleType::EmergencyActive,
                                  vmax < p.speed_threshold, latest->pos});
  }

  std::vector<Cluster> out;
  for (const auto& [lane, tracks] : groups) {
    std::vector<const Track*> best;
    double best_c = 0;
    for (const auto& cand : tracks) {
      const double c = cand.latest;
      std::vector<const Track*> members;
      for (const auto& e : tracks)
        if (e.slow && e.lo >= c - p.radius && e.hi <= c + p.radius) members.push_back(&e);
      if (members.size() > best.size() || (members.size() == best.size() && !best.empty() && c < best_c)) {
        best = std::move(members);
        best_c = c;
      }
    }
    if (best.size() < p.n_min) continue;
    Cluster cl;
    cl.lane = lane;
    double sum = 0;
    for (const auto* e : best) {
      sum += e->latest;
      cl.members.push_back(*e->key);
      cl.includes_emergency = cl.includes_emergency || e->emergency;
      if (e->pos) cl.positions.push_back(*e->pos);
    }
    cl.center = sum / static_cast<double>(best.size());
    out.push_back(std::move(cl));
  }
  return out;
}

std::optional<CongestionAlert> strongest(const SegmentCache& cache, const DetectionParams& p, double now) {
  const auto clusters = clusters_impl(cache, p, now);
  const Cluster* best = nullptr;
  for (const auto& c : clusters)
    if (!best || c.members.size() > best->members.size()) best = &c;
  if (!best) return std::nullopt;
  CongestionAlert a;
  a.rid = cache.rid;
  a.lane = best->lane;
  a.center = best->center;
  a.vehicle_count = static_cast<std::uint32_t>(best->members.size());
  a.includes_emergency = best->includes_emergency;
  a.timestamp = now;
  a.positions = best->positions;
  return a;
}

}  // namespace

std::vector<Cluster> find_clusters(const SegmentCache& cache, const DetectionParams& params, double now) {
  return clusters_impl(cache, params, now);
}

std::optional<CongestionAlert> check_anomaly_s1(const SegmentCache& cache, const DetectionParams& params, double now) {
  return strongest(cache, params, now);
}

std::optional<CongestionAlert> check_anomaly_s2(const SegmentCache& cache, const DetectionParams& params, double now) {
  return strongest(cache, params, now);
}

const char* to_string(IngestOutcome o) {
  switch (o) {
    case IngestOutcome::CacheUpdated: return "CacheUpdated";
    case IngestOutcome::Purged: return "Purged";
    case IngestOutcome::WrongAddressee: return "WrongAddressee";
    case IngestOutcome::WrongSegment: return "WrongSegment";
    case IngestOutcome::CertError: return "CertError";
    case IngestOutcome::SignatureError: return "SignatureError";
    case IngestOutcome::StaleTimestamp: return "StaleTimestamp";
    case IngestOutcome::Duplicate: return "Duplicate";
    case IngestOutcome::Malformed: return "Malformed";
    case IngestOutcome::OutOfOrder: return "OutOfOrder";
  }
  return "?";
}

const char* to_string(ExitOutcome o) {
  switch (o) {
    case ExitOutcome::Purged: return "Purged";
    case ExitOutcome::Unknown: return "Unknown";
    case ExitOutcome::CertError: return "CertError";
    case ExitOutcome::SignatureError: return "SignatureError";
    case ExitOutcome::StaleTimestamp: return "StaleTimestamp";
    case ExitOutcome::WrongSegment: return "WrongSegment";
    case ExitOutcome::Malformed: return "Malformed";
  }
  return "?";
}

Mrsu::Mrsu(std::string id, const Segment& segment, Variant variant, DetectionParams params, TrustAnchors anchors,
           std::unique_ptr<Hsm> hsm, std::string key_ref, double verifications_per_second)
    : id_(std::move(id)),
      rsu_ids_(segment.rsu_ids),
      params_(params),
      anchors_(std::move(anchors)),
      hsm_(std::move(hsm)),
      key_ref_(std::move(key_ref)),
      verify_cost_(verifications_per_second > 0 ? 1.0 / verifications_per_second : 0.0),
      guard_(anchors_.freshness_window) {
  params_.validate();
  cache_.rid = segment.rid;
  cache_.variant = variant;
  cache_.frame = segment.frame;
}

double Mrsu::schedule_verification(double now) {
  busy_until_ = std::max(now, busy_until_) + verify_cost_;
  return busy_until_;
}

IngestOutcome Mrsu::ingest(const SignedEnvelope& env, double now) {
  std::optional<VeStateMsg> msg;
  try {
    msg = decode_as<VeStateMsg>(env.payload);
  } catch (const MalformedBytes&) {
    return IngestOutcome::Malformed;
  }
  if (!msg) return IngestOutcome::Malformed;
  if (msg->mrsu_addr != id_) return IngestOutcome::WrongAddressee;
  if (msg->rid != cache_.rid) return IngestOutcome::WrongSegment;
  if (msg->pos.has_value() != (cache_.variant == Variant::S2)) return IngestOutcome::Malformed;

  if (auto err = check_envelope(env, anchors_, now, &certs_)) {
    switch (*err) {
      case VerifyError::SignatureError: return IngestOutcome::SignatureError;
      case VerifyError::StaleTimestamp: return IngestOutcome::StaleTimestamp;
      default: return IngestOutcome::CertError;
    }
  }
  if (env.certificate.role != Role::Pseudonym) return IngestOutcome::CertError;
  if (guard_.seen_before(env, now)) return IngestOutcome::Duplicate;

  const PublicKey& key = env.certificate.subject_key;
  ++observed_[key];
  if (msg->state == Routestate::Parking) {
    cache_.purge(key);
    return IngestOutcome::Purged;
  }
  if (auto it = cache_.records.find(key);
      it != cache_.records.end() && !it->second.history.empty() && it->second.history.back().timestamp >= env.timestamp)
    return IngestOutcome::OutOfOrder;

  StatusSample s;
  s.timestamp = env.timestamp;
  s.speed = msg->speed;
  s.state = msg->state;
  s.vtype = msg->vtype;
  if (msg->pos) {
    s.pos = msg->pos;
    s.along = cache_.frame.along(*msg->pos);
  } else {
    s.lid = msg->lid_estimate;
    s.along = msg->dist;
  }
  cache_.append(key, s);
  return IngestOutcome::CacheUpdated;
}

ExitOutcome Mrsu::purge_on_exit(const SignedEnvelope& env, double now) {
  std::optional<ExitSignal> sig;
  try {
    sig = decode_as<ExitSignal>(env.payload);
  } catch (const MalformedBytes&) {
    return ExitOutcome::Malformed;
  }
  if (!sig) return ExitOutcome::Malformed;
  if (auto err = check_envelope(env, anchors_, now, &certs_)) {
    switch (*err) {
      case VerifyError::SignatureError: return ExitOutcome::SignatureError;
      case VerifyError::StaleTimestamp: return ExitOutcome::StaleTimestamp;
      default: return ExitOutcome::CertError;
    }
  }
  const auto& cert = env.certificate;
  if (cert.role != Role::Rsu || std::find(rsu_ids_.begin(), rsu_ids_.end(), cert.subject) == rsu_ids_.end())
    return ExitOutcome::CertError;
  if (sig->rid != cache_.rid) return ExitOutcome::WrongSegment;
  if (cache_.purge(sig->pseudonym)) return ExitOutcome::Purged;
  ++unknown_exits_;
  return ExitOutcome::Unknown;
}

std::vector<SignedEnvelope> Mrsu::detect(double now) {
  std::vector<SignedEnvelope> out;
  for (const auto& c : clusters_impl(cache_, params_, now)) {
    auto it = last_alert_.find(c.lane);
    if (it != last_alert_.end() && now - it->second < params_.hold_down) continue;
    last_alert_[c.lane] = now;
    CongestionAlert a;
    a.rid = cache_.rid;
    a.lane = c.lane;
    a.center = c.center;
    a.vehicle_count = static_cast<std::uint32_t>(c.members.size());
    a.includes_emergency = c.includes_emergency;
    a.timestamp = now;
    a.positions = c.positions;
    hsm_->advance_clock(now);
    out.push_back(hsm_->sign(key_ref_, encode_message(a)));
  }
  return out;
}

}  // namespace roadalarm
