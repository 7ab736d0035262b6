#include <doctest.h>

#include "oracles/detection_oracle.hpp"
#include "roadalarm/codec.hpp"
#include "roadalarm/detection.hpp"
#include "support.hpp"

#include <random>

using namespace roadalarm;

namespace {

PublicKey key_of(int i) {
  PublicKey k{};
  k[0] = static_cast<std::uint8_t>(i);
  k[31] = 0xaa;
  return k;
}

// `n` stationary vehicles sampled every 2 s over the last 60 s.
SegmentCache parked_cache(const std::vector<double>& dists, double speed = 0.5, int lane = 1) {
  SegmentCache c;
  c.rid = "R";
  for (std::size_t i = 0; i < dists.size(); ++i)
    for (double t = 40; t <= 100; t += 2) {
      StatusSample s;
      s.timestamp = t;
      s.along = dists[i];
      s.lid = lane;
      s.speed = speed;
      c.append(key_of(static_cast<int>(i)), s);
    }
  return c;
}

void expect_match(const std::optional<CongestionAlert>& got, const oracle::Verdict& want, const SegmentCache& c) {
  REQUIRE(got.has_value() == want.alert);
  if (!want.alert) return;
  CHECK(got->lane == want.lane);
  CHECK(got->vehicle_count == want.members.size());
  CHECK(got->center == doctest::Approx(want.center).epsilon(1e-9));
  CHECK(got->includes_emergency == want.emergency);
  if (c.variant == Variant::S2) CHECK(got->positions.size() == want.members.size());
}

}  // namespace

TEST_SUITE("detection") {
  TEST_CASE("stopped platoon raises an alert") {
    const DetectionParams p;  // N=5, 60 s, 50 m, 2.8 m/s
    auto c = parked_cache({500, 504, 508, 511, 513}, 1.0);
    auto a = check_anomaly_s1(c, p, 100.0);
    REQUIRE(a.has_value());
    CHECK(a->vehicle_count == 5);
    CHECK(a->center == doctest::Approx(507.2));
    CHECK(a->lane == 1);
    CHECK_FALSE(a->includes_emergency);
    expect_match(a, oracle::brute_force(c, p, 100.0), c);
  }

  TEST_CASE("one fast vehicle drops the count below the minimum") {
    auto c = parked_cache({500, 504, 508, 511, 513}, 1.0);
    c.records[key_of(2)].history.back().speed = 5.0;
    CHECK_FALSE(check_anomaly_s1(c, DetectionParams{}, 100.0).has_value());
  }

  TEST_CASE("emergency vehicle in the cluster is flagged") {
    auto c = parked_cache({500, 504, 508, 511, 513}, 1.0);
    c.records[key_of(4)].history.back().vtype = VehicleType::EmergencyActive;
    auto a = check_anomaly_s1(c, DetectionParams{}, 100.0);
    REQUIRE(a.has_value());
    CHECK(a->includes_emergency);
  }

  TEST_CASE("position variant projects onto the road axis") {
    const DetectionParams p;
    SegmentCache c;
    c.rid = "R";
    c.variant = Variant::S2;
    c.frame.heading_deg = 120.0;
    c.frame.origin = Vec2(10, 20);
    auto fill = [&](const std::vector<double>& xs) {
      c.records.clear();
      for (std::size_t i = 0; i < xs.size(); ++i)
        for (double t = 40; t <= 100; t += 2) {
          StatusSample s;
          s.timestamp = t;
          s.pos = c.frame.to_world(xs[i], i % 2 ? 1.75 : -1.75);
          s.along = c.frame.along(*s.pos);
          c.append(key_of(static_cast<int>(i)), s);
        }
    };
    fill({300, 305, 310, 312, 318});
    auto a = check_anomaly_s2(c, p, 100.0);
    REQUIRE(a.has_value());
    CHECK(a->positions.size() == 5);
    CHECK(a->lane == 0);
    expect_match(a, oracle::brute_force(c, p, 100.0), c);

    fill({100, 175, 250, 325, 400});  // spread over far more than 2 eps
    CHECK_FALSE(check_anomaly_s2(c, p, 100.0).has_value());
    c.records.clear();
    CHECK_FALSE(check_anomaly_s2(c, p, 100.0).has_value());
  }

  TEST_CASE("agrees with the exhaustive search on random caches") {
    auto g = roadalarm::testing::rng(31);
    std::uniform_real_distribution<double> radius(10, 60), eta(1, 5), window(20, 90);
    std::uniform_int_distribution<int> nmin(2, 6);
    int alerts = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      DetectionParams p;
      p.n_min = static_cast<std::size_t>(nmin(g));
      p.radius = radius(g);
      p.speed_threshold = eta(g);
      p.window = window(g);
      const Variant v = trial % 2 ? Variant::S2 : Variant::S1;
      const auto c = oracle::random_cache(g, v, 1000.0, p);
      const auto want = oracle::brute_force(c, p, 1000.0);
      const auto got = v == Variant::S1 ? check_anomaly_s1(c, p, 1000.0) : check_anomaly_s2(c, p, 1000.0);
      expect_match(got, want, c);
      alerts += want.alert;
      if (want.alert) {
        const auto clusters = find_clusters(c, p, 1000.0);
        bool found = false;
        for (const auto& cl : clusters)
          if (cl.lane == want.lane)
            found = std::set<PublicKey>(cl.members.begin(), cl.members.end()) == want.members;
        CHECK(found);
      }
    }
    // Both outcomes must be well represented for the comparison to mean much.
    CHECK(alerts > 200);
    CHECK(alerts < 800);
  }

  TEST_CASE("adding a qualifying vehicle keeps the alert") {
    auto g = roadalarm::testing::rng(32);
    const DetectionParams p;
    for (int trial = 0; trial < 200; ++trial) {
      auto c = oracle::random_cache(g, Variant::S1, 1000.0, p);
      const auto before = check_anomaly_s1(c, p, 1000.0);
      if (!before) continue;
      StatusSample s;
      s.timestamp = 999.0;
      s.along = before->center;
      s.lid = before->lane;
      s.speed = 0.0;
      c.append(key_of(250), s);
      const auto after = check_anomaly_s1(c, p, 1000.0);
      REQUIRE(after.has_value());
      CHECK(after->vehicle_count >= before->vehicle_count);
      CHECK(after->vehicle_count >= p.n_min);
    }
  }

  TEST_CASE("purged vehicles no longer count") {
    auto c = parked_cache({500, 504, 508, 511, 513}, 1.0);
    REQUIRE(check_anomaly_s1(c, DetectionParams{}, 100.0).has_value());
    CHECK(c.purge(key_of(3)));
    CHECK_FALSE(c.purge(key_of(3)));
    CHECK_FALSE(check_anomaly_s1(c, DetectionParams{}, 100.0).has_value());
  }

  TEST_CASE("records keep a bounded history") {
    SegmentCache c;
    for (int i = 0; i < 1000; ++i) c.append(key_of(0), StatusSample{static_cast<double>(i)});
    CHECK(c.records[key_of(0)].history.size() == kRecordCapacity);
    CHECK(c.records[key_of(0)].history.front().timestamp == 1000.0 - kRecordCapacity);
  }
}

TEST_SUITE("detection") {
  namespace {

  struct Site {
    CertificateAuthority ca{"CA", 17};
    Segment seg = roadalarm::testing::two_lane_segment("R");
    std::unique_ptr<Mrsu> mrsu;
    Hsm end_hsm{"RSU-R-b", 3};
    LongTermCredential end_cred;
    Hsm car{"VE-9", 4};
    LongTermCredential car_cred;
    std::vector<Pseudonym> pseudonyms;

    Site() {
      auto hsm = std::make_unique<Hsm>("MRSU-R", 2);
      auto cred = ca.register_unit("MRSU-R", Role::MainRsu, *hsm, 0);
      mrsu = std::make_unique<Mrsu>("MRSU-R", seg, Variant::S1, DetectionParams{}, ca.anchors(5.0), std::move(hsm),
                                    cred.key_ref);
      end_cred = ca.register_unit("RSU-R-b", Role::Rsu, end_hsm, 0);
      car_cred = ca.register_vehicle("VE-9", car, 0);
      pseudonyms = ca.issue_pseudonyms(car_cred, car, 3, 0);
    }

    SignedEnvelope status(double t, Routestate st = Routestate::Onroad, std::string addr = "MRSU-R",
                          std::string rid = "R", int which = 0) {
      VeStateMsg m;
      m.rid = std::move(rid);
      m.mrsu_addr = std::move(addr);
      m.timestamp = t;
      m.lid_estimate = 1;
      m.dist = 10 * t;
      m.state = st;
      car.advance_clock(t);
      return car.sign(pseudonyms[which].key_ref, encode_message(m));
    }
  };

  }  // namespace

  TEST_CASE("ingest creates, extends and purges records") {
    Site s;
    CHECK(s.mrsu->ingest(s.status(1.0), 1.0) == IngestOutcome::CacheUpdated);
    const auto& key = s.pseudonyms[0].public_key;
    REQUIRE(s.mrsu->cache().records.count(key));
    CHECK(s.mrsu->cache().records.at(key).history.size() == 1);
    CHECK(s.mrsu->ingest(s.status(3.0), 3.0) == IngestOutcome::CacheUpdated);
    CHECK(s.mrsu->cache().records.at(key).history.size() == 2);
    CHECK(s.mrsu->ingest(s.status(5.0, Routestate::Parking), 5.0) == IngestOutcome::Purged);
    CHECK_FALSE(s.mrsu->cache().records.count(key));
  }

  TEST_CASE("ingest drop reasons") {
    Site s;
    const auto env = s.status(1.0);
    CHECK(s.mrsu->ingest(env, 1.0 + 5.0 + 1.0) == IngestOutcome::StaleTimestamp);
    CHECK(s.mrsu->ingest(env, 1.0) == IngestOutcome::CacheUpdated);
    CHECK(s.mrsu->ingest(env, 1.5) == IngestOutcome::Duplicate);
    CHECK(s.mrsu->ingest(s.status(2.0, Routestate::Onroad, "MRSU-X"), 2.0) == IngestOutcome::WrongAddressee);
    CHECK(s.mrsu->ingest(s.status(2.5, Routestate::Onroad, "MRSU-R", "Q"), 2.5) == IngestOutcome::WrongSegment);
    auto bad = s.status(3.0);
    bad.payload.back() ^= 1;
    CHECK(s.mrsu->ingest(bad, 3.0) == IngestOutcome::SignatureError);
    // The long-term vehicle key may not speak for a pseudonym.
    VeStateMsg m;
    m.rid = "R";
    m.mrsu_addr = "MRSU-R";
    m.timestamp = 4.0;
    s.car.advance_clock(4.0);
    CHECK(s.mrsu->ingest(s.car.sign(s.car_cred.key_ref, encode_message(m)), 4.0) == IngestOutcome::CertError);
  }

  TEST_CASE("exit signals purge exactly their pseudonym") {
    Site s;
    REQUIRE(s.mrsu->ingest(s.status(1.0), 1.0) == IngestOutcome::CacheUpdated);
    const auto& key = s.pseudonyms[0].public_key;
    s.end_hsm.advance_clock(2.0);
    const auto exit = s.end_hsm.sign(s.end_cred.key_ref, encode_message(ExitSignal{key, "R", 2.0}));

    // Attacker reuses the RSU certificate with a key of its own.
    Hsm attacker("mallory", 1);
    attacker.generate_key("k");
    attacker.install_certificate("k", s.end_cred.certificate);
    attacker.advance_clock(2.0);
    const auto forged = attacker.sign("k", encode_message(ExitSignal{key, "R", 2.0}));
    CHECK(s.mrsu->purge_on_exit(forged, 2.0) == ExitOutcome::SignatureError);
    CHECK(s.mrsu->cache().records.count(key));

    CHECK(s.mrsu->purge_on_exit(exit, 2.0) == ExitOutcome::Purged);
    CHECK_FALSE(s.mrsu->cache().records.count(key));
    const auto again = s.end_hsm.sign(s.end_cred.key_ref, encode_message(ExitSignal{s.pseudonyms[2].public_key, "R", 2.0}));
    CHECK(s.mrsu->purge_on_exit(again, 2.0) == ExitOutcome::Unknown);
    CHECK(s.mrsu->unknown_exits() == 1);
  }

  TEST_CASE("repeat alerts wait out the hold-down") {
    Site s;
    std::vector<std::unique_ptr<Hsm>> cars;
    std::vector<std::string> refs;
    for (int i = 0; i < 5; ++i) {
      cars.push_back(std::make_unique<Hsm>("car" + std::to_string(i), 100 + i));
      auto cred = s.ca.register_vehicle("car" + std::to_string(i), *cars.back(), 0);
      refs.push_back(s.ca.issue_pseudonyms(cred, *cars.back(), 1, 0).front().key_ref);
    }
    std::vector<double> alert_times;
    for (double t = 2; t <= 200; t += 2) {
      for (int i = 0; i < 5; ++i) {
        VeStateMsg m;
        m.rid = "R";
        m.mrsu_addr = "MRSU-R";
        m.timestamp = t;
        m.lid_estimate = 1;
        m.dist = 100 + i;
        m.speed = 0.2;
        cars[i]->advance_clock(t);
        REQUIRE(s.mrsu->ingest(cars[i]->sign(refs[i], encode_message(m)), t) == IngestOutcome::CacheUpdated);
      }
      for (const auto& env : s.mrsu->detect(t)) {
        CHECK(env.certificate.role == Role::MainRsu);
        CHECK(decode_as<CongestionAlert>(env.payload)->vehicle_count == 5);
        alert_times.push_back(t);
      }
    }
    REQUIRE(alert_times.size() >= 2);
    CHECK(alert_times.front() == 2.0);
    for (std::size_t i = 1; i < alert_times.size(); ++i)
      CHECK(alert_times[i] - alert_times[i - 1] >= DetectionParams{}.hold_down);
  }

  TEST_CASE("detection is deterministic") {
    auto g = roadalarm::testing::rng(33);
    const DetectionParams p;
    for (int i = 0; i < 50; ++i) {
      const auto c = oracle::random_cache(g, Variant::S1, 500.0, p);
      const auto a = check_anomaly_s1(c, p, 500.0);
      const auto b = check_anomaly_s1(c, p, 500.0);
      CHECK(a == b);
    }
  }
}
