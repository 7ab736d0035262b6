#include <doctest.h>

#include "roadalarm/bytes.hpp"
#include "roadalarm/codec.hpp"
#include "roadalarm/protocol.hpp"
#include "support.hpp"

#include <random>
#include <set>

using namespace roadalarm;

namespace {

struct Bench {
  CertificateAuthority ca{"CA", 5};
  ProtocolTiming timing;
  int next = 0;

  std::unique_ptr<Rsu> rsu(const std::string& rid, std::variant<NeighborTable, Box2> info, Vec2 pos = Vec2::Zero()) {
    const std::string id = "RSU-" + rid + "-" + std::to_string(next++);
    auto hsm = std::make_unique<Hsm>(id, 40 + next);
    auto cred = ca.register_unit(id, Role::Rsu, *hsm, 0);
    RidStateMsg ann{rid, 0, std::move(info), "MRSU-" + rid};
    return std::make_unique<Rsu>(id, ann, pos, 10.0, std::move(hsm), cred.key_ref, timing);
  }

  std::unique_ptr<Vehicle> vehicle(Variant v = Variant::S1) {
    const std::string id = "VE-" + std::to_string(next++);
    auto hsm = std::make_unique<Hsm>(id, 70 + next);
    auto cred = ca.register_vehicle(id, *hsm, 0);
    return std::make_unique<Vehicle>(id, v, VehicleType::Normal, std::move(hsm), cred, ca.anchors(timing.freshness_window),
                                     timing, &ca);
  }
};

SignedEnvelope announce(Rsu& r, double t) {
  auto env = r.broadcast_tick(t);
  REQUIRE(env.has_value());
  return *env;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("ungated and gated broadcast") {
    Bench b;
    auto r = b.rsu("R1", NeighborTable{});
    int n = 0;
    for (double t : {0.0, 1.0, 2.0}) n += r->broadcast_tick(t).has_value();
    CHECK(n == 3);

    b.timing.gated = true;
    b.timing.broadcast_window = 3.0;
    auto g = b.rsu("R1", NeighborTable{});
    CHECK_FALSE(g->broadcast_tick(5.0).has_value());
    g->notify_arrival(10.0);
    CHECK_FALSE(g->broadcast_tick(14.0).has_value());
    auto env = g->broadcast_tick(11.0);
    REQUIRE(env.has_value());
    CHECK(decode_as<RidStateMsg>(env->payload)->timestamp == 11.0);
  }

  TEST_CASE("spawned vehicle accepts its first segment") {
    Bench b;
    auto r = b.rsu("R1", NeighborTable{});
    auto v = b.vehicle();
    v->spawn("R1", 1, Vec2::Zero(), 0.0);
    CHECK(v->handle_rid_state(announce(*r, 1.0), 1.0) == RidStateOutcome::Accepted);
    CHECK(v->state() == Routestate::Onroad);
    CHECK(v->dist() == 0.0);
    CHECK(v->mrsu_addr() == "MRSU-R1");
    REQUIRE(v->pseudonyms().active() != nullptr);
    CHECK(v->pseudonyms().active()->used_on_segment == std::optional<std::string>("R1"));
    // Already on the road: a second announcement is ignored.
    CHECK(v->handle_rid_state(announce(*r, 2.0), 2.0) == RidStateOutcome::Inconsistent);
  }

  TEST_CASE("rid state rejections") {
    Bench b;
    auto v = b.vehicle();
    v->spawn("R1", 1, Vec2::Zero(), 0.0);
    auto r = b.rsu("R1", NeighborTable{});
    const auto old = announce(*r, 0.0);
    CHECK(v->handle_rid_state(old, 10.0) == RidStateOutcome::StaleTimestamp);

    auto tampered = announce(*r, 11.0);
    tampered.signature[5] ^= 0x20;
    CHECK(v->handle_rid_state(tampered, 11.0) == RidStateOutcome::SignatureError);
    CHECK(v->state() == Routestate::Idle);

    auto s2 = b.vehicle(Variant::S2);
    auto box_rsu = b.rsu("R2", Box2(Vec2(0, -5), Vec2(100, 5)));
    s2->spawn("R2", 1, Vec2(300, 0), 0.0);
    CHECK(s2->handle_rid_state(announce(*box_rsu, 1.0), 1.0) == RidStateOutcome::Inconsistent);
    s2->set_position(Vec2(50, 0));
    CHECK(s2->handle_rid_state(announce(*box_rsu, 2.0), 2.0) == RidStateOutcome::Accepted);
  }

  TEST_CASE("arrival check against the recorded path") {
    Bench b;
    auto first = b.rsu("R1", NeighborTable{});
    // Left turn from R1/1 lands on R2/1; straight on lands on R2/2.
    NeighborTable nb{{{"R1", 1, {60, 120}, 1}, {"R1", 1, {-30, 30}, 2}}};
    auto second = b.rsu("R2", nb);

    auto v = b.vehicle();
    v->spawn("R1", 1, Vec2::Zero(), 0.0);
    REQUIRE(v->handle_rid_state(announce(*first, 0.0), 0.0) == RidStateOutcome::Accepted);
    v->exit_segment();
    for (int i = 0; i < 10; ++i) v->dead_reckon(9.0, 5.0, 1.0);
    v->dead_reckon(0.0, 50.0, 1.0);
    CHECK(v->handle_rid_state(announce(*second, 1.0), 1.0) == RidStateOutcome::Accepted);
    CHECK(v->lid_estimate() == 1);

    auto w = b.vehicle();
    w->spawn("R3", 1, Vec2::Zero(), 0.0);
    auto other = b.rsu("R3", NeighborTable{});
    REQUIRE(w->handle_rid_state(announce(*other, 0.0), 0.0) == RidStateOutcome::Accepted);
    w->exit_segment();
    w->dead_reckon(0.0, 10.0, 1.0);
    // The table knows nothing about arrivals from R3.
    CHECK(w->handle_rid_state(announce(*second, 2.0), 2.0) == RidStateOutcome::Inconsistent);
  }

  TEST_CASE("status cadence, parking and idle") {
    Bench b;
    auto r = b.rsu("R1", NeighborTable{});
    auto v = b.vehicle();
    CHECK_FALSE(v->status_tick(0.0).has_value());
    v->spawn("R1", 1, Vec2::Zero(), 0.0);
    REQUIRE(v->handle_rid_state(announce(*r, 0.0), 0.0) == RidStateOutcome::Accepted);

    std::vector<double> stamps;
    for (int k = 1; k <= 20; ++k)
      if (auto env = v->status_tick(0.5 * k)) {
        auto msg = decode_as<VeStateMsg>(env->payload);
        REQUIRE(msg.has_value());
        CHECK(msg->rid == "R1");
        CHECK(msg->mrsu_addr == "MRSU-R1");
        CHECK(env->certificate.subject_key == v->pseudonyms().active()->public_key);
        stamps.push_back(env->timestamp);
      }
    CHECK(stamps.size() == 5);
    CHECK(std::adjacent_find(stamps.begin(), stamps.end(), std::greater_equal<>{}) == stamps.end());

    v->park(10.0);
    int parked = 0;
    for (int k = 1; k <= 20; ++k)
      if (auto env = v->status_tick(10.0 + 2.0 * k)) {
        CHECK(decode_as<VeStateMsg>(env->payload)->state == Routestate::Parking);
        ++parked;
      }
    CHECK(parked == b.timing.parking_reports);
  }

  TEST_CASE("dist bookkeeping") {
    Bench b;
    auto r = b.rsu("R1", NeighborTable{});
    auto v = b.vehicle();
    v->spawn("R1", 1, Vec2::Zero(), 0.0);
    REQUIRE(v->handle_rid_state(announce(*r, 0.0), 0.0) == RidStateOutcome::Accepted);
    v->update_motion({1.0, 10.0, 0.0, Vec2::Zero(), 900.0});
    CHECK(v->dist() == 10.0);
    v->update_motion({1.0, 0.0, 0.0, Vec2::Zero(), 900.0});
    CHECK(v->dist() == 10.0);
    for (int i = 0; i < 60; ++i) v->update_motion({1.0, 15.0, 0.0, Vec2::Zero(), 900.0});
    CHECK(v->dist() == 900.0);
  }

  TEST_CASE("exit signals") {
    Bench b;
    auto r = b.rsu("R1", NeighborTable{});
    auto v1 = b.vehicle();
    auto v2 = b.vehicle();
    double t = 0.0;
    for (auto* v : {v1.get(), v2.get()}) {
      v->spawn("R1", 1, Vec2::Zero(), 0.0);
      REQUIRE(v->handle_rid_state(announce(*r, t), t) == RidStateOutcome::Accepted);
      t += 1.0;
    }
    const auto p1 = v1->pseudonyms().active()->public_key;
    const auto e1 = r->exit_signal(p1, 5.0);
    const auto e2 = r->exit_signal(v2->pseudonyms().active()->public_key, 5.0);
    CHECK(decode_as<ExitSignal>(e1.payload) == std::optional<ExitSignal>(ExitSignal{p1, "R1", 5.0}));
    CHECK(e1.payload != e2.payload);
    CHECK(e1.signature != e2.signature);
    v1->exit_segment();
    CHECK(v1->state() == Routestate::Idle);
    CHECK_FALSE(v1->status_tick(20.0).has_value());
  }

  TEST_CASE("routestate transition graph") {
    using R = Routestate;
    const std::set<std::pair<R, R>> allowed{{R::Idle, R::Onroad}, {R::Onroad, R::Parking}, {R::Parking, R::Onroad},
                                            {R::Onroad, R::Idle}};
    for (R a : {R::Idle, R::Onroad, R::Parking})
      for (R c : {R::Idle, R::Onroad, R::Parking}) {
        if (allowed.count({a, c}))
          CHECK_NOTHROW(check_transition(a, c));
        else
          CHECK_THROWS_AS(check_transition(a, c), IllegalTransition);
      }
  }
}
