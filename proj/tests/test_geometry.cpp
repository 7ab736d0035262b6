#include <doctest.h>

#include "roadalarm/geometry.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace roadalarm;
using roadalarm::testing::two_lane_segment;

namespace {

PathRecord chord_path(Vec2 end, std::optional<LaneRef> origin = std::nullopt) {
  PathRecord p;
  p.points.push_back(end);
  p.origin_ref = std::move(origin);
  return p;
}

// Fine forward integration of the same turn-rate model, for comparison with
// the closed-form arc steps.
Vec2 integrate_fine(double heading0, double turn_rate_deg, double speed, double duration, double h = 1e-3) {
  Vec2 p = Vec2::Zero();
  double heading = heading0;
  const int n = static_cast<int>(std::lround(duration / h));
  for (int i = 0; i < n; ++i) {
    const double mid = heading + turn_rate_deg * h / 2.0;
    p += speed * h * Vec2(std::cos(mid * EIGEN_PI / 180.0), std::sin(mid * EIGEN_PI / 180.0));
    heading += turn_rate_deg * h;
  }
  return p;
}

// Angular distance on the circle, in degrees.
double circ_diff(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("straight and stationary steps") {
    PathRecord p;
    auto q = record_path_step(p, 0.0, 10.0, 1.0);
    REQUIRE(q.points.size() == 2);
    CHECK(q.points[1].x() == doctest::Approx(10.0));
    CHECK(q.points[1].y() == doctest::Approx(0.0));
    CHECK(p.points.size() == 1);

    auto r = record_path_step(p, 0.0, 0.0, 1.0);
    CHECK(r.points[1].norm() == doctest::Approx(0.0));
  }

  TEST_CASE("quarter turn matches fine integration") {
    PathRecord p;
    for (int i = 0; i < 10; ++i) append_path_step(p, 9.0, 5.0, 1.0);
    CHECK(circ_diff(p.heading_deg, 90.0) < 1.0);
    const Vec2 ref = integrate_fine(0.0, 9.0, 5.0, 10.0);
    CHECK((p.last() - ref).norm() < 1e-3);
  }

  TEST_CASE("straight chord length is n v dt") {
    auto g = roadalarm::testing::rng(1);
    std::uniform_real_distribution<double> speed(0.1, 30.0), dt(0.01, 2.0), head(0.0, 360.0);
    for (int trial = 0; trial < 200; ++trial) {
      PathRecord p;
      p.heading_deg = head(g);
      const double v = speed(g), h = dt(g);
      const int n = 1 + trial % 40;
      for (int i = 0; i < n; ++i) append_path_step(p, 0.0, v, h);
      CHECK(std::abs(path_heading_angle(p) - p.heading_deg) < 1e-6);
      const double chord = (p.last() - p.points.front()).norm();
      CHECK(std::abs(chord - n * v * h) <= 1e-9 * n * v * h);
    }
  }

  TEST_CASE("chord heading") {
    CHECK(path_heading_angle(chord_path({10, 0})) == doctest::Approx(0.0));
    CHECK(path_heading_angle(chord_path({0, 10})) == doctest::Approx(90.0));
    CHECK(path_heading_angle(chord_path({-5, 5})) == doctest::Approx(135.0));
    CHECK_THROWS_AS(path_heading_angle(chord_path({0, 0})), DegeneratePath);
  }

  TEST_CASE("reversed chord differs by half a turn") {
    auto g = roadalarm::testing::rng(2);
    std::uniform_real_distribution<double> c(-100.0, 100.0);
    for (int i = 0; i < 500; ++i) {
      PathRecord p;
      p.points = {Vec2(c(g), c(g)), Vec2(c(g), c(g)), Vec2(c(g), c(g))};
      PathRecord r;
      r.points.assign(p.points.rbegin(), p.points.rend());
      CHECK(circ_diff(path_heading_angle(p) + 180.0, path_heading_angle(r)) < 1e-9);
    }
  }

  TEST_CASE("arrival classification") {
    const LaneRef r1{"R1", 1};
    NeighborTable one{{{"R1", 1, {10, 60}, 2}}};
    CHECK(classify_arrival(chord_path(unit_heading(30.0) * 20, r1), one) == 2);
    CHECK_FALSE(classify_arrival(chord_path(unit_heading(150.0) * 20, r1), one).has_value());

    NeighborTable two{{{"R1", 1, {0, 80}, 2}, {"R1", 1, {100, 170}, 3}}};
    CHECK(classify_arrival(chord_path(unit_heading(135.0) * 20, r1), two) == 3);
    CHECK_THROWS_AS(classify_arrival(chord_path({0, 0}, r1), two), DegeneratePath);
  }

  TEST_CASE("arrival classification agrees with a linear scan over random tables") {
    auto g = roadalarm::testing::rng(3);
    std::uniform_real_distribution<double> deg(0.0, 360.0);
    std::uniform_int_distribution<int> cuts(1, 5);
    for (int trial = 0; trial < 300; ++trial) {
      // Disjoint intervals from sorted cut points, one origin lane.
      std::vector<double> pts;
      const int n = cuts(g);
      for (int i = 0; i < 2 * n; ++i) pts.push_back(deg(g));
      std::sort(pts.begin(), pts.end());
      NeighborTable t;
      for (int i = 0; i < n; ++i)
        if (pts[2 * i] < pts[2 * i + 1]) t.entries.push_back({"R", 1, {pts[2 * i], pts[2 * i + 1]}, 10 + i});
      REQUIRE_NOTHROW(t.validate());
      for (int k = 0; k < 20; ++k) {
        const double h = deg(g);
        std::optional<int> expect;
        int hits = 0;
        for (const auto& e : t.entries)
          if (h >= e.interval.lo_deg && h <= e.interval.hi_deg) {
            expect = e.to_lid;
            ++hits;
          }
        CHECK(hits <= 1);
        const auto got = classify_arrival(chord_path(unit_heading(h) * 50, LaneRef{"R", 1}), t);
        if (expect) {
          // Headings within rounding of an edge may land either side.
          if (got != expect) {
            const auto& e = *std::find_if(t.entries.begin(), t.entries.end(),
                                          [&](const NeighborEntry& x) { return x.to_lid == *expect; });
            CHECK(std::min(std::abs(h - e.interval.lo_deg), std::abs(h - e.interval.hi_deg)) < 1e-9);
          }
        } else if (got) {
          const auto& e = *std::find_if(t.entries.begin(), t.entries.end(),
                                        [&](const NeighborEntry& x) { return x.to_lid == *got; });
          CHECK(std::min(std::abs(h - e.interval.lo_deg), std::abs(h - e.interval.hi_deg)) < 1e-9);
        }
      }
    }
  }

  TEST_CASE("neighbor table validation") {
    NeighborTable bad_order{{{"R", 1, {40, 20}, 2}}};
    CHECK_THROWS_AS(bad_order.validate(), std::invalid_argument);
    NeighborTable overlap{{{"R", 1, {0, 50}, 2}, {"R", 1, {40, 90}, 3}}};
    CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);
    NeighborTable other_origin{{{"R", 1, {0, 50}, 2}, {"Q", 1, {40, 90}, 3}}};
    CHECK_NOTHROW(other_origin.validate());
    CHECK(AngleInterval{-10, 10}.contains(355.0));
    CHECK(AngleInterval{-10, 10}.contains(5.0));
    CHECK_FALSE(AngleInterval{-10, 10}.contains(20.0));
  }

  TEST_CASE("lane change") {
    CHECK(classify_lane_change(chord_path({20, 0})) == LaneChange::SameLane);
    CHECK(classify_lane_change(chord_path({20, 3.5})) == LaneChange::MovedLeft);
    CHECK(classify_lane_change(chord_path({20, -3.5})) == LaneChange::MovedRight);
    CHECK(classify_lane_change(chord_path({20, 2.0})) == LaneChange::SameLane);
    CHECK_THROWS_AS(classify_lane_change(chord_path({0, 0})), DegeneratePath);

    // Mirroring a leftward move across the lane axis gives a rightward one.
    auto g = roadalarm::testing::rng(4);
    std::uniform_real_distribution<double> x(0.5, 60.0), y(0.0, 10.0);
    for (int i = 0; i < 300; ++i) {
      const Vec2 end(x(g), y(g));
      const auto left = classify_lane_change(chord_path(end));
      const auto right = classify_lane_change(chord_path({end.x(), -end.y()}));
      CHECK((left == LaneChange::MovedLeft) == (right == LaneChange::MovedRight));
    }
  }

  TEST_CASE("position to lane") {
    const Segment s = two_lane_segment("AB", 200.0, 30.0, Vec2(5, -3));
    CHECK(lane_from_position(s.lane_point(1, 50.0), s) == 1);
    CHECK(lane_from_position(s.lane_point(2, 50.0), s) == 2);
    CHECK_FALSE(lane_from_position(Vec2(-500, -500), s).has_value());
    // The strips of lid 2 (left) and lid 1 (right) meet on the frame axis.
    const Segment flat = two_lane_segment("X", 200.0, 0.0);
    CHECK(flat.lpos.at(1).contains(Vec2(100, 0)));
    CHECK(flat.lpos.at(2).contains(Vec2(100, 0)));
    CHECK(lane_from_position(Vec2(100, 0), flat) == 1);

    Segment bare = s;
    bare.lpos.clear();
    CHECK_THROWS_AS(lane_from_position(Vec2(0, 0), bare), MissingLposData);
  }

  TEST_CASE("synthetic positions inside a strip resolve to that lane") {
    auto g = roadalarm::testing::rng(5);
    std::uniform_real_distribution<double> along(0.01, 199.99), across(-1.74, 1.74);
    const Segment s = two_lane_segment("AB", 200.0, 0.0);
    for (int i = 0; i < 1000; ++i) {
      const int lid = 1 + i % 2;
      const Vec2 p = s.frame.to_world(along(g), s.lane_offset(lid) + across(g));
      CHECK(lane_from_position(p, s) == lid);
    }
  }
}
