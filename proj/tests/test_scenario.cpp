#include <doctest.h>

#include "roadalarm/experiment.hpp"
#include "roadalarm/scenario.hpp"

#include <filesystem>
#include <string>

using namespace roadalarm;

namespace {

const std::string kHead = R"(schema: roadalarm-scenario/1
name: t
seed: 2
horizon: 30
intersections:
  - {id: A, pos: [0, 0]}
  - {id: B, pos: [200, 0]}
segments:
  - {id: AB, from: A, to: B, lanes: [{lid: 2, direction: left}, {lid: 1, direction: right}]}
)";

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text, "t.yaml");
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("every shipped scenario loads") {
    int n = 0;
    for (const auto& f : std::filesystem::directory_iterator(ROADALARM_SCENARIO_DIR)) {
      if (f.path().extension() != ".yaml") continue;
      CAPTURE(f.path().string());
      const Scenario sc = load_scenario(f.path().string());
      CHECK_FALSE(sc.name.empty());
      CHECK_FALSE(sc.network.segments.empty());
      for (const auto& [iid, plan] : sc.plans) CHECK_NOTHROW(plan.validate());
      ++n;
    }
    CHECK(n >= 7);
  }

  TEST_CASE("defaults and overrides") {
    const Scenario sc = parse_scenario(kHead);
    CHECK(sc.variant == Variant::S1);
    CHECK(sc.controller == ControllerKind::AlertEnabled);
    CHECK(sc.tick == 0.5);
    CHECK(sc.control.rebalance.step == 5);
    const Scenario s2 = parse_scenario(kHead + "variant: s2\ncontroller: fixed\ncontrol: {step: 6}\n");
    CHECK(s2.variant == Variant::S2);
    CHECK(s2.controller == ControllerKind::Fixed);
    CHECK(s2.control.rebalance.step == 6);
  }

  TEST_CASE("errors name the field and line") {
    CHECK_THROWS_AS(parse_scenario("a: [1, 2"), ParseError);
    CHECK_THROWS_AS(parse_scenario("- 1\n- 2\n"), ParseError);

    const auto unknown = error_of(kHead + "colour: red\n");
    CHECK(unknown.find("colour") != std::string::npos);
    CHECK(unknown.find("unknown key") != std::string::npos);

    const auto lane = error_of(kHead + "incidents:\n  - {segment: AB, lane: 3, at: 50}\n");
    CHECK(lane.find("t.yaml:11") != std::string::npos);
    CHECK(lane.find("incidents[0].lane") != std::string::npos);

    CHECK(error_of(kHead + "control: {step: 9}\n").find("[4, 7]") != std::string::npos);
    CHECK(error_of(kHead + "variant: s3\n").find("s3") != std::string::npos);
    CHECK(error_of(kHead + "flows:\n  - {name: f, path: [A]}\n").find("path") != std::string::npos);
    CHECK(error_of(kHead + "adversaries:\n  - {kind: meteor}\n").find("meteor") != std::string::npos);
    CHECK_THROWS_AS(parse_scenario(kHead + "plans:\n  A:\n    stages: [{green: 5, lights: [AB/2]}]\n"),
                    ValidationError);
  }

  TEST_CASE("config hash") {
    const std::string h = config_hash("x", 1, "fixed", "s1", 60);
    CHECK(h.size() == 64);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(h == config_hash("x", 1, "fixed", "s1", 60));
    CHECK(h != config_hash("y", 1, "fixed", "s1", 60));
    CHECK(h != config_hash("x", 2, "fixed", "s1", 60));
    CHECK(h != config_hash("x", 1, "alert_enabled", "s1", 60));
    CHECK(h != config_hash("x", 1, "fixed", "s2", 60));
    CHECK(h != config_hash("x", 1, "fixed", "s1", 61));
  }

  TEST_CASE("reports match only their own scenario") {
    const Scenario sc = parse_scenario(kHead);
    const Scenario other = parse_scenario(kHead + "# edited\n");
    const std::string summary = run_scenario(sc).summary_json();
    CHECK(report_matches(summary, sc));
    CHECK_FALSE(report_matches(summary, other));
    CHECK_FALSE(report_matches("{}", sc));
    CHECK_FALSE(report_matches("not json", sc));
  }

  TEST_CASE("compare shares one seed") {
    const Scenario sc = parse_scenario(kHead);
    RunOptions o;
    o.seed = 11;
    const auto r = compare(sc, {ControllerKind::Fixed, ControllerKind::AlertEnabled}, o);
    REQUIRE(r.runs.size() == 2);
    CHECK(r.runs[0].seed == 11);
    CHECK(r.runs[1].seed == 11);
    CHECK(r.runs[0].controller == "fixed");
    CHECK(r.runs[1].controller == "alert_enabled");
    CHECK_THROWS_AS(compare(sc, {ControllerKind::Fixed}), std::invalid_argument);
  }
}
