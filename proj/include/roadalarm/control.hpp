#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "roadalarm/codec.hpp"
#include "roadalarm/geometry.hpp"
#include "roadalarm/identity.hpp"

namespace roadalarm {

inline constexpr double kMinCycle = 20.0;
inline constexpr double kMaxCycle = 240.0;
inline constexpr double kMinStep = 4.0;
inline constexpr double kMaxStep = 7.0;

enum class LightState { Red, Yellow, Green };
const char* to_string(LightState s);
using LightStates = std::map<std::string, LightState>;

struct Stage {
  std::vector<std::string> lights;
  double green = 0;
};

/// Stages run in order; each green is followed by a fixed yellow.
struct PhasePlan {
  std::vector<Stage> stages;
  double yellow = 3.0;
  double min_green = 10.0;

  double cycle_length() const;
  std::set<std::string> lights() const;
  int stage_of(const std::string& light) const;  // -1 if absent
  /// Throws std::invalid_argument: empty plan, short green, light in two
  /// stages, or cycle outside [kMinCycle, kMaxCycle].
  void validate() const;
};

double clamp_cycle_length(double seconds);

/// Pure function of the plan and now mod cycle.
LightStates fixed_time_tick(const PhasePlan& plan, double now);

/// Whitelist check: every non-red light belongs to one stage of `baseline`.
bool mmu_safe(const LightStates& states, const PhasePlan& baseline);

enum class CommandKind { Rebalance, Divert, Decay, Adaptive };
const char* to_string(CommandKind k);

struct ScheduleCommand {
  std::string lbs;
  CommandKind kind = CommandKind::Rebalance;
  std::vector<double> stage_delta;            // seconds per stage
  std::map<std::string, double> green_delta;  // same deltas by light id
  double issued_at = 0;
  double effective_from = -1;  // set when the runner applies it
  std::string cause;
};

class NoFeasibleShift : public std::runtime_error {
 public:
  explicit NoFeasibleShift(const std::string& why) : std::runtime_error("no feasible green shift: " + why) {}
};

/// Moves min(step, headroom) seconds of green from one stage to another.
/// Throws NoFeasibleShift when fewer than kMinStep seconds can move.
ScheduleCommand shift_green(const PhasePlan& plan, int from_stage, int to_stage, double step, double now);

/// Applies a command; the result is validated.
PhasePlan apply_command(const PhasePlan& plan, const ScheduleCommand& cmd);

ScheduleCommand inverse(const ScheduleCommand& cmd, double now);

struct RebalanceParams {
  double step = 5.0;
  double emergency_step = 7.0;
};

/// Takes green from the longest stage serving a feeding light and gives it to
/// the non-feeding stage with the highest queue pressure.
ScheduleCommand rebalance_green(const PhasePlan& plan, const std::set<std::string>& feeding_lights,
                                const std::map<std::string, double>& light_pressure, bool emergency,
                                const RebalanceParams& params, double now);

struct DetectorCounts {
  double demand = 0;     // advance loop crossings
  double discharge = 0;  // stop-line crossings
};

struct AdaptiveParams {
  double saturation_flow = 0.5;  // veh/s per lane during green
  double grow_above = 0.9;
  double shrink_below = 0.5;
  double tie = 0.05;
};

/// Per stage: the largest demand / (saturation_flow * green) over its lights.
std::vector<double> degrees_of_saturation(const PhasePlan& plan, const std::map<std::string, DetectorCounts>& counts,
                                          const AdaptiveParams& params);

std::optional<ScheduleCommand> adaptive_baseline_tick(const PhasePlan& plan,
                                                      const std::map<std::string, DetectorCounts>& counts,
                                                      const AdaptiveParams& params, double now);

/// Runs a plan over time; commands take effect at the next phase boundary.
class PlanRunner {
 public:
  explicit PlanRunner(PhasePlan baseline, double start = 0);

  void tick(double now);
  void submit(ScheduleCommand cmd);
  LightStates lights() const;

  const PhasePlan& baseline() const { return baseline_; }
  const PhasePlan& plan() const { return plan_; }
  /// Plan after all pending commands.
  PhasePlan projected() const;
  int stage() const { return stage_; }
  bool in_yellow() const { return yellow_; }
  double phase_end() const { return phase_end_; }
  std::size_t cycles() const { return cycles_; }
  std::vector<ScheduleCommand> take_applied();

 private:
  void apply_pending(double t);

  PhasePlan baseline_;
  PhasePlan plan_;
  std::deque<ScheduleCommand> pending_;
  std::vector<ScheduleCommand> applied_;
  int stage_ = 0;
  bool yellow_ = false;
  double phase_end_ = 0;
  std::size_t cycles_ = 0;
};

enum class ControllerKind { Fixed, Adaptive, AlertEnabled };
const char* to_string(ControllerKind k);
ControllerKind controller_from_string(const std::string& s);

struct ControlParams {
  RebalanceParams rebalance;
  AdaptiveParams adaptive;
  int hop_limit = 1;
  double hold = 120.0;  // alert memory before decay and for diversion
};

struct AlertDecision {
  bool accepted = false;
  std::string drop_reason;
  std::optional<LaneRef> lane;
  std::vector<ScheduleCommand> commands;
  std::vector<std::string> forward_to;
  bool infeasible = false;
};

/// Local base station of one intersection.
class Lbs {
 public:
  Lbs(std::string id, std::string intersection, const RoadNetwork& network, PhasePlan baseline, ControllerKind kind,
      ControlParams params, TrustAnchors anchors, std::set<std::string> neighbors);

  const std::string& id() const { return id_; }
  const std::string& intersection() const { return intersection_; }
  ControllerKind kind() const { return kind_; }
  PlanRunner& runner() { return runner_; }
  const PlanRunner& runner() const { return runner_; }
  const std::set<std::string>& neighbors() const { return neighbors_; }

  /// `hops` counts LBS-to-LBS forwards already taken by this envelope.
  AlertDecision handle_alert(const SignedEnvelope& env, int hops, double now,
                             const std::map<std::string, double>& light_pressure);

  /// Undoes one expired shift; call once per cycle.
  std::optional<ScheduleCommand> decay_tick(double now);

  std::optional<ScheduleCommand> adaptive_tick(const std::map<std::string, DetectorCounts>& counts, double now);

  /// Lights of incoming lanes with a movement into one of `lanes`.
  std::set<std::string> feeding_lights(const std::set<LaneRef>& lanes) const;

 private:
  void submit(ScheduleCommand cmd, const std::string& key, std::vector<ScheduleCommand>& out);

  std::string id_;
  std::string intersection_;
  const RoadNetwork* network_;
  ControllerKind kind_;
  ControlParams params_;
  TrustAnchors anchors_;
  CertificateCache certs_;
  std::set<std::string> neighbors_;
  PlanRunner runner_;
  std::set<Signature> seen_;
  std::map<LaneRef, double> congested_;
  struct Active {
    ScheduleCommand cmd;
    std::string key;  // lane ref or "divert:<rid>"
  };
  std::vector<Active> active_;
  std::set<std::string> diverting_;
};

}  // namespace roadalarm
