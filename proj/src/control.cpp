#include "roadalarm/control.hpp"

#include <algorithm>
#include <cmath>

#include "roadalarm/bytes.hpp"

namespace roadalarm {

const char* to_string(LightState s) {
  switch (s) {
    case LightState::Red: return "red";
    case LightState::Yellow: return "yellow";
    case LightState::Green: return "green";
  }
  return "?";
}

double PhasePlan::cycle_length() const {
  double c = 0;
  for (const auto& s : stages) c += s.green + yellow;
  return c;
}

std::set<std::string> PhasePlan::lights() const {
  std::set<std::string> out;
  for (const auto& s : stages) out.insert(s.lights.begin(), s.lights.end());
  return out;
}

int PhasePlan::stage_of(const std::string& light) const {
  for (std::size_t i = 0; i < stages.size(); ++i)
    if (std::find(stages[i].lights.begin(), stages[i].lights.end(), light) != stages[i].lights.end())
      return static_cast<int>(i);
  return -1;
}

void PhasePlan::validate() const {
  if (stages.empty()) throw std::invalid_argument("phase plan has no stages");
  if (yellow < 0 || min_green <= 0) throw std::invalid_argument("phase plan timing must be positive");
  std::set<std::string> seen;
  for (const auto& s : stages) {
    if (s.green < min_green - 1e-9) throw std::invalid_argument("stage green below minimum");
    for (const auto& l : s.lights)
      if (!seen.insert(l).second) throw std::invalid_argument("light " + l + " appears in two stages");
  }
  const double c = cycle_length();
  if (c < kMinCycle - 1e-9 || c > kMaxCycle + 1e-9) throw std::invalid_argument("cycle length outside [20, 240]");
}

double clamp_cycle_length(double seconds) { return std::clamp(seconds, kMinCycle, kMaxCycle); }

LightStates fixed_time_tick(const PhasePlan& plan, double now) {
  LightStates out;
  for (const auto& l : plan.lights()) out[l] = LightState::Red;
  const double cycle = plan.cycle_length();
  double t = std::fmod(now, cycle);
  if (t < 0) t += cycle;
  for (const auto& s : plan.stages) {
    if (t < s.green) {
      for (const auto& l : s.lights) out[l] = LightState::Green;
      return out;
    }
    t -= s.green;
    if (t < plan.yellow) {
      for (const auto& l : s.lights) out[l] = LightState::Yellow;
      return out;
    }
    t -= plan.yellow;
  }
  return out;
}

bool mmu_safe(const LightStates& states, const PhasePlan& baseline) {
  int stage = -1;
  for (const auto& [light, state] : states) {
    if (state == LightState::Red) continue;
    const int s = baseline.stage_of(light);
    if (s < 0) return false;
    if (stage >= 0 && s != stage) return false;
    stage = s;
  }
  return true;
}

const char* to_string(CommandKind k) {
  switch (k) {
    case CommandKind::Rebalance: return "rebalance";
    case CommandKind::Divert: return "divert";
    case CommandKind::Decay: return "decay";
    case CommandKind::Adaptive: return "adaptive";
  }
  return "?";
}

namespace {

void fill_light_deltas(const PhasePlan& plan, ScheduleCommand& cmd) {
  cmd.green_delta.clear();
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    if (cmd.stage_delta[i] == 0) continue;
    for (const auto& l : plan.stages[i].lights) cmd.green_delta[l] = cmd.stage_delta[i];
  }
}

}  // namespace

ScheduleCommand shift_green(const PhasePlan& plan, int from_stage, int to_stage, double step, double now) {
  const int n = static_cast<int>(plan.stages.size());
  if (from_stage < 0 || from_stage >= n || to_stage < 0 || to_stage >= n || from_stage == to_stage)
    throw NoFeasibleShift("invalid stage pair");
  const double headroom = plan.stages[static_cast<std::size_t>(from_stage)].green - plan.min_green;
  const double applied = std::min(std::clamp(step, kMinStep, kMaxStep), headroom);
  if (applied < kMinStep - 1e-9) throw NoFeasibleShift("stage already at minimum green");
  ScheduleCommand cmd;
  cmd.stage_delta.assign(plan.stages.size(), 0.0);
  cmd.stage_delta[static_cast<std::size_t>(from_stage)] = -applied;
  cmd.stage_delta[static_cast<std::size_t>(to_stage)] = applied;
  cmd.issued_at = now;
  fill_light_deltas(plan, cmd);
  return cmd;
}

PhasePlan apply_command(const PhasePlan& plan, const ScheduleCommand& cmd) {
  if (cmd.stage_delta.size() != plan.stages.size()) throw std::invalid_argument("command does not match plan");
  PhasePlan out = plan;
  for (std::size_t i = 0; i < out.stages.size(); ++i) out.stages[i].green += cmd.stage_delta[i];
  out.validate();
  return out;
}

ScheduleCommand inverse(const ScheduleCommand& cmd, double now) {
  ScheduleCommand inv = cmd;
  inv.kind = CommandKind::Decay;
  for (auto& d : inv.stage_delta) d = -d;
  for (auto& [light, d] : inv.green_delta) d = -d;
  inv.issued_at = now;
  inv.effective_from = -1;
  inv.cause = "decay of " + std::string(to_string(cmd.kind)) + " (" + cmd.cause + ")";
  return inv;
}

ScheduleCommand rebalance_green(const PhasePlan& plan, const std::set<std::string>& feeding_lights,
                                const std::map<std::string, double>& light_pressure, bool emergency,
                                const RebalanceParams& params, double now) {
  int losing = -1;
  std::vector<bool> feeds(plan.stages.size(), false);
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    for (const auto& l : plan.stages[i].lights)
      if (feeding_lights.count(l)) feeds[i] = true;
    if (feeds[i] && (losing < 0 || plan.stages[i].green > plan.stages[static_cast<std::size_t>(losing)].green))
      losing = static_cast<int>(i);
  }
  if (losing < 0) throw NoFeasibleShift("no stage serves the congested lane");
  int gaining = -1;
  double best = -1;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    if (feeds[i]) continue;
    double pressure = 0;
    for (const auto& l : plan.stages[i].lights)
      if (auto it = light_pressure.find(l); it != light_pressure.end()) pressure += it->second;
    if (pressure > best) {
      best = pressure;
      gaining = static_cast<int>(i);
    }
  }
  if (gaining < 0) throw NoFeasibleShift("every stage feeds the congested lane");
  return shift_green(plan, losing, gaining, emergency ? params.emergency_step : params.step, now);
}

std::vector<double> degrees_of_saturation(const PhasePlan& plan, const std::map<std::string, DetectorCounts>& counts,
                                          const AdaptiveParams& params) {
  std::vector<double> ds;
  for (const auto& s : plan.stages) {
    double worst = 0;
    const double capacity = params.saturation_flow * s.green;
    for (const auto& l : s.lights)
      if (auto it = counts.find(l); it != counts.end() && capacity > 0)
        worst = std::max(worst, it->second.demand / capacity);
    ds.push_back(worst);
  }
  return ds;
}

std::optional<ScheduleCommand> adaptive_baseline_tick(const PhasePlan& plan,
                                                      const std::map<std::string, DetectorCounts>& counts,
                                                      const AdaptiveParams& params, double now) {
  const auto ds = degrees_of_saturation(plan, counts, params);
  if (ds.size() < 2) return std::nullopt;
  const auto hi = static_cast<std::size_t>(std::max_element(ds.begin(), ds.end()) - ds.begin());
  const auto lo = static_cast<std::size_t>(std::min_element(ds.begin(), ds.end()) - ds.begin());
  const double spread = ds[hi] - ds[lo];
  const double step = kMinStep + std::round(3.0 * std::min(1.0, spread));
  const double cycle = plan.cycle_length();

  ScheduleCommand cmd;
  cmd.kind = CommandKind::Adaptive;
  cmd.issued_at = now;
  cmd.stage_delta.assign(plan.stages.size(), 0.0);
  if (ds[hi] > params.grow_above && clamp_cycle_length(cycle + step) == cycle + step) {
    cmd.stage_delta[hi] = step;
    cmd.cause = "cycle growth";
  } else if (ds[hi] < params.shrink_below && clamp_cycle_length(cycle - step) == cycle - step &&
             plan.stages[lo].green - step >= plan.min_green) {
    cmd.stage_delta[lo] = -step;
    cmd.cause = "cycle reduction";
  } else if (spread > params.tie) {
    try {
      cmd = shift_green(plan, static_cast<int>(lo), static_cast<int>(hi), step, now);
    } catch (const NoFeasibleShift&) {
      return std::nullopt;
    }
    cmd.kind = CommandKind::Adaptive;
    cmd.cause = "saturation split";
  } else {
    return std::nullopt;
  }
  fill_light_deltas(plan, cmd);
  return cmd;
}

PlanRunner::PlanRunner(PhasePlan baseline, double start) : baseline_(std::move(baseline)), plan_(baseline_) {
  baseline_.validate();
  phase_end_ = start + plan_.stages.front().green;
}

void PlanRunner::submit(ScheduleCommand cmd) { pending_.push_back(std::move(cmd)); }

PhasePlan PlanRunner::projected() const {
  PhasePlan p = plan_;
  for (const auto& c : pending_) p = apply_command(p, c);
  return p;
}

void PlanRunner::apply_pending(double t) {
  while (!pending_.empty()) {
    ScheduleCommand cmd = std::move(pending_.front());
    pending_.pop_front();
    plan_ = apply_command(plan_, cmd);
    cmd.effective_from = t;
    applied_.push_back(std::move(cmd));
  }
}

void PlanRunner::tick(double now) {
  while (now >= phase_end_ - 1e-9) {
    const double t = phase_end_;
    apply_pending(t);
    if (!yellow_) {
      yellow_ = true;
      phase_end_ = t + plan_.yellow;
    } else {
      yellow_ = false;
      stage_ = (stage_ + 1) % static_cast<int>(plan_.stages.size());
      if (stage_ == 0) ++cycles_;
      phase_end_ = t + plan_.stages[static_cast<std::size_t>(stage_)].green;
    }
  }
}

LightStates PlanRunner::lights() const {
  LightStates out;
  for (const auto& l : plan_.lights()) out[l] = LightState::Red;
  for (const auto& l : plan_.stages[static_cast<std::size_t>(stage_)].lights)
    out[l] = yellow_ ? LightState::Yellow : LightState::Green;
  return out;
}

std::vector<ScheduleCommand> PlanRunner::take_applied() {
  std::vector<ScheduleCommand> out;
  out.swap(applied_);
  return out;
}

const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::Fixed: return "fixed";
    case ControllerKind::Adaptive: return "adaptive_baseline";
    case ControllerKind::AlertEnabled: return "alert_enabled";
  }
  return "?";
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "fixed" || s == "fixed_time") return ControllerKind::Fixed;
  if (s == "adaptive" || s == "adaptive_baseline") return ControllerKind::Adaptive;
  if (s == "alert" || s == "alert_enabled") return ControllerKind::AlertEnabled;
  throw std::invalid_argument("unknown controller '" + s + "'");
}

}  // namespace roadalarm
