#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "roadalarm/metrics.hpp"
#include "roadalarm/scenario.hpp"
#include "roadalarm/world.hpp"

namespace roadalarm {

/// SHA-256 over the scenario bytes and the effective run settings, hex encoded.
std::string config_hash(const std::string& scenario_text, std::uint64_t seed, const std::string& controller,
                        const std::string& variant, double horizon);

/// Runs to the horizon and stamps the config hash.
Metrics run_scenario(const Scenario& scenario, const RunOptions& options = {});

struct ComparisonReport {
  std::uint64_t seed = 0;  // shared by every run
  std::vector<Metrics> runs;

  /// Side by side figures plus deltas against the first run.
  std::string json() const;
};

/// One run per controller with a shared seed. Runs are independent worlds, so
/// `parallel` only changes wall time.
ComparisonReport compare(const Scenario& scenario, const std::vector<ControllerKind>& controllers,
                         const RunOptions& base = {}, bool parallel = false);

/// True when `summary_json` was produced from exactly this scenario text.
bool report_matches(const std::string& summary_json, const Scenario& scenario);

}  // namespace roadalarm
