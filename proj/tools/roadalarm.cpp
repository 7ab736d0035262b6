// Command line front end: run, compare and validate scenarios.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "roadalarm/experiment.hpp"

namespace fs = std::filesystem;
using namespace roadalarm;

namespace {

struct Common {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> horizon;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the scenario seed");
  cmd->add_option("--variant", c.variant, "s1 or s2")->check(CLI::IsMember({"s1", "s2"}));
  cmd->add_option("--horizon", c.horizon, "simulated seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory");
}

RunOptions options_of(const Common& c) {
  RunOptions o;
  o.seed = c.seed;
  if (c.variant) o.variant = *c.variant == "s1" ? Variant::S1 : Variant::S2;
  o.horizon = c.horizon;
  return o;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road congestion alarm simulator"};
  app.require_subcommand(1);

  Common run_args;
  std::optional<std::string> run_controller;
  auto* run = app.add_subcommand("run", "simulate one scenario to its horizon");
  add_common(run, run_args);
  run->add_option("--controller", run_controller, "fixed, adaptive_baseline or alert_enabled");

  Common cmp_args;
  std::vector<std::string> cmp_controllers{"fixed", "alert_enabled"};
  bool parallel = false;
  auto* cmp = app.add_subcommand("compare", "paired runs of one scenario under several controllers");
  add_common(cmp, cmp_args);
  cmp->add_option("--controller", cmp_controllers, "controllers to compare (repeat or comma separate)")
      ->delimiter(',');
  cmp->add_flag("--parallel", parallel, "run the controllers concurrently");

  std::string val_scenario;
  std::optional<std::string> val_report;
  auto* val = app.add_subcommand("validate", "check a scenario file, and optionally a report against it");
  val->add_option("--scenario", val_scenario, "scenario file")->required();
  val->add_option("--report", val_report, "summary.json to check against the scenario");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const Scenario sc = load_scenario(run_args.scenario);
      RunOptions o = options_of(run_args);
      if (run_controller) o.controller = controller_from_string(*run_controller);
      const Metrics m = run_scenario(sc, o);
      const fs::path out(run_args.out);
      write_file(out / "summary.json", m.summary_json());
      write_file(out / "events.csv", m.events_csv());
      std::cout << sc.name << ": " << m.vehicles.size() << " vehicles, mean delay " << m.mean_delay() << " s, "
                << m.alerts.size() << " alerts, " << m.commands.size() << " commands\n";
    } else if (*cmp) {
      const Scenario sc = load_scenario(cmp_args.scenario);
      std::vector<ControllerKind> kinds;
      for (const auto& c : cmp_controllers) kinds.push_back(controller_from_string(c));
      const auto report = compare(sc, kinds, options_of(cmp_args), parallel);
      const fs::path out(cmp_args.out);
      for (const auto& m : report.runs) {
        const fs::path dir = out / m.controller;
        write_file(dir / "summary.json", m.summary_json());
        write_file(dir / "events.csv", m.events_csv());
      }
      write_file(out / "comparison.json", report.json());
      std::cout << report.json();
    } else if (*val) {
      const Scenario sc = load_scenario(val_scenario);
      std::cout << val_scenario << ": valid (" << sc.network.segments.size() << " segments, " << sc.flows.size()
                << " flows)\n";
      if (val_report) {
        if (!report_matches(read_file(*val_report), sc)) {
          std::cerr << *val_report << ": config hash does not match the scenario\n";
          return 3;
        }
        std::cout << *val_report << ": matches\n";
      }
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
