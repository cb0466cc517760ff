// driftlab command line: solve, study <kind>, check estimates.
//
// Exit codes: 0 all rows passed, 1 an estimate row failed, 2 configuration
// error, 3 solver failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "driftlab/config.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/studies.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "scenario JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--threads", c.threads, "concurrent sweep rows")->capture_default_str()->check(CLI::PositiveNumber);
}

int run(const Common& c, const std::string& study) {
  using namespace driftlab;
  ScenarioConfig cfg;
  try {
    std::ifstream in(c.config);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + c.config + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    doc["study"] = study;
    if (c.seed) doc["seed"] = *c.seed;
    cfg = parse_config(doc);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }
  for (const std::string& w : cfg.warnings) std::cerr << "warning: " << w << '\n';

  StudyResult res;
  try {
    res = run_scenario(cfg, RunOptions{c.threads});
    write_result(res, c.out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ResolutionError& e) {
    std::cerr << "configuration error (resolution): " << e.what() << '\n';
    return 2;
  } catch (const UnsupportedDimension& e) {
    std::cerr << "configuration error (dimension): " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  }

  for (const Table& t : res.tables) std::cout << "wrote " << c.out << '/' << t.name << ".csv (" << t.rows.size() << " rows)\n";
  for (const std::string& f : res.failures) std::cout << "FAIL " << f << '\n';
  if (res.solver_failure) return 3;
  if (!res.all_pass) return 1;
  std::cout << "all rows passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlab: finite-volume experiments for drift-diffusion problems"};
  app.require_subcommand(1);

  Common solve_opts, study_opts, check_opts;
  std::string study_kind, check_kind;

  CLI::App* solve = app.add_subcommand("solve", "single solve on every grid of the config");
  add_common(solve, solve_opts);

  CLI::App* study = app.add_subcommand("study", "parameter sweeps");
  study->add_option("kind", study_kind, "decay | flatness | convergence | approximation")
      ->required()
      ->check(CLI::IsMember({"decay", "flatness", "convergence", "approximation"}));
  add_common(study, study_opts);

  CLI::App* check = app.add_subcommand("check", "estimate checks");
  check->add_option("kind", check_kind, "estimates")->required()->check(CLI::IsMember({"estimates"}));
  add_common(check, check_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*solve) return run(solve_opts, "solve");
  if (*study) return run(study_opts, study_kind);
  return run(check_opts, check_kind);
}
