#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/config.hpp"

namespace driftlab {

/// Missing numeric cells are written as this token.
inline constexpr const char* kNA = "NA";

struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct StudyResult {
  StudyKind kind = StudyKind::SingleSolve;
  std::vector<Table> tables;
  nlohmann::json meta;
  /// Every asserted row passed.
  bool all_pass = true;
  /// At least one row lost its solve; the row is kept with status text.
  bool solver_failure = false;
  std::vector<std::string> failures;
};

struct RunOptions {
  int threads = 1;
};

/// Runs the study named in the config. Rows of a sweep run concurrently but
/// are emitted in sweep order, so the output depends on (config, seed) only.
StudyResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});

/// Writes <table>.csv files and <study>.meta.json into dir (created if needed).
/// The first CSV line is a "# driftlab ..." comment carrying the timestamp.
void write_result(const StudyResult& result, const std::string& dir);

/// %.10g; NaN becomes NA.
std::string fmt(double v);

}  // namespace driftlab
