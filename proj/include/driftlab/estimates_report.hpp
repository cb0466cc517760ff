#pragma once

#include <string>
#include <utility>
#include <vector>

namespace driftlab {

/// One verified inequality lhs <= rhs * (1 + margin).
struct EstimateReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  /// rhs / lhs; +inf when lhs == 0.
  double slack = 0.0;
  double margin = 0.0;
  bool pass = false;
  /// Exponents and constants used (m, m*, m**, S2, c0, C_m, ...).
  std::vector<std::pair<std::string, double>> metadata;
  std::string note;

  double meta(const std::string& key, double fallback = 0.0) const;
};

EstimateReport make_report(std::string name, double lhs, double rhs, double margin = 0.0);

/// "key=value;key=value" rendering of metadata plus note.
std::string describe(const EstimateReport& r);

}  // namespace driftlab
