#pragma once

// Consolidated run report: one JSON document with a fixed set of stage keys
// (absent stages are marked "skipped"), a list of named checks, and a plain
// text rendering. Wall-clock data goes to a separate sidecar file.

#include <optional>
#include <string>
#include <vector>

#include "nodectl/serialization.h"

namespace nodectl {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
  /// Where the compared number comes from: "printed", "derived" or "run".
  std::string source = "run";
};

struct RunReport {
  std::string command;
  std::optional<Json> model;
  std::optional<Json> bounds;
  std::optional<Json> certificate;
  std::optional<Json> controller;
  std::optional<Json> simulation;
  std::optional<Json> reference;
  std::vector<CheckResult> checks;
};

/// Stage names in emission order.
const std::vector<std::string>& ReportStages();

Json EmitReport(const RunReport& report);
std::string TextSummary(const Json& report);
bool AllChecksPass(const RunReport& report);

/// Writes report.json, report.txt and the timestamp sidecar report.meta.json.
void WriteReport(const std::string& dir, const Json& report);

}  // namespace nodectl
