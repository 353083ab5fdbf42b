#include "nodectl/report.h"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace nodectl {

const std::vector<std::string>& ReportStages() {
  static const std::vector<std::string> kStages = {
      "model", "bounds", "certificate", "controller", "simulation", "reference"};
  return kStages;
}

bool AllChecksPass(const RunReport& report) {
  for (const auto& c : report.checks) {
    if (!c.pass) return false;
  }
  return true;
}

Json EmitReport(const RunReport& report) {
  Json stages = Json::object();
  const std::optional<Json>* slots[] = {&report.model,      &report.bounds,
                                        &report.certificate, &report.controller,
                                        &report.simulation, &report.reference};
  const auto& names = ReportStages();
  for (size_t i = 0; i < names.size(); ++i) {
    stages[names[i]] = *slots[i] ? **slots[i] : Json("skipped");
  }
  Json checks = Json::array();
  for (const auto& c : report.checks) {
    checks.push_back(Json{{"name", c.name},
                          {"pass", c.pass},
                          {"value", c.value},
                          {"threshold", c.threshold},
                          {"detail", c.detail},
                          {"source", c.source}});
  }
  return Json{{"command", report.command},
              {"stages", stages},
              {"checks", checks},
              {"all_pass", AllChecksPass(report)}};
}

std::string TextSummary(const Json& report) {
  std::ostringstream os;
  os << "command: " << report.value("command", std::string("?")) << "\n";
  if (report.contains("stages")) {
    for (const auto& name : ReportStages()) {
      const Json& s = report["stages"].value(name, Json("skipped"));
      os << "  " << std::left << std::setw(12) << name << " "
         << (s.is_string() && s == "skipped" ? "skipped" : "done") << "\n";
    }
    const Json& ctrl = report["stages"].value("controller", Json("skipped"));
    if (ctrl.is_object() && ctrl.contains("H")) {
      os << "controller: H = " << ctrl["H"].dump() << ", mu = " << ctrl["mu"]
         << ", gamma = " << ctrl["gamma"] << ", radius = " << ctrl["radius"]
         << "\n";
    }
    const Json& cert = report["stages"].value("certificate", Json("skipped"));
    if (cert.is_object() && cert.contains("gamma")) {
      os << "certificate: gamma = " << cert["gamma"] << ", mu = " << cert["mu"]
         << "\n";
    }
  }
  if (report.contains("checks")) {
    for (const auto& c : report["checks"]) {
      os << (c["pass"].get<bool>() ? "PASS " : "FAIL ")
         << c["name"].get<std::string>() << "  value=" << c["value"]
         << " threshold=" << c["threshold"];
      const std::string detail = c["detail"].get<std::string>();
      if (!detail.empty()) os << "  (" << detail << ")";
      os << "\n";
    }
  }
  os << "all checks: "
     << (report.value("all_pass", false) ? "pass" : "fail") << "\n";
  return os.str();
}

void WriteReport(const std::string& dir, const Json& report) {
  std::filesystem::create_directories(dir);
  WriteJsonFile(dir + "/report.json", report);
  WriteTextFile(dir + "/report.txt", TextSummary(report));
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  WriteJsonFile(dir + "/report.meta.json", Json{{"generated_at", ts.str()}});
}

}  // namespace nodectl
