#pragma once

// JSON interchange for models, bounds, certificates, controllers, datasets
// and LMI dumps. Matrices are arrays of rows. Readers reject unknown keys.

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nodectl/dynamics_sim.h"
#include "nodectl/lmi_cert.h"
#include "nodectl/lmi_solver.h"
#include "nodectl/nn_model.h"
#include "nodectl/sector.h"
#include "nodectl/synthesis.h"

namespace nodectl {

using Json = nlohmann::json;

/// Malformed or unexpected document content.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Json MatToJson(const Mat& m);
Mat MatFromJson(const Json& j, const std::string& what);
Json VecToJson(const Vec& v);
Vec VecFromJson(const Json& j, const std::string& what);
Json BoxToJson(const Box& box);
Box BoxFromJson(const Json& j);

/// Throws SchemaError if `j` is not an object or has a key outside `allowed`.
void RequireKeys(const Json& j, std::initializer_list<const char*> allowed,
                 const std::string& where);

Json ModelToJson(const NodeModel& model);
NodeModel ModelFromJson(const Json& j);

Json DatasetToJson(const Dataset& d);
Dataset DatasetFromJson(const Json& j);

Json BoundsToJson(const SectorBounds& b);

Json CertificateToJson(const ContractionCertificate& c);

Json ControllerToJson(const ControllerSpec& c);
ControllerSpec ControllerFromJson(const Json& j);

/// Variable declarations, constraint names/sizes and, when given, the
/// per-constraint lambda_max at `assignment`.
Json LmiProblemToJson(const LmiProblem& p, const Assignment* assignment = nullptr);
Json LmiSolutionToJson(const LmiSolution& s);

/// Throws std::runtime_error on I/O failure and SchemaError on bad JSON.
Json ReadJsonFile(const std::string& path);
void WriteJsonFile(const std::string& path, const Json& j);
void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace nodectl
