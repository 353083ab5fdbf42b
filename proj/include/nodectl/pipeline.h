#pragma once

// Config-driven orchestration behind the command-line tool: model
// acquisition (training, file or reference), bounds, certification,
// synthesis, closed-loop simulation and the consolidated report.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodectl/dynamics_sim.h"
#include "nodectl/nn_model.h"
#include "nodectl/serialization.h"
#include "nodectl/synthesis.h"

namespace nodectl {

/// Process exit codes. Documented in README.md.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kTraining = 4,
  kNotCertified = 5,
  kSynthesis = 6,
  kSimulation = 7,
  kCheckFailed = 8,
  kInternal = 9,
};

/// Stage failure carrying its exit code.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(ExitCode code, std::string stage, const std::string& msg)
      : std::runtime_error(msg), code_(code), stage_(std::move(stage)) {}
  ExitCode code() const { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  ExitCode code_;
  std::string stage_;
};

struct PlantConfig {
  std::string kind = "pendulum";  // pendulum | vehicle | linear
  PendulumParams pendulum;
  double kappa = 0.5;
  double nu = 1.0;
  Mat linear_a;
  std::optional<Mat> g;
  std::optional<Box> box;
};

struct PipelineConfig {
  PlantConfig plant;

  int n_train = 2000;
  int n_validation = 2000;
  int validation_grid = 41;
  std::uint64_t data_seed = 1;

  std::string model_source = "train";  // train | file | reference
  std::string model_path;
  std::string reference = "pendulum";
  std::vector<int> hidden = {5};

  TrainOptions training;
  double error_margin = 1.25;

  double s_low_min = 1e-2;
  double s_low_max = 1e2;
  int per_decade = 10;
  double kappa_min = 1.5;
  double kappa_max = 1e3;
  int kappa_points = 13;
  double gain_bound = 1e3;
  double gain_refine_slack = 1e-3;
  CtrlForm form = CtrlForm::kAuto;
  BiasMode bias = BiasMode::kZero;
  Vec custom_bias;
  double solver_margin = 1e-9;

  double h = 1e-3;
  double t_end = 30.0;
  std::vector<Vec> initial_conditions;
  int random_pairs = 0;
  std::uint64_t sim_seed = 7;
  bool zero_controller = false;

  std::string output_dir = "out";

  SynthesisOptions SynthesisSettings() const;
};

/// The published configuration schema (JSON Schema subset).
const std::string& ConfigSchemaText();

/// Validates `instance` against the subset of JSON Schema used by the
/// config schema (type, properties, additionalProperties, required, items,
/// enum, minimum, exclusiveMinimum, minItems). Returns one message per
/// violation, empty when valid.
std::vector<std::string> ValidateAgainstSchema(const Json& instance,
                                               const Json& schema);

/// Schema validation followed by conversion; throws PipelineError(kConfig).
PipelineConfig ConfigFromJson(const Json& j);

/// Built-in configurations used by `repro ex1` / `repro ex2`.
Json ReproConfigJson(const std::string& example);

struct RunFlags {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool retrain = false;
};

void ApplyFlags(PipelineConfig& cfg, const RunFlags& flags);

/// Runs one command. Writes artifacts into cfg.output_dir and, on failure,
/// error.json there. `argument` is the example name for "repro".
ExitCode RunCommand(const std::string& command, const std::string& argument,
                    PipelineConfig cfg, const RunFlags& flags);

Plant MakePlant(const PlantConfig& cfg);

}  // namespace nodectl
