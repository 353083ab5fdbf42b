#include "nodectl/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "nodectl/lmi_cert.h"
#include "nodectl/plot_svg.h"
#include "nodectl/reference_fixtures.h"
#include "nodectl/report.h"
#include "nodectl/sector.h"

namespace nodectl {

namespace fs = std::filesystem;

const std::string& ConfigSchemaText() {
  static const std::string kText =
#include "config_schema.inc"
      ;
  return kText;
}

namespace {

std::string TypeOf(const Json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return "null";
}

bool HasType(const Json& j, const std::string& type) {
  if (type == "number") return j.is_number();
  if (type == "integer") return j.is_number_integer();
  return TypeOf(j) == type;
}

void ValidateNode(const Json& inst, const Json& schema, const std::string& path,
                  std::vector<std::string>& errors) {
  const std::string where = path.empty() ? "<root>" : path;
  if (schema.contains("type")) {
    const std::string type = schema["type"];
    if (!HasType(inst, type)) {
      errors.push_back(where + ": expected " + type + ", got " + TypeOf(inst));
      return;
    }
  }
  if (schema.contains("enum")) {
    const auto& options = schema["enum"];
    if (std::find(options.begin(), options.end(), inst) == options.end()) {
      errors.push_back(where + ": value " + inst.dump() + " not in " +
                       options.dump());
    }
  }
  if (inst.is_number()) {
    const double v = inst.get<double>();
    if (schema.contains("minimum") && v < schema["minimum"].get<double>()) {
      errors.push_back(where + ": " + inst.dump() + " below minimum " +
                       schema["minimum"].dump());
    }
    if (schema.contains("exclusiveMinimum") &&
        v <= schema["exclusiveMinimum"].get<double>()) {
      errors.push_back(where + ": " + inst.dump() + " must exceed " +
                       schema["exclusiveMinimum"].dump());
    }
  }
  if (inst.is_object()) {
    const Json props = schema.value("properties", Json::object());
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!inst.contains(key.get<std::string>())) {
          errors.push_back(where + ": missing required key " + key.dump());
        }
      }
    }
    for (const auto& [key, value] : inst.items()) {
      const std::string child = path.empty() ? key : path + "." + key;
      if (props.contains(key)) {
        ValidateNode(value, props[key], child, errors);
      } else if (schema.value("additionalProperties", true) == false) {
        errors.push_back(where + ": unknown key \"" + key + "\"");
      }
    }
  }
  if (inst.is_array()) {
    if (schema.contains("minItems") &&
        inst.size() < schema["minItems"].get<size_t>()) {
      errors.push_back(where + ": fewer than " + schema["minItems"].dump() +
                       " items");
    }
    if (schema.contains("items")) {
      for (size_t i = 0; i < inst.size(); ++i) {
        ValidateNode(inst[i], schema["items"], path + "[" + std::to_string(i) + "]",
                     errors);
      }
    }
  }
}

[[noreturn]] void ConfigFail(const std::string& msg) {
  throw PipelineError(ExitCode::kConfig, "config", msg);
}

Mat ConfigMatrix(const Json& j, const std::string& what) {
  try {
    return MatFromJson(j, what);
  } catch (const std::exception& e) {
    ConfigFail(e.what());
  }
}

Vec ConfigVector(const Json& j, const std::string& what) {
  try {
    return VecFromJson(j, what);
  } catch (const std::exception& e) {
    ConfigFail(e.what());
  }
}

CtrlForm ParseForm(const std::string& s) {
  if (s == "single-layer") return CtrlForm::kSingleLayer;
  if (s == "two-layer-reduced") return CtrlForm::kTwoLayerReduced;
  if (s == "multilayer") return CtrlForm::kGeneral;
  return CtrlForm::kAuto;
}

BiasMode ParseBias(const std::string& s) {
  if (s == "shift-to-origin") return BiasMode::kShiftToOrigin;
  if (s == "custom") return BiasMode::kCustom;
  return BiasMode::kZero;
}

}  // namespace

std::vector<std::string> ValidateAgainstSchema(const Json& instance,
                                               const Json& schema) {
  std::vector<std::string> errors;
  ValidateNode(instance, schema, "", errors);
  return errors;
}

SynthesisOptions PipelineConfig::SynthesisSettings() const {
  SynthesisOptions o;
  o.s_low_grid = LogGrid(s_low_min, s_low_max, per_decade);
  o.kappa_max = kappa_max;
  o.kappa_grid = kappa_points == 1
                     ? std::vector<double>{kappa_min}
                     : LogGridCount(kappa_min, kappa_max, kappa_points);
  o.gain_bound = gain_bound;
  o.gain_refine_slack = gain_refine_slack;
  o.form = form;
  o.solver.margin = solver_margin;
  return o;
}

PipelineConfig ConfigFromJson(const Json& j) {
  static const Json schema = Json::parse(ConfigSchemaText());
  const auto errors = ValidateAgainstSchema(j, schema);
  if (!errors.empty()) {
    std::string msg = "configuration does not match the schema:";
    for (const auto& e : errors) msg += "\n  " + e;
    ConfigFail(msg);
  }

  PipelineConfig c;
  if (j.contains("plant")) {
    const Json& p = j["plant"];
    c.plant.kind = p["kind"];
    const auto reject = [&](std::initializer_list<const char*> keys,
                            const char* kind) {
      for (const char* k : keys) {
        if (p.contains(k) && c.plant.kind != kind) {
          ConfigFail(std::string("plant.") + k + " only applies to the " +
                     kind + " plant");
        }
      }
    };
    reject({"mass", "length", "friction", "gravity", "unit_actuation"},
           "pendulum");
    reject({"kappa", "nu"}, "vehicle");
    reject({"A"}, "linear");
    auto& pp = c.plant.pendulum;
    pp.mass = p.value("mass", pp.mass);
    pp.length = p.value("length", pp.length);
    pp.friction = p.value("friction", pp.friction);
    pp.gravity = p.value("gravity", pp.gravity);
    pp.unit_actuation = p.value("unit_actuation", pp.unit_actuation);
    c.plant.kappa = p.value("kappa", c.plant.kappa);
    c.plant.nu = p.value("nu", c.plant.nu);
    if (p.contains("A")) c.plant.linear_a = ConfigMatrix(p["A"], "plant.A");
    if (p.contains("g")) c.plant.g = ConfigMatrix(p["g"], "plant.g");
    if (p.contains("box")) {
      const Vec lo = ConfigVector(p["box"]["lo"], "plant.box.lo");
      const Vec hi = ConfigVector(p["box"]["hi"], "plant.box.hi");
      if (lo.size() != hi.size()) ConfigFail("plant.box: lo/hi sizes differ");
      Box box;
      for (Eigen::Index i = 0; i < lo.size(); ++i) {
        if (!(lo(i) < hi(i))) ConfigFail("plant.box: need lo < hi");
        box.emplace_back(lo(i), hi(i));
      }
      c.plant.box = box;
    }
    if (c.plant.kind == "linear") {
      if (c.plant.linear_a.size() == 0) ConfigFail("linear plant needs plant.A");
      if (c.plant.linear_a.rows() != c.plant.linear_a.cols()) {
        ConfigFail("plant.A must be square");
      }
      if (!c.plant.g) ConfigFail("linear plant needs plant.g");
      if (!c.plant.box) ConfigFail("linear plant needs plant.box");
    }
  }

  if (j.contains("data")) {
    const Json& d = j["data"];
    c.n_train = d.value("n_train", c.n_train);
    c.n_validation = d.value("n_validation", c.n_validation);
    c.validation_grid = d.value("validation_grid", c.validation_grid);
    c.data_seed = d.value("seed", c.data_seed);
  }
  if (j.contains("model")) {
    const Json& m = j["model"];
    c.model_source = m.value("source", c.model_source);
    c.model_path = m.value("path", c.model_path);
    c.reference = m.value("reference", c.reference);
    if (m.contains("hidden")) c.hidden = m["hidden"].get<std::vector<int>>();
    if (c.model_source == "file" && c.model_path.empty()) {
      ConfigFail("model.source \"file\" needs model.path");
    }
  }
  if (j.contains("training")) {
    const Json& t = j["training"];
    auto& o = c.training;
    o.epochs = t.value("epochs", o.epochs);
    o.step_size = t.value("step_size", o.step_size);
    o.momentum = t.value("momentum", o.momentum);
    o.batch_size = t.value("batch_size", o.batch_size);
    o.seed = t.value("seed", o.seed);
    if (t.value("optimizer", std::string("momentum")) == "adam") {
      o.optimizer = Optimizer::kAdam;
    }
    o.final_step_fraction = t.value("final_step_fraction", o.final_step_fraction);
  }
  if (j.contains("error_bound")) {
    c.error_margin = j["error_bound"].value("margin", c.error_margin);
  }
  if (j.contains("synthesis")) {
    const Json& s = j["synthesis"];
    c.s_low_min = s.value("s_low_min", c.s_low_min);
    c.s_low_max = s.value("s_low_max", c.s_low_max);
    c.per_decade = s.value("per_decade", c.per_decade);
    c.kappa_min = s.value("kappa_min", c.kappa_min);
    c.kappa_max = s.value("kappa_max", c.kappa_max);
    c.kappa_points = s.value("kappa_points", c.kappa_points);
    c.gain_bound = s.value("gain_bound", c.gain_bound);
    c.gain_refine_slack = s.value("gain_refine_slack", c.gain_refine_slack);
    c.form = ParseForm(s.value("form", std::string("auto")));
    c.bias = ParseBias(s.value("bias", std::string("zero")));
    if (s.contains("custom_bias")) {
      c.custom_bias = ConfigVector(s["custom_bias"], "synthesis.custom_bias");
    }
    c.solver_margin = s.value("solver_margin", c.solver_margin);
    if (c.s_low_min > c.s_low_max) ConfigFail("synthesis: s_low_min > s_low_max");
    if (c.kappa_min > c.kappa_max) ConfigFail("synthesis: kappa_min > kappa_max");
    if (c.bias == BiasMode::kCustom && c.custom_bias.size() == 0) {
      ConfigFail("synthesis.bias \"custom\" needs synthesis.custom_bias");
    }
  }
  if (j.contains("simulation")) {
    const Json& s = j["simulation"];
    c.h = s.value("h", c.h);
    c.t_end = s.value("t_end", c.t_end);
    if (s.contains("initial_conditions")) {
      for (const auto& x0 : s["initial_conditions"]) {
        c.initial_conditions.push_back(
            ConfigVector(x0, "simulation.initial_conditions"));
      }
    }
    c.random_pairs = s.value("random_pairs", c.random_pairs);
    c.sim_seed = s.value("seed", c.sim_seed);
    c.zero_controller = s.value("controller", std::string("synthesized")) == "zero";
  }
  c.output_dir = j.value("output_dir", c.output_dir);

  // Cross-field dimension checks need the state dimension.
  int m = 2;
  if (c.plant.kind == "linear") m = static_cast<int>(c.plant.linear_a.rows());
  if (c.plant.g && c.plant.g->rows() != m) {
    ConfigFail("plant.g must have " + std::to_string(m) + " rows");
  }
  if (c.plant.box && static_cast<int>(c.plant.box->size()) != m) {
    ConfigFail("plant.box must have " + std::to_string(m) + " components");
  }
  for (const auto& x0 : c.initial_conditions) {
    if (x0.size() != m) {
      ConfigFail("simulation.initial_conditions entries must have " +
                 std::to_string(m) + " components");
    }
  }
  return c;
}

Json ReproConfigJson(const std::string& example) {
  if (example != "ex1" && example != "ex2") {
    throw PipelineError(ExitCode::kUsage, "usage",
                        "repro expects ex1 or ex2, got \"" + example + "\"");
  }
  const bool ex1 = example == "ex1";
  Json plant = ex1 ? Json{{"kind", "pendulum"}, {"unit_actuation", true}}
                   : Json{{"kind", "vehicle"}, {"kappa", 0.5}, {"nu", 1.0}};
  Json model = ex1 ? Json{{"source", "reference"}, {"reference", "pendulum"},
                          {"hidden", {5}}}
                   : Json{{"source", "reference"}, {"reference", "vehicle"},
                          {"hidden", {5, 5}}};
  Json ics = ex1 ? Json{{1.0, 1.0}, {-1.0, -1.0}, {-1.5, 1.5}, {1.5, -1.5}}
                 : Json{{0.8, 0.8}, {-0.8, -0.8}, {-0.5, 0.5}, {0.5, -0.5}};
  return Json{
      {"plant", plant},
      {"data", {{"n_train", 4000}, {"n_validation", 2000},
                {"validation_grid", 41}, {"seed", 1}}},
      {"model", model},
      {"training", {{"epochs", 5000}, {"optimizer", "adam"},
                    {"step_size", 2e-2}, {"momentum", 0.9},
                    {"batch_size", 64}, {"final_step_fraction", 1e-2},
                    {"seed", 1}}},
      {"error_bound", {{"margin", 1.25}}},
      {"synthesis", {{"s_low_min", 1e-2}, {"s_low_max", 1e2}, {"per_decade", 10},
                     {"kappa_min", 1.5}, {"kappa_max", 1e3}, {"kappa_points", 13},
                     {"gain_bound", 1e3}, {"form", "auto"}, {"bias", "zero"}}},
      {"simulation", {{"h", 1e-3}, {"t_end", 30.0}, {"initial_conditions", ics}}},
      {"output_dir", ex1 ? "out/ex1" : "out/ex2"}};
}

void ApplyFlags(PipelineConfig& cfg, const RunFlags& flags) {
  if (flags.out_dir) cfg.output_dir = *flags.out_dir;
  if (flags.seed) {
    cfg.data_seed = *flags.seed;
    cfg.training.seed = *flags.seed;
    cfg.sim_seed = *flags.seed;
  }
  if (flags.retrain) cfg.model_source = "train";
}

Plant MakePlant(const PlantConfig& cfg) {
  Plant p;
  if (cfg.kind == "pendulum") {
    PendulumParams pp = cfg.pendulum;
    if (cfg.box) pp.box = *cfg.box;
    p = PendulumPlant(pp);
  } else if (cfg.kind == "vehicle") {
    p = cfg.box ? VehiclePlant(cfg.kappa, cfg.nu, *cfg.box)
                : VehiclePlant(cfg.kappa, cfg.nu);
  } else if (cfg.kind == "linear") {
    const Mat a = cfg.linear_a;
    p.name = "linear";
    p.state_dim = static_cast<int>(a.rows());
    p.drift = [a](const Vec& x) -> Vec { return a * x; };
    p.g = cfg.g ? *cfg.g : Mat::Zero(a.rows(), 1);
    p.box = cfg.box ? *cfg.box : Box{};
  } else {
    throw PipelineError(ExitCode::kConfig, "config",
                        "unknown plant kind \"" + cfg.kind + "\"");
  }
  if (cfg.g) p.g = *cfg.g;
  return p;
}

namespace {

Json SweepJson(const std::vector<SweepPoint>& log) {
  Json out = Json::array();
  for (const auto& p : log) {
    out.push_back(Json{{"s_low", p.s_low},
                       {"kappa", p.kappa},
                       {"status", p.status},
                       {"mu", p.mu},
                       {"objective", p.objective},
                       {"message", p.message}});
  }
  return out;
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct SimulationOutcome {
  std::vector<Trajectory> trajectories;
  std::vector<Vec> initial_conditions;
};

class Runner {
 public:
  Runner(PipelineConfig cfg, std::string command)
      : cfg_(std::move(cfg)), command_(std::move(command)) {
    report_.command = command_;
  }

  ExitCode Dispatch(const std::string& argument);

 private:
  // Stage helpers.
  const Plant& GetPlant();
  std::pair<Dataset, Dataset> Datasets();
  NodeModel& GetModel();
  const SectorBounds& GetBounds();
  CertifyResult RunCertify();
  ControllerSpec RunSynthesis();
  ControllerSpec ZeroController();
  SimulationOutcome SimulateClosedLoop(const ControllerSpec& spec,
                                       const std::string& prefix);
  void ClosedLoopChecks(const ControllerSpec& spec, const SimulationOutcome& sim,
                        const std::string& prefix);
  void ModelDecayCheck(const VectorField& f, double c, double rate,
                       const std::string& name);
  void WritePlot(const SimulationOutcome& sim, const ControllerSpec* spec,
                 const Vec* x_star);
  std::vector<Vec> InitialConditions();

  // Commands.
  ExitCode GenData();
  ExitCode Train();
  ExitCode Bounds();
  ExitCode CertifyCommand();
  ExitCode SynthesizeCommand();
  ExitCode Simulate();
  ExitCode Verify();
  ExitCode Repro(const std::string& example);
  ExitCode Plot();

  ExitCode Finish();

  std::string Path(const std::string& name) const {
    return (fs::path(cfg_.output_dir) / name).string();
  }
  void EnsureDir();
  void WriteJson(const std::string& name, const Json& j);
  void WriteText(const std::string& name, const std::string& text);
  void AddCheck(CheckResult c) { report_.checks.push_back(std::move(c)); }

  PipelineConfig cfg_;
  std::string command_;
  RunReport report_;
  std::optional<Plant> plant_;
  std::optional<NodeModel> model_;
  std::optional<SectorBounds> bounds_;
  std::optional<ReferenceCase> reference_;
  Json simulation_ = Json::object();
};

void Runner::EnsureDir() {
  std::error_code ec;
  fs::create_directories(cfg_.output_dir, ec);
  if (ec || !fs::is_directory(cfg_.output_dir)) {
    throw PipelineError(ExitCode::kIo, "output",
                        "cannot create output directory " + cfg_.output_dir);
  }
}

void Runner::WriteJson(const std::string& name, const Json& j) {
  EnsureDir();
  try {
    WriteJsonFile(Path(name), j);
  } catch (const std::exception& e) {
    throw PipelineError(ExitCode::kIo, "output", e.what());
  }
}

void Runner::WriteText(const std::string& name, const std::string& text) {
  EnsureDir();
  try {
    WriteTextFile(Path(name), text);
  } catch (const std::exception& e) {
    throw PipelineError(ExitCode::kIo, "output", e.what());
  }
}

const Plant& Runner::GetPlant() {
  if (!plant_) {
    try {
      plant_ = MakePlant(cfg_.plant);
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(ExitCode::kConfig, "plant", e.what());
    }
  }
  return *plant_;
}

std::pair<Dataset, Dataset> Runner::Datasets() {
  const Plant& plant = GetPlant();
  Dataset train = SampleDataset(plant, cfg_.n_train, cfg_.data_seed);
  Dataset validation;
  validation.box = plant.box;
  if (cfg_.validation_grid > 0) {
    validation = GridDataset(plant, cfg_.validation_grid);
  }
  if (cfg_.n_validation > 0) {
    Dataset extra = SampleDataset(plant, cfg_.n_validation, cfg_.data_seed + 1);
    validation.states.insert(validation.states.end(), extra.states.begin(),
                             extra.states.end());
    validation.derivatives.insert(validation.derivatives.end(),
                                  extra.derivatives.begin(),
                                  extra.derivatives.end());
    validation.box = extra.box;
  }
  return {std::move(train), std::move(validation)};
}

NodeModel& Runner::GetModel() {
  if (model_) return *model_;
  if (cfg_.model_source == "reference") {
    reference_ = cfg_.reference == "vehicle" ? VehicleReference()
                                             : PendulumReference();
    model_ = reference_->model;
    report_.model = Json{{"source", "reference"},
                         {"reference", reference_->name},
                         {"model", ModelToJson(*model_)}};
  } else if (cfg_.model_source == "file") {
    Json j;
    try {
      j = ReadJsonFile(cfg_.model_path);
      model_ = ModelFromJson(j);
    } catch (const std::exception& e) {
      throw PipelineError(ExitCode::kIo, "model",
                          "cannot load model " + cfg_.model_path + ": " + e.what());
    }
    report_.model = Json{{"source", "file"},
                         {"path", cfg_.model_path},
                         {"model", ModelToJson(*model_)}};
  } else {
    auto [train, validation] = Datasets();
    std::vector<int> dims = {GetPlant().state_dim};
    dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    dims.push_back(GetPlant().state_dim);
    TrainResult result;
    try {
      result = TrainNode(train, dims, cfg_.training);
    } catch (const TrainingDiverged& e) {
      throw PipelineError(ExitCode::kTraining, "train",
                          std::string(e.what()) + " (epoch " +
                              std::to_string(e.epoch()) + ")");
    }
    model_ = std::move(result.model);
    const ResidualStats stats = Residuals(*model_, validation);
    const double eps = ErrorBound(*model_, validation, cfg_.error_margin);
    if (!std::isfinite(eps)) {
      throw PipelineError(ExitCode::kTraining, "train",
                          "validation residual is not finite");
    }
    std::ostringstream loss;
    loss.precision(17);
    loss << "epoch,mean_squared_residual\n";
    for (size_t i = 0; i < result.loss_history.size(); ++i) {
      loss << i + 1 << "," << result.loss_history[i] << "\n";
    }
    WriteText("loss_history.csv", loss.str());
    WriteJson("model.json", ModelToJson(*model_));
    report_.model = Json{
        {"source", "train"},
        {"model", ModelToJson(*model_)},
        {"training",
         {{"epochs", cfg_.training.epochs},
          {"final_loss", result.loss_history.empty()
                             ? 0.0
                             : result.loss_history.back()},
          {"max_validation_residual", stats.max_norm},
          {"mean_validation_residual", stats.mean_norm},
          {"validation_size", validation.size()},
          {"error_margin", cfg_.error_margin}}}};
  }
  try {
    model_->Validate();
  } catch (const std::exception& e) {
    throw PipelineError(ExitCode::kConfig, "model", e.what());
  }
  if (model_->state_dim() != GetPlant().state_dim) {
    throw PipelineError(ExitCode::kConfig, "model",
                        "model state dimension does not match the plant");
  }
  return *model_;
}

const SectorBounds& Runner::GetBounds() {
  if (!bounds_) {
    const NodeModel& m = GetModel();
    bounds_ = PropagateSectorBounds(m.net, m.box);
    const Json j = BoundsToJson(*bounds_);
    WriteJson("bounds.json", j);
    report_.bounds = j;
  }
  return *bounds_;
}

CertifyResult Runner::RunCertify() {
  CertifyOptions opts;
  opts.solver.margin = cfg_.solver_margin;
  CertifyResult r = Certify(GetModel(), GetBounds(), opts);
  Json j = Json{{"status", ToString(r.status)}, {"message", r.message}};
  if (r.certificate) {
    j["certificate"] = CertificateToJson(*r.certificate);
    const EnvelopeParams env =
        MakeEnvelope(r.certificate->p_low, r.certificate->p_up,
                     r.certificate->gamma, GetModel().epsilon,
                     EnvelopeMode::kToEquilibrium);
    j["envelope"] = Json{{"c", env.c}, {"rate", env.rate}, {"radius", env.radius}};
  }
  WriteJson("certificate.json", j);
  report_.certificate = j;
  return r;
}

ControllerSpec Runner::RunSynthesis() {
  const NodeModel& m = GetModel();
  const Mat& g = GetPlant().g;
  SynthesisResult r;
  try {
    r = Synthesize(m, g, GetBounds(), cfg_.SynthesisSettings());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(ExitCode::kConfig, "synthesize", e.what());
  }
  WriteJson("sweep_log.json", SweepJson(r.sweep_log));
  if (r.status != SynthesisStatus::kOk || !r.spec) {
    report_.controller = Json{{"status", ToString(r.status)},
                              {"message", r.message}};
    throw PipelineError(ExitCode::kSynthesis, "synthesize",
                        std::string(ToString(r.status)) + ": " + r.message);
  }
  ControllerSpec spec = *r.spec;
  BiasChoice bias;
  try {
    bias = SelectBias(m.net, g, cfg_.bias, cfg_.custom_bias);
  } catch (const std::exception& e) {
    throw PipelineError(ExitCode::kConfig, "synthesize", e.what());
  }
  spec.b_u = bias.b_u;
  Json cj = ControllerToJson(spec);
  WriteJson("controller.json", cj);
  cj.erase("sweep_log");
  cj["status"] = ToString(r.status);
  cj["plugin_lambda_max"] = r.plugin_lambda_max;
  cj["bias_residual"] = bias.residual;
  cj["sweep_points"] = r.sweep_log.size();
  cj["feasible_sweep_points"] = std::count_if(
      r.sweep_log.begin(), r.sweep_log.end(),
      [](const SweepPoint& p) { return p.status == "feasible"; });
  report_.controller = cj;
  return spec;
}

ControllerSpec Runner::ZeroController() {
  const NodeModel& m = GetModel();
  const int l = static_cast<int>(GetPlant().g.cols());
  ControllerSpec spec;
  spec.H = Mat::Zero(l, m.state_dim());
  spec.W_umin = Mat::Zero(l, m.net.dims[m.net.dims.size() - 2]);
  spec.b_u = Vec::Zero(l);
  spec.form = "zero";
  return spec;
}

std::vector<Vec> Runner::InitialConditions() {
  std::vector<Vec> ics = cfg_.initial_conditions;
  const Box& box = GetModel().box;
  std::mt19937_64 rng(cfg_.sim_seed);
  const int extra = ics.empty() && cfg_.random_pairs == 0 ? 4 : 2 * cfg_.random_pairs;
  for (int i = 0; i < extra; ++i) {
    Vec x(box.size());
    for (size_t d = 0; d < box.size(); ++d) {
      std::uniform_real_distribution<double> u(box[d].lo, box[d].hi);
      x(d) = u(rng);
    }
    ics.push_back(x);
  }
  return ics;
}

SimulationOutcome Runner::SimulateClosedLoop(const ControllerSpec& spec,
                                             const std::string& prefix) {
  SimulationOutcome out;
  out.initial_conditions = InitialConditions();
  const Plant& plant = GetPlant();
  const NodeModel& m = GetModel();
  Json runs = Json::array();
  for (size_t i = 0; i < out.initial_conditions.size(); ++i) {
    const Vec& x0 = out.initial_conditions[i];
    Trajectory traj;
    try {
      traj = ClosedLoopSimulate(plant, spec, m.net, x0, cfg_.t_end, cfg_.h);
    } catch (const SimulationAborted& e) {
      throw PipelineError(ExitCode::kSimulation, "simulate",
                          std::string(e.what()) + " at t = " + Fmt(e.time()));
    } catch (const std::domain_error& e) {
      throw PipelineError(ExitCode::kSimulation, "simulate", e.what());
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%03zu.csv", prefix.c_str(), i);
    std::ostringstream os;
    WriteTrajectoryCsv(os, traj);
    WriteText(name, os.str());
    runs.push_back(Json{{"file", name},
                        {"x0", VecToJson(x0)},
                        {"final_state", VecToJson(traj.states.back())},
                        {"exited_box", traj.exited_box}});
    out.trajectories.push_back(std::move(traj));
  }
  simulation_[prefix] = Json{{"h", cfg_.h}, {"t_end", cfg_.t_end}, {"runs", runs}};
  return out;
}

double MaxPairwiseTerminal(const std::vector<Trajectory>& trajs) {
  double worst = 0.0;
  for (size_t i = 0; i < trajs.size(); ++i) {
    for (size_t j = i + 1; j < trajs.size(); ++j) {
      worst = std::max(worst,
                       (trajs[i].states.back() - trajs[j].states.back()).norm());
    }
  }
  return worst;
}

void Runner::ClosedLoopChecks(const ControllerSpec& spec,
                              const SimulationOutcome& sim,
                              const std::string& prefix) {
  const double pairwise = MaxPairwiseTerminal(sim.trajectories);
  simulation_[prefix]["max_pairwise_terminal_distance"] = pairwise;
  AddCheck({"closed_loop_pairwise_convergence", pairwise <= 2.0 * spec.radius,
            pairwise, 2.0 * spec.radius,
            "max |x_i(T) - x_j(T)| against twice the synthesized radius", "run"});

  const VectorField f = ClosedLoopField(GetPlant(), spec, GetModel().net);
  Vec x_star;
  try {
    x_star = EquilibriumOracle(f, sim.trajectories.front().states.back());
  } catch (const std::exception& e) {
    AddCheck({"closed_loop_envelope", false, 0.0, 1.0,
              std::string("equilibrium oracle failed: ") + e.what(), "run"});
    WritePlot(sim, &spec, nullptr);
    return;
  }
  simulation_[prefix]["equilibrium"] = VecToJson(x_star);
  double worst = 0.0;
  bool pass = true;
  for (const auto& traj : sim.trajectories) {
    const EnvelopeReport r = EnvelopeCheck(traj, x_star, spec, GetModel().epsilon);
    worst = std::max(worst, r.worst_ratio);
    pass = pass && r.pass;
  }
  simulation_[prefix]["envelope_worst_ratio"] = worst;
  AddCheck({"closed_loop_envelope", pass, worst, 1.0,
            "max |x(t) - x*| / envelope(t) on the true plant", "run"});
  WritePlot(sim, &spec, &x_star);
}

void Runner::ModelDecayCheck(const VectorField& f, double c, double rate,
                             const std::string& name) {
  const std::vector<Vec> ics = InitialConditions();
  std::vector<Trajectory> trajs;
  for (const auto& x0 : ics) {
    try {
      trajs.push_back(Rk4Simulate(f, x0, cfg_.t_end, cfg_.h, GetModel().box));
    } catch (const SimulationAborted& e) {
      throw PipelineError(ExitCode::kSimulation, "simulate", e.what());
    }
  }
  const DecayReport r = ContractionDecayTest(trajs, c, rate);
  simulation_[name] = Json{{"pairs_checked", r.pairs_checked},
                           {"samples_checked", r.samples_checked},
                           {"pairs_voided", r.pairs_voided},
                           {"worst_ratio", r.worst_ratio},
                           {"c", c},
                           {"rate", rate}};
  AddCheck({name, r.pass, r.worst_ratio, 1.0,
            "pairwise decay on the learned model, |dx(t)| / (c e^{-rate t} |dx(0)|)",
            "run"});
}

void Runner::WritePlot(const SimulationOutcome& sim, const ControllerSpec* spec,
                       const Vec* x_star) {
  PlotOptions opts;
  opts.title = command_ + ": closed-loop trajectories";
  if (spec && x_star && spec->s_low > 0.0) {
    EnvelopeOverlay env;
    env.x_star = *x_star;
    env.c = std::sqrt(spec->s_up / spec->s_low);
    env.rate = spec->gamma / 2.0;
    env.radius = spec->radius;
    opts.envelope = env;
  }
  WriteText("trajectories.svg", PlotSvg(sim.trajectories, opts));
}

ExitCode Runner::Finish() {
  if (!simulation_.empty()) report_.simulation = simulation_;
  const Json j = EmitReport(report_);
  EnsureDir();
  try {
    WriteReport(cfg_.output_dir, j);
  } catch (const std::exception& e) {
    throw PipelineError(ExitCode::kIo, "report", e.what());
  }
  std::cout << TextSummary(j);
  return AllChecksPass(report_) ? ExitCode::kOk : ExitCode::kCheckFailed;
}

ExitCode Runner::GenData() {
  auto [train, validation] = Datasets();
  WriteJson("dataset_train.json", DatasetToJson(train));
  WriteJson("dataset_validation.json", DatasetToJson(validation));
  return Finish();
}

ExitCode Runner::Train() {
  cfg_.model_source = "train";
  GetModel();
  return Finish();
}

ExitCode Runner::Bounds() {
  GetBounds();
  return Finish();
}

ExitCode Runner::CertifyCommand() {
  const CertifyResult r = RunCertify();
  Finish();
  if (r.status != CertifyStatus::kCertified) {
    throw PipelineError(ExitCode::kNotCertified, "certify",
                        std::string(ToString(r.status)) + ": " + r.message);
  }
  return AllChecksPass(report_) ? ExitCode::kOk : ExitCode::kCheckFailed;
}

ExitCode Runner::SynthesizeCommand() {
  RunSynthesis();
  return Finish();
}

ExitCode Runner::Simulate() {
  ControllerSpec spec;
  if (cfg_.zero_controller) {
    spec = ZeroController();
    report_.controller = Json{{"form", "zero"}};
  } else {
    spec = RunSynthesis();
  }
  const SimulationOutcome sim = SimulateClosedLoop(spec, "traj");
  WritePlot(sim, nullptr, nullptr);
  return Finish();
}

ExitCode Runner::Verify() {
  const CertifyResult cert = RunCertify();
  if (cert.status == CertifyStatus::kCertified) {
    const ContractionCertificate& c = *cert.certificate;
    const NodeModel& m = GetModel();
    ModelDecayCheck([&m](const Vec& x) { return m.Evaluate(x); }, c.c(),
                    c.rate(), "model_contraction_decay");
    // The true plant, uncontrolled, against the envelope the certificate
    // implies for the learned model.
    const SimulationOutcome sim = SimulateClosedLoop(ZeroController(), "traj");
    const Plant& plant = GetPlant();
    Vec x_star;
    try {
      x_star = EquilibriumOracle(plant.drift, sim.trajectories.front().states.back());
    } catch (const std::exception& e) {
      AddCheck({"plant_envelope", false, 0.0, 1.0,
                std::string("equilibrium oracle failed: ") + e.what(), "run"});
      return Finish();
    }
    double worst = 0.0;
    bool pass = true;
    for (const auto& traj : sim.trajectories) {
      const EnvelopeReport r =
          EnvelopeCheck(traj, x_star, c.p_low, c.p_up, c.gamma, m.epsilon);
      worst = std::max(worst, r.worst_ratio);
      pass = pass && r.pass;
    }
    simulation_["traj"]["equilibrium"] = VecToJson(x_star);
    AddCheck({"plant_envelope", pass, worst, 1.0,
              "max |x(t) - x*| / envelope(t) on the true plant", "run"});
    WritePlot(sim, nullptr, nullptr);
    return Finish();
  }
  if (cert.status == CertifyStatus::kNumericalFailure) {
    AddCheck({"certify", false, 0.0, 0.0, cert.message, "run"});
  }
  const ControllerSpec spec = RunSynthesis();
  const NodeModel& m = GetModel();
  const Mat g = GetPlant().g;
  ModelDecayCheck(
      [&m, &spec, g](const Vec& x) -> Vec {
        return m.Evaluate(x) + g * spec.Evaluate(m.net, x);
      },
      std::sqrt(spec.s_up / spec.s_low), spec.gamma / 2.0,
      "model_closed_loop_decay");
  const SimulationOutcome sim = SimulateClosedLoop(spec, "traj");
  ClosedLoopChecks(spec, sim, "traj");
  return Finish();
}

ExitCode Runner::Repro(const std::string& example) {
  const bool retrain = cfg_.model_source == "train";
  const bool ex1 = example == "ex1";
  NodeModel& m = GetModel();
  const ReferenceCase rc = ex1 ? PendulumReference() : VehicleReference();
  GetBounds();

  // Reference values, tagged by where each number comes from.
  Json ref = Json::object();
  const auto tag = [](const Json& v, const char* source) {
    return Json{{"value", v}, {"source", source}};
  };
  ref["example"] = example;
  ref["printed_H"] = tag(MatToJson(rc.H), "printed");
  ref["printed_mu"] = tag(rc.mu, "printed");
  ref["printed_radius"] = tag(rc.radius, "printed");
  ref["printed_epsilon"] = tag(rc.model.epsilon, "printed");
  ref["printed_alpha"] = tag(rc.printed_alpha, "printed");
  std::vector<double> alphas;
  for (const auto& l : bounds_->per_layer) alphas.push_back(l.alpha);
  ref["interval_alpha"] = tag(alphas, "run");

  const Mat h_from_printed = rc.Y * rc.S.inverse();
  const double h_err = (h_from_printed - rc.H).cwiseAbs().maxCoeff();
  ref["H_from_printed_S_Y"] = tag(MatToJson(h_from_printed), "derived");
  AddCheck({"gain_identity_printed", h_err <= 5e-4, h_err, 5e-4,
            "max entry |Y S^{-1} - H| on printed values", "printed"});

  if (ex1 && !retrain) {
    // Printed (S, Y, mu) in the convex single-layer LMI at the printed slope.
    SectorBounds printed = *bounds_;
    printed.per_layer[0].alpha = kPendulumSynthesisAlpha;
    printed.per_layer[0].beta = 1.0;
    const double s_low = SymEigBounds(rc.S).lambda_min;
    const Mat lmi = CtrlConvexMatrix(rc.model, rc.g, printed, rc.S, rc.Y,
                                     rc.mu, s_low, CtrlForm::kSingleLayer);
    const double lam = SymEigBounds(lmi).lambda_max;
    ref["printed_plugin_lambda_max"] = tag(lam, "derived");
    const SingleLayerCoefficients k =
        SingleLayerCoefficientsFor(kPendulumSynthesisAlpha, 1.0);
    ref["single_layer_quadratic"] =
        Json{{"value", k.quadratic}, {"printed", 102850.0}, {"source", "derived"}};
    ref["single_layer_linear"] =
        Json{{"value", k.linear}, {"printed", 453.5455}, {"source", "derived"}};
    AddCheck({"printed_plugin", lam <= 1e-2, lam, 1e-2,
              "lambda_max of the convex controller LMI at printed (S, Y, mu)",
              "printed"});
  }

  const CertifyResult cert = RunCertify();
  ref["autonomous_certification"] = tag(ToString(cert.status), "run");
  if (ex1 && !retrain) {
    AddCheck({"autonomous_not_certified",
              cert.status == CertifyStatus::kInfeasible, 0.0, 0.0,
              std::string("certify status: ") + ToString(cert.status), "run"});
  }

  if (retrain) {
    const double max_res = m.epsilon / cfg_.error_margin;
    AddCheck({"retrain_max_validation_residual", max_res <= 0.01, max_res, 0.01,
              "max validation residual of the freshly trained model", "run"});
  }

  ControllerSpec spec;
  try {
    spec = RunSynthesis();
  } catch (const PipelineError& e) {
    if (e.code() != ExitCode::kSynthesis) throw;
    AddCheck({"synthesis_feasible", false, 0.0, 0.0, e.what(), "run"});
    report_.reference = ref;
    Finish();
    throw;
  }
  AddCheck({"synthesis_feasible", true, 0.0, 0.0, "", "run"});
  ref["run_H"] = tag(MatToJson(spec.H), "run");
  ref["run_mu"] = tag(spec.mu, "run");
  ref["run_gamma"] = tag(spec.gamma, "run");
  ref["run_radius"] = tag(spec.radius, "run");

  if (!retrain) {
    if (ex1) {
      AddCheck({"radius_bound", spec.radius <= 0.05, spec.radius, 0.05,
                "4 eps mu / s_low sqrt(s_up / s_low)", "run"});
    } else {
      AddCheck({"mu_near_zero", spec.mu < 1e-6, spec.mu, 1e-6,
                "optimal mu of the two-layer reduced synthesis", "run"});
    }
  }

  const SimulationOutcome sim = SimulateClosedLoop(spec, "traj");
  if (!retrain) {
    ClosedLoopChecks(spec, sim, "traj");
  } else {
    simulation_["traj"]["max_pairwise_terminal_distance"] =
        MaxPairwiseTerminal(sim.trajectories);
    WritePlot(sim, nullptr, nullptr);
  }

  if (ex1) {
    // Negative control: the frictionless pendulum without input keeps its
    // energy, so the distance to the origin does not shrink.
    Vec x0(2);
    x0 << 1.0, 1.0;
    const Trajectory open =
        Rk4Simulate(GetPlant().drift, x0, cfg_.t_end, cfg_.h);
    double tail_max = 0.0;
    for (size_t i = open.states.size() / 2; i < open.states.size(); ++i) {
      tail_max = std::max(tail_max, open.states[i].norm());
    }
    const double ratio = tail_max / x0.norm();
    simulation_["uncontrolled"] = Json{{"x0", VecToJson(x0)},
                                       {"final_state", VecToJson(open.states.back())},
                                       {"late_max_over_initial", ratio}};
    AddCheck({"uncontrolled_no_decay", ratio >= 0.9, ratio, 0.9,
              "max |x(t)| over the second half / |x(0)|, zero input", "run"});
  }

  report_.reference = ref;
  return Finish();
}

std::vector<Trajectory> ReadTrajectoryCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError(ExitCode::kIo, "plot", "cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<int> x_cols;
  for (size_t i = 0; i < header.size(); ++i) {
    if (!header[i].empty() && header[i][0] == 'x') x_cols.push_back(static_cast<int>(i));
  }
  if (header.empty() || header[0] != "t" || x_cols.empty()) {
    throw PipelineError(ExitCode::kIo, "plot", "unexpected CSV header in " + path);
  }
  Trajectory traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw PipelineError(ExitCode::kIo, "plot", "malformed number in " + path);
    }
    if (cells.size() != header.size()) {
      throw PipelineError(ExitCode::kIo, "plot", "ragged row in " + path);
    }
    Vec x(x_cols.size());
    for (size_t k = 0; k < x_cols.size(); ++k) x(k) = cells[x_cols[k]];
    traj.times.push_back(cells[0]);
    traj.states.push_back(x);
  }
  if (traj.states.empty()) {
    throw PipelineError(ExitCode::kIo, "plot", "no samples in " + path);
  }
  return {traj};
}

ExitCode Runner::Plot() {
  std::vector<std::string> files;
  std::error_code ec;
  if (fs::is_directory(cfg_.output_dir, ec)) {
    for (const auto& entry : fs::directory_iterator(cfg_.output_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("traj_", 0) == 0 && entry.path().extension() == ".csv") {
        files.push_back(entry.path().string());
      }
    }
  }
  if (files.empty()) {
    throw PipelineError(ExitCode::kIo, "plot",
                        "no traj_*.csv files in " + cfg_.output_dir);
  }
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> trajs;
  for (const auto& f : files) {
    auto t = ReadTrajectoryCsv(f);
    trajs.push_back(std::move(t.front()));
  }
  PlotOptions opts;
  opts.title = "trajectories";
  WriteText("trajectories.svg", PlotSvg(trajs, opts));
  std::cout << "wrote " << Path("trajectories.svg") << " from " << files.size()
            << " trajectories\n";
  return ExitCode::kOk;
}

ExitCode Runner::Dispatch(const std::string& argument) {
  if (command_ == "gen-data") return GenData();
  if (command_ == "train") return Train();
  if (command_ == "bounds") return Bounds();
  if (command_ == "certify") return CertifyCommand();
  if (command_ == "synthesize") return SynthesizeCommand();
  if (command_ == "simulate") return Simulate();
  if (command_ == "verify") return Verify();
  if (command_ == "repro") return Repro(argument);
  if (command_ == "plot") return Plot();
  throw PipelineError(ExitCode::kUsage, "usage", "unknown command " + command_);
}

void WriteErrorReport(const std::string& dir, const std::string& command,
                      ExitCode code, const std::string& stage,
                      const std::string& message) {
  std::cerr << "error [" << stage << "]: " << message << "\n";
  const Json j{{"command", command},
               {"exit_code", static_cast<int>(code)},
               {"stage", stage},
               {"message", message}};
  std::error_code ec;
  fs::create_directories(dir, ec);
  try {
    WriteJsonFile((fs::path(dir) / "error.json").string(), j);
  } catch (const std::exception&) {
    // The directory itself is the problem; stderr already has the message.
  }
}

}  // namespace

ExitCode RunCommand(const std::string& command, const std::string& argument,
                    PipelineConfig cfg, const RunFlags& flags) {
  ApplyFlags(cfg, flags);
  const std::string dir = cfg.output_dir;
  try {
    if (const char* fault = std::getenv("NODECTL_FAULT_INJECT");
        fault && std::string(fault) == "internal") {
      throw std::logic_error("injected internal fault");
    }
    Runner runner(std::move(cfg), command);
    return runner.Dispatch(argument);
  } catch (const PipelineError& e) {
    WriteErrorReport(dir, command, e.code(), e.stage(), e.what());
    return e.code();
  } catch (const std::exception& e) {
    WriteErrorReport(dir, command, ExitCode::kInternal, "internal", e.what());
    return ExitCode::kInternal;
  }
}

}  // namespace nodectl
