// nodectl: learn, certify and control neural ODE models from the shell.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nodectl/pipeline.h"

namespace fs = std::filesystem;
using nodectl::ExitCode;

namespace {

int Code(ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nodectl - neural ODE contraction certificates and controllers"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool retrain = false;
  app.add_option("--config", config_path, "pipeline configuration (JSON)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "seed for data, training and simulation");
  app.add_flag("--retrain", retrain, "train a fresh model instead of fixtures");

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"gen-data", "sample training and validation data from the plant"},
      {"train", "train the model and bound its residual"},
      {"bounds", "propagate layer sector bounds over the box"},
      {"certify", "search for a contraction certificate"},
      {"synthesize", "sweep and solve the controller LMIs"},
      {"simulate", "closed-loop RK4 runs on the true plant"},
      {"verify", "certify, else synthesize, then simulate and check"},
      {"plot", "SVG of the traj_*.csv files in the output directory"},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();
  std::string example;
  CLI::App* repro = app.add_subcommand("repro", "reproduce a shipped example");
  repro->add_option("example", example, "ex1 or ex2")
      ->required()
      ->check(CLI::IsMember({"ex1", "ex2"}));
  repro->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return Code(ExitCode::kUsage);
  }

  const std::string command = app.get_subcommands().front()->get_name();

  nodectl::Json config_json = nodectl::Json::object();
  if (!config_path.empty()) {
    try {
      config_json = nodectl::ReadJsonFile(config_path);
    } catch (const std::exception& e) {
      std::cerr << "error [config]: " << e.what() << "\n";
      return Code(ExitCode::kIo);
    }
  } else if (command == "repro") {
    config_json = nodectl::ReproConfigJson(example);
  }

  nodectl::PipelineConfig cfg;
  try {
    cfg = nodectl::ConfigFromJson(config_json);
  } catch (const nodectl::PipelineError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return Code(e.code());
  }
  // Relative model paths are taken relative to the config file.
  if (!config_path.empty() && !cfg.model_path.empty() &&
      fs::path(cfg.model_path).is_relative()) {
    cfg.model_path =
        (fs::path(config_path).parent_path() / cfg.model_path).lexically_normal().string();
  }

  nodectl::RunFlags flags;
  if (!out_dir.empty()) flags.out_dir = out_dir;
  if (app.count("--seed") > 0) flags.seed = seed;
  flags.retrain = retrain;
  return Code(nodectl::RunCommand(command, example, cfg, flags));
}
