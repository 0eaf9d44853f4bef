#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmctr/commands.hpp"

namespace {

// Config file (optional) followed by `--set key=value` overrides, validated
// as a whole.
mmctr::TrainConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  std::string body;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw mmctr::ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    body = ss.str();
  }
  for (const auto& s : sets) {
    if (s.find('=') == std::string::npos) throw mmctr::ConfigError("--set expects key=value, got '" + s + "'");
    body += "\n" + s;
  }
  return mmctr::parse_config_text(body, path.empty() ? "config" : path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmctr: multimodal click-through-rate model"};
  app.require_subcommand(1);

  std::string config, out, data, checkpoint, split = "test", input, grid_path;
  std::vector<std::string> sets;
  double tolerance = 1e-3;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", config, "flat key = value config file");
    if (required) opt->required();
    cmd->add_option("--set", sets, "override a config key (key=value), repeatable");
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  add_config(gen, false);
  gen->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train with early stopping");
  add_config(train, false);
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--split", split, "split name (train, val, test)");

  auto* predict = app.add_subcommand("predict", "score a samples file");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--input", input, "samples file")->required();
  predict->add_option("--out", out, "scores file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter");
  add_config(gradcheck, false);
  gradcheck->add_option("--tolerance", tolerance, "maximum relative error");

  auto* grid = app.add_subcommand("grid", "hyperparameter sweep");
  add_config(grid, false);
  grid->add_option("--grid", grid_path, "grid file; omit for the built-in tuning grid");
  grid->add_option("--data", data, "dataset directory")->required();
  grid->add_option("--out", out, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  namespace cmd = mmctr::commands;
  try {
    if (*gen) return cmd::gen_data(load_config(config, sets), out, std::cout);
    if (*train) return cmd::train(load_config(config, sets), data, out, std::cout);
    if (*eval) return cmd::eval(checkpoint, data, split, std::cout);
    if (*predict) return cmd::predict(checkpoint, input, out);
    if (*gradcheck) return cmd::gradcheck(load_config(config, sets), tolerance, std::cout);
    if (*grid) {
      const auto spec = grid_path.empty() ? mmctr::tuning_grid() : mmctr::parse_grid(grid_path);
      return cmd::grid(load_config(config, sets), spec, data, out, std::cout);
    }
  } catch (const mmctr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
