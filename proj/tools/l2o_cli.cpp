// l2o train|eval|compare|gradcheck [--config FILE] [--<key> VALUE ...]
//
// Every config key is also a flag; flags override the file.

#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "l2o/config.hpp"
#include "l2o/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learned optimizer training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> values;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "meta-train a learned optimizer"},
      {"eval", "evaluate a checkpoint or an analytical optimizer"},
      {"compare", "tabulate evaluation reports"},
      {"gradcheck", "run the finite-difference gradient suites"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value config file");
    for (const auto& key : l2o::config_keys()) {
      if (key == "command") continue;
      sub->add_option("--" + key, values[key], "config key " + key);
    }
  }
  CLI11_PARSE(app, argc, argv);

  l2o::Overrides flags;
  flags.emplace_back("command", app.get_subcommands().front()->get_name());
  for (const auto& key : l2o::config_keys()) {
    for (const auto* sub : app.get_subcommands()) {
      if (key != "command" && sub->count("--" + key) > 0) flags.emplace_back(key, values[key]);
    }
  }

  try {
    const l2o::RunConfig cfg = l2o::load_config(config_path, flags);
    return l2o::dispatch(cfg, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
