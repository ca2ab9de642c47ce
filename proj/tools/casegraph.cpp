#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "casegraph/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Case knowledge-graph construction and completion"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> overrides;
  for (const auto& [name, fn] : casegraph::cli::command_table()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--set", overrides, "override a scalar field, e.g. ner.epochs=5")->take_all();
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  const auto outcome = casegraph::cli::execute(command, config, overrides);
  std::cout << outcome.summary.to_json().dump(2) << std::endl;
  if (outcome.exit_code != 0) std::cerr << "casegraph " << command << ": " << outcome.summary.error << '\n';
  return outcome.exit_code;
}
