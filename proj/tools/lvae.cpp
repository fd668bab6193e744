#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "lvae/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Linear VAE and probabilistic PCA experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  using Command = int (*)(const lvae::ExperimentConfig&, std::ostream&);
  const std::pair<const char*, Command> commands[] = {
      {"fit-ppca", lvae::cmd_fit_ppca},   {"train", lvae::cmd_train},     {"landscape", lvae::cmd_landscape},
      {"collapse", lvae::cmd_collapse},   {"verify", lvae::cmd_verify},   {"compare", lvae::cmd_compare},
  };
  const char* help[] = {"closed-form pPCA fit and k-sweep", "train a linear VAE",
                        "2-D slice of the objective around a stationary point", "posterior-collapse report",
                        "run the built-in verification suites", "paired analytic vs stochastic training"};
  Command selected = nullptr;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory, overrides outputs.directory");
    sub->callback([&selected, fn = commands[i].second] { selected = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lvae::exit_config;
  }

  return lvae::run_command(
      [&] {
        auto config = lvae::load_config(config_path);
        if (!out_dir.empty()) config.outputs.directory = std::filesystem::path(out_dir);
        return selected(config, std::cout);
      },
      std::cerr);
}
