#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "tte/errors.hpp"
#include "tte/experiments.hpp"
#include "tte/report.hpp"

int main(int argc, char** argv) {
  CLI::App app{"desk-scale test-time transformation ensembling workbench"};
  app.set_version_flag("--version", tte::kToolVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, picked;
  uint64_t seed = 0;
  bool seed_given = false;
  for (const std::string& name : tte::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key=value config file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "override the config's seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->callback([&picked, name] { picked = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    tte::Config cfg = tte::Config::from_file(config_path);
    tte::RunOutput out =
        tte::run_command(picked, std::move(cfg), out_dir, seed_given ? &seed : nullptr);
    for (const std::string& f : out.files) std::printf("wrote %s\n", f.c_str());
    return 0;
  } catch (const tte::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const tte::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const tte::DataError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
