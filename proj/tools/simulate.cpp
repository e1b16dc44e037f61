// simulate --config FILE --out DIR [--workers N] [--seed S] [--mode full|effective]
//
// KERRCAT_WORKERS sets the worker count when --workers is absent.
// Exit codes: 0 success, 2 configuration error, 3 resource refusal,
// 4 numerical tolerance breach.

#include "kerrcat/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Kerr-cat multiqubit gate experiments"};
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  app.add_option("--config", config_path, "experiment JSON")->required();
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber)->envname("KERRCAT_WORKERS");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--mode", mode, "override the config mode")->check(CLI::IsMember({"full", "effective"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    kerrcat::ExperimentSpec spec = kerrcat::load_spec(config_path);
    std::optional<kerrcat::Mode> mode_override;
    if (mode) mode_override = kerrcat::mode_from_string(*mode);
    const kerrcat::RunSummary s = kerrcat::run_experiment(std::move(spec), out_dir, workers, seed, mode_override);
    std::cout << s.points << " points in " << s.wall_time_s << " s\n" << s.csv_path << "\n" << s.manifest_path << "\n";
    return 0;
  } catch (const kerrcat::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const kerrcat::ResourceRefusal& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const kerrcat::ToleranceBreach& e) {
    std::cerr << "tolerance breach: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
