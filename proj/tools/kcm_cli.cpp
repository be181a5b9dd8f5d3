#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "kcm/io.hpp"
#include "kcm/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Kinetic cell-migration model: kinetic and limit solvers, sweeps and checks"};
  std::string config_path, output_dir;
  int threads = 1;
  long long seed = -1;
  bool quiet = false;
  app.add_option("--config", config_path, "Config file (sectioned key = value); defaults apply without one");
  app.add_option("--output", output_dir, "Output directory (overrides [output] directory)");
  app.add_option("--threads", threads, "Worker threads for the solvers")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for the randomized checks (overrides [run] seed)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", quiet, "Only report errors");
  app.require_subcommand(1);
  for (const auto& name : kcm::subcommands()) app.add_subcommand(name);
  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  kcm::RunConfig cfg;
  try {
    cfg = config_path.empty() ? kcm::parse_config("") : kcm::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << (config_path.empty() ? "config" : config_path) << ": " << e.what() << "\n";
    return 2;
  }
  if (!output_dir.empty()) cfg.output.directory = output_dir;
  if (seed >= 0) cfg.run.seed = static_cast<std::uint64_t>(seed);
  kcm::set_worker_count(threads);

  const kcm::Artifacts a = kcm::run_subcommand(cmd, cfg);
  for (const auto& line : a.log)
    if (!quiet || a.status != 0) (a.status != 0 ? std::cerr : std::cout) << line << "\n";

  try {
    std::filesystem::create_directories(cfg.output.directory);
    for (const auto& [name, bytes] : a.files)
      kcm::write_bytes((std::filesystem::path(cfg.output.directory) / name).string(), bytes);
  } catch (const std::exception& e) {
    std::cerr << "output: " << e.what() << "\n";
    return 4;
  }
  if (!quiet) std::cout << "wrote " << a.files.size() << " file(s) to " << cfg.output.directory << "\n";
  return a.status;
}
