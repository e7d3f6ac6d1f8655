#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "ev3/config.hpp"
#include "ev3/harness.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& out_dir, const std::string& regimes,
                const std::uint64_t* seed, bool parallel, bool quiet) {
  ev3::ExperimentConfig config = ev3::load_config(config_path);
  if (!regimes.empty()) config.regimes = ev3::parse_regimes(regimes);
  if (seed) config.seed = *seed;
  config.validate();

  const auto start = std::chrono::steady_clock::now();
  const ev3::ExperimentResult result = ev3::run_experiment(config, parallel);
  ev3::emit_results(result, out_dir);
  if (!quiet) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "teacher test_acc " << ev3::format_float(result.teacher.test_acc) << '\n';
    for (const auto& r : result.regimes) {
      std::cerr << r.regime << ": " << r.rows.size() << " rows, " << r.cum_steps << " steps, " << r.expansions
                << " expansions\n";
    }
    std::fprintf(stderr, "wrote %s in %.1fs\n", out_dir.c_str(), secs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EV3 desk-scale experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, regimes;
  std::uint64_t seed = 0;
  bool parallel = false, quiet = false;
  auto* run = app.add_subcommand("run", "Train the teacher, run the regimes, write CSVs");
  run->add_option("--config", config_path, "Config file (key=value)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--regimes", regimes, "Comma-separated subset of vanilla,morphism,ev3_base,ev3_sat");
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides run.seed)");
  run->add_flag("--parallel", parallel, "Run regimes on separate threads");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string preset_name = "desk";
  auto* gen = app.add_subcommand("gen-config", "Print a preset config to stdout");
  gen->add_option("--preset", preset_name, "desk or smoke")->check(CLI::IsMember({"desk", "smoke"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::cout << ev3::to_text(ev3::preset(preset_name));
      return 0;
    }
    return run_command(config_path, out_dir, regimes, seed_opt->count() ? &seed : nullptr, parallel, quiet);
  } catch (const ev3::CalibrationError& e) {
    std::cerr << "calibration error: " << e.what() << '\n';
    return 3;
  } catch (const ev3::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
