#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pwsp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Power-weighted shortest paths: sampling, paths, geodesics and estimators"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool print_config = false;
  app.add_option("--config", config_path, "experiment configuration (JSON)")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out, "overrides the config output directory");
  app.add_option("--threads", threads, "worker threads, 0 = all cores");
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pwsp::cli::kExitConfig;
  }

  pwsp::cli::ExperimentConfig cfg;
  try {
    auto j = pwsp::cli::load_json_file(config_path);
    if (j.is_object()) {
      if (seed) j["seed"] = *seed;
      if (out) j["output_dir"] = *out;
      if (threads) j["threads"] = *threads;
    }
    cfg = pwsp::cli::parse_config(j);
  } catch (const pwsp::Error& e) {
    std::cerr << pwsp::cli::error_record(e.kind(), e.what(), pwsp::cli::kExitConfig).dump() << "\n";
    return pwsp::cli::kExitConfig;
  }
  if (print_config) {
    std::cout << pwsp::cli::to_json(cfg).dump(2) << "\n";
    return pwsp::cli::kExitOk;
  }
  return pwsp::cli::run(cfg, std::cout, std::cerr);
}
