#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "irregular_sde/cli.hpp"
#include "irregular_sde/errors.hpp"
#include "irregular_sde/version.hpp"

namespace {

constexpr const char* kSubcommands =
    "rate|schemes|density|jump-integral|increments|yw|mollify|komatsu|verify";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strong-rate experiments for Euler-Maruyama schemes with "
               "irregular drift"};
  app.set_version_flag("--version", irregular_sde::kLibraryVersion);

  std::string subcommand, config_path, out_dir, format;
  std::uint64_t seed = 0;
  int workers = -1;
  app.add_option("subcommand", subcommand, kSubcommands);
  app.add_option("--config", config_path, "configuration file (key = value)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config)");
  app.add_option("--workers", workers,
                 "worker threads; 0 = hardware (never changes results)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "csv|json|both");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string config_text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot read config file '" << config_path << "'\n";
      return 2;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    config_text = buf.str();
  }

  try {
    irregular_sde::RunConfig cfg =
        irregular_sde::parse_config(config_text, subcommand);
    if (seed_opt->count() > 0) cfg.global["seed"] = std::to_string(seed);
    if (workers >= 0) cfg.global["workers"] = std::to_string(workers);
    if (!out_dir.empty()) cfg.global["out"] = out_dir;
    if (!format.empty()) {
      if (format != "csv" && format != "json" && format != "both") {
        std::cerr << "error: --format must be csv, json or both\n";
        return 2;
      }
      cfg.global["format"] = format;
    }
    return irregular_sde::execute(cfg);
  } catch (const irregular_sde::resource_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
