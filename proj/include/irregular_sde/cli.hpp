#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "irregular_sde/diagnostics.hpp"
#include "irregular_sde/em_scheme.hpp"
#include "irregular_sde/mollifier.hpp"
#include "irregular_sde/rate_harness.hpp"
#include "irregular_sde/report_io.hpp"
#include "irregular_sde/sde_model.hpp"
#include "irregular_sde/version.hpp"
#include "irregular_sde/yamada_watanabe.hpp"

namespace irregular_sde {

// Configuration is a flat key-value document: global keys first, then one
// [section] per subcommand. Numbers are decimal strings, lists are
// comma-separated, '#' starts a comment. Every default is materialized at
// parse time and echoed into the run metadata.
struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> global;  // problem, seed, out, ...
  std::map<std::string, std::string> params;  // the active section, resolved

  bool operator==(const RunConfig&) const = default;

  const std::string& param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end())
      throw std::invalid_argument("config: missing key '" + key + "'");
    return it->second;
  }
  const std::string& global_at(const std::string& key) const {
    auto it = global.find(key);
    if (it == global.end())
      throw std::invalid_argument("config: missing global key '" + key + "'");
    return it->second;
  }
};

namespace cli_detail {

struct KeySpec {
  const char* key;
  const char* default_value;
};

inline const std::vector<KeySpec>& global_schema() {
  static const std::vector<KeySpec> schema = {
      {"subcommand", ""},      {"problem", "sign_drift"}, {"seed", "42"},
      {"out", "out"},          {"format", "both"},        {"workers", "0"},
  };
  return schema;
}

inline const std::map<std::string, std::vector<KeySpec>>& section_schema() {
  static const std::map<std::string, std::vector<KeySpec>> schema = {
      {"rate",
       {{"scheme", "standard"},
        {"norm", "sup"},
        {"n_list", "16,32,64,128,256,512,1024"},
        {"ref_level", "14"},
        {"paths", "10000"},
        {"p", "1"},
        {"taus", "horizon"},
        {"slope_band", ""},
        {"budget", "20000000000"}}},
      {"schemes",
       {{"schemes", "standard,polygonal,mixed"},
        {"norm", "sup"},
        {"n_list", "16,32,64,128,256,512,1024"},
        {"ref_level", "14"},
        {"paths", "10000"},
        {"p", "1"},
        {"taus", "horizon"},
        {"slope_band", ""},
        {"budget", "20000000000"}}},
      {"density",
       {{"n", "64"},
        {"t_index", "0"},  // 0 means "use n" (the horizon)
        {"paths", "100000"},
        {"bins", "80"},
        {"envelope_C", "1"},
        {"envelope_c", "1"},
        {"calibrate", "false"},
        {"range_sigmas", "6"},
        {"enforce", "false"}}},
      {"jump-integral",
       {{"n_list", "16,32,64,128,256,512,1024"},
        {"q", "1"},
        {"paths", "100000"}}},
      {"increments",
       {{"n_list", "16,64,256"}, {"q", "2"}, {"paths", "100000"}}},
      {"yw",
       {{"delta", "2"},
        {"eps", "0.25"},
        {"grid_points", "10000"},
        {"grid_min", "0.000001"},
        {"grid_max", "10"},
        {"dump_samples", "false"},
        {"dump_points", "500"}}},
      {"mollify",
       {{"base", "step"},
        {"box_L", "5"},
        {"N_list", "2,4,8,16,32,64"},
        {"a_list", "0,1,-1,5,-5"},
        {"u_list", "0.01,0.1,1,10,100"},
        {"convergence", "false"},
        {"conv_n", "16"},
        {"conv_kappa", "0.25"},
        {"conv_paths", "2000"}}},
      {"komatsu", {{"points", "10000"}, {"x_max", "20"}}},
      {"verify", {{"samples", "10000"}}},
  };
  return schema;
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(const std::string& key,
                               const std::vector<KeySpec>& schema) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& spec : schema) {
    const std::size_t d = levenshtein(key, spec.key);
    if (d < best_d) {
      best_d = d;
      best = spec.key;
    }
  }
  return best;
}

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::int64_t x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' needs an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' needs an unsigned integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' needs a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: key '" + key +
                              "' needs true or false, got '" + v + "'");
}

inline std::vector<std::int64_t> parse_int_list(const std::string& key,
                                                const std::string& v) {
  std::vector<std::int64_t> out;
  for (const auto& item : split(v, ','))
    if (!item.empty()) out.push_back(parse_int(key, item));
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' needs a list");
  return out;
}

inline std::vector<double> parse_double_list(const std::string& key,
                                             const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ','))
    if (!item.empty()) out.push_back(parse_double(key, item));
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' needs a list");
  return out;
}

inline std::vector<StoppingTimeSpec> parse_taus(const std::string& v) {
  std::vector<StoppingTimeSpec> out;
  for (const auto& item : split(v, ';')) {
    if (item.empty()) continue;
    if (item == "horizon") {
      out.push_back(StoppingTimeSpec::horizon());
    } else if (item.rfind("deterministic:", 0) == 0) {
      out.push_back(StoppingTimeSpec::deterministic(
          parse_double("taus", item.substr(14))));
    } else if (item.rfind("first_exit:", 0) == 0) {
      out.push_back(
          StoppingTimeSpec::first_exit(parse_double("taus", item.substr(11))));
    } else {
      throw std::invalid_argument(
          "config: taus entries are horizon, deterministic:<t> or "
          "first_exit:<r>, got '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("config: taus must be nonempty");
  return out;
}

// Structural validation of one resolved key; cross-field checks live with
// the dispatched operation.
inline void validate_param(const std::string& section, const std::string& key,
                           const std::string& value) {
  auto require = [&](bool ok, const std::string& why) {
    if (!ok)
      throw std::invalid_argument("config: [" + section + "] " + key + ": " +
                                  why);
  };
  if (key == "n_list" || key == "n" || key == "conv_n") {
    for (std::int64_t n : key == "n_list"
                              ? parse_int_list(key, value)
                              : std::vector<std::int64_t>{parse_int(key, value)})
      require(n >= 1 && (n & (n - 1)) == 0, "n must be a power of 2");
  } else if (key == "N_list") {
    const auto list = parse_int_list(key, value);
    for (std::size_t i = 0; i < list.size(); ++i) {
      require(list[i] >= 1, "N must be >= 1");
      if (i) require(list[i] > list[i - 1], "N_list must be increasing");
    }
  } else if (key == "paths" || key == "conv_paths") {
    require(parse_int(key, value) >= 2, "paths must be >= 2");
  } else if (key == "ref_level") {
    const auto lvl = parse_int(key, value);
    require(lvl >= 1 && lvl <= 30, "ref_level must lie in [1, 30]");
  } else if (key == "p") {
    const double p = parse_double(key, value);
    require(p >= 1.0 && p <= 8.0, "p must lie in [1, 8]");
  } else if (key == "q") {
    require(parse_double(key, value) > 0.0, "q must be > 0");
  } else if (key == "taus") {
    parse_taus(value);
  } else if (key == "scheme") {
    scheme_from_string(value);
  } else if (key == "schemes") {
    for (const auto& s : split(value, ',')) scheme_from_string(s);
  } else if (key == "norm") {
    norm_from_string(value);
  } else if (key == "slope_band") {
    if (!value.empty()) {
      const auto band = parse_double_list(key, value);
      require(band.size() == 2 && band[0] <= band[1],
              "slope_band must be 'lo,hi' with lo <= hi");
    }
  } else if (key == "budget" || key == "box_L" || key == "range_sigmas" ||
             key == "x_max") {
    require(parse_double(key, value) > 0.0, key + std::string(" must be > 0"));
  } else if (key == "t_index" || key == "bins" || key == "grid_points" ||
             key == "points" || key == "samples" || key == "dump_points") {
    require(parse_int(key, value) >= 0, "must be a nonnegative integer");
  } else if (key == "envelope_C") {
    require(parse_double(key, value) >= 1.0, "envelope C must be >= 1");
  } else if (key == "envelope_c") {
    require(parse_double(key, value) > 0.0, "envelope c must be > 0");
  } else if (key == "delta") {
    require(parse_double(key, value) > 1.0, "delta must be > 1");
  } else if (key == "eps") {
    const double e = parse_double(key, value);
    require(e > 0.0 && e < 1.0, "eps must lie in (0, 1)");
  } else if (key == "grid_min" || key == "grid_max") {
    require(parse_double(key, value) > 0.0, "grid bounds must be > 0");
  } else if (key == "conv_kappa") {
    require(parse_double(key, value) > 0.0, "kappa must be > 0");
  } else if (key == "base") {
    mollifier_base_preset(value);  // throws with the valid names
  } else if (key == "calibrate" || key == "enforce" ||
             key == "convergence" || key == "dump_samples") {
    parse_bool(key, value);
  } else if (key == "a_list" || key == "u_list") {
    const auto list = parse_double_list(key, value);
    if (key == "u_list")
      for (double u : list) require(u > 0.0, "u values must be > 0");
  }
}

}  // namespace cli_detail

inline RunConfig parse_config(const std::string& text,
                              const std::string& subcommand_override = "") {
  using namespace cli_detail;
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::string section;  // "" = global
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section on line " +
                                    std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      if (!section_schema().count(section)) {
        std::string msg = "config: unknown section '" + section +
                          "'; subcommands:";
        for (const auto& [name, _] : section_schema()) msg += " " + name;
        throw std::invalid_argument(msg);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected 'key = value' on line " +
                                  std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& schema =
        section.empty() ? global_schema() : section_schema().at(section);
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&](const KeySpec& s) { return key == s.key; });
    if (!known)
      throw std::invalid_argument(
          "config: unknown key '" + key + "' in section '" +
          (section.empty() ? "(global)" : section) + "'; did you mean '" +
          nearest_key(key, schema) + "'?");
    if (raw[section].count(key))
      throw std::invalid_argument("config: duplicate key '" + key +
                                  "' on line " + std::to_string(line_no));
    raw[section][key] = value;
  }

  RunConfig cfg;
  for (const auto& spec : global_schema()) {
    const auto it = raw[""].find(spec.key);
    cfg.global[spec.key] =
        it != raw[""].end() ? it->second : spec.default_value;
  }
  if (!subcommand_override.empty())
    cfg.global["subcommand"] = subcommand_override;
  cfg.subcommand = cfg.global["subcommand"];
  if (cfg.subcommand.empty())
    throw std::invalid_argument(
        "config: no subcommand given (key 'subcommand' or command line)");
  if (!section_schema().count(cfg.subcommand)) {
    std::string msg = "config: unknown subcommand '" + cfg.subcommand +
                      "'; valid:";
    for (const auto& [name, _] : section_schema()) msg += " " + name;
    throw std::invalid_argument(msg);
  }

  // Global structural checks.
  parse_u64("seed", cfg.global["seed"]);
  if (parse_int("workers", cfg.global["workers"]) < 0)
    throw std::invalid_argument("config: workers must be >= 0");
  const std::string& format = cfg.global["format"];
  if (format != "csv" && format != "json" && format != "both")
    throw std::invalid_argument("config: format must be csv, json or both");
  preset(cfg.global["problem"]);  // throws with the catalog on bad names

  // Validate every key in every provided section (typo checking), then
  // resolve the active one against its defaults.
  for (const auto& [sec, kv] : raw) {
    if (sec.empty()) continue;
    for (const auto& [key, value] : kv) validate_param(sec, key, value);
  }
  for (const auto& spec : section_schema().at(cfg.subcommand)) {
    const auto it = raw[cfg.subcommand].find(spec.key);
    cfg.params[spec.key] =
        it != raw[cfg.subcommand].end() ? it->second : spec.default_value;
    validate_param(cfg.subcommand, spec.key, cfg.params[spec.key]);
  }
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  using namespace cli_detail;
  std::string out;
  for (const auto& spec : global_schema())
    out += std::string(spec.key) + " = " + cfg.global.at(spec.key) + "\n";
  out += "\n[" + cfg.subcommand + "]\n";
  for (const auto& spec : section_schema().at(cfg.subcommand))
    out += std::string(spec.key) + " = " + cfg.params.at(spec.key) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

namespace cli_detail {

struct Artifacts {
  json report;
  std::vector<std::pair<std::string, std::string>> csv_files;
  int band_status = 0;  // 1 when a configured acceptance band is violated
};

inline json rate_report_json(const RateReport& rep) {
  json j;
  j["norm"] = rep.norm_label;
  j["per_n"] = json::array();
  for (const auto& pt : rep.per_n) {
    json row;
    row["n"] = pt.n;
    row["error"] = pt.error;
    row["std_error"] = pt.std_error;
    if (pt.tau_index >= 0) row["tau_index"] = pt.tau_index;
    j["per_n"].push_back(row);
  }
  j["degenerate_exact"] = rep.degenerate_exact;
  if (rep.degenerate_exact) return j;
  if (std::isfinite(rep.fitted_slope)) {
    j["fitted_slope"] = rep.fitted_slope;
    j["slope_ci"] = {rep.slope_ci_lo, rep.slope_ci_hi};
  }
  if (std::isfinite(rep.theory_slope)) j["theory_slope"] = rep.theory_slope;
  if (rep.log_model) {
    j["log_model"] = {{"gamma", rep.log_gamma},
                      {"coeff", rep.log_coeff},
                      {"rms_rel_residual", rep.log_rms_rel_residual}};
  }
  j["dropped_smallest"] = rep.dropped_smallest;
  return j;
}

inline int band_check(const RunConfig& cfg, const RateReport& rep) {
  const std::string& band = cfg.param("slope_band");
  if (band.empty()) return 0;
  const auto lim = parse_double_list("slope_band", band);
  if (!std::isfinite(rep.fitted_slope)) return 1;
  return rep.fitted_slope >= lim[0] && rep.fitted_slope <= lim[1] ? 0 : 1;
}

inline ExperimentSpec spec_from_config(const RunConfig& cfg) {
  ExperimentSpec spec;
  spec.problem = preset(cfg.global_at("problem"));
  if (cfg.params.count("scheme"))
    spec.scheme = scheme_from_string(cfg.param("scheme"));
  spec.norm = norm_from_string(cfg.param("norm"));
  spec.n_list = parse_int_list("n_list", cfg.param("n_list"));
  spec.ref_level_L = static_cast<int>(parse_int("ref_level", cfg.param("ref_level")));
  spec.paths = parse_int("paths", cfg.param("paths"));
  spec.p_exponent = parse_double("p", cfg.param("p"));
  spec.taus = parse_taus(cfg.param("taus"));
  spec.master_seed = parse_u64("seed", cfg.global_at("seed"));
  spec.workers = static_cast<int>(parse_int("workers", cfg.global_at("workers")));
  spec.work_budget = parse_double("budget", cfg.param("budget"));
  return spec;
}

inline void rate_csv_rows(CsvBuilder& csv, const RateReport& rep,
                          const std::string& scheme_label) {
  for (const auto& pt : rep.per_n) {
    std::vector<std::string> row;
    if (!scheme_label.empty()) row.push_back(scheme_label);
    row.push_back(std::to_string(pt.n));
    row.push_back(fmt_double(pt.error));
    row.push_back(fmt_double(pt.std_error));
    csv.row(row);
  }
}

inline Artifacts run_rate(const RunConfig& cfg) {
  const ExperimentSpec spec = spec_from_config(cfg);
  const RateReport rep = run(spec);
  Artifacts art;
  art.report = rate_report_json(rep);
  art.report["problem"] = spec.problem.name;
  art.report["scheme"] = to_string(spec.scheme);
  CsvBuilder csv("rate-report");
  csv.header({"n", "error", "stderr"});
  rate_csv_rows(csv, rep, "");
  art.csv_files.emplace_back("rate_report.csv", csv.str());
  art.band_status = band_check(cfg, rep);
  return art;
}

inline Artifacts run_schemes(const RunConfig& cfg) {
  ExperimentSpec spec = spec_from_config(cfg);
  std::vector<SchemeKind> schemes;
  for (const auto& s : split(cfg.param("schemes"), ','))
    schemes.push_back(scheme_from_string(s));
  const auto table = compare_schemes(spec, schemes);
  Artifacts art;
  art.report["problem"] = spec.problem.name;
  art.report["schemes"] = json::array();
  CsvBuilder csv("schemes-report");
  csv.header({"scheme", "n", "error", "stderr"});
  for (const auto& [kind, rep] : table) {
    json entry = rate_report_json(rep);
    entry["scheme"] = to_string(kind);
    art.report["schemes"].push_back(entry);
    rate_csv_rows(csv, rep, to_string(kind));
    art.band_status = std::max(art.band_status, band_check(cfg, rep));
  }
  art.csv_files.emplace_back("schemes_report.csv", csv.str());
  return art;
}

inline Artifacts run_density(const RunConfig& cfg) {
  const SdeProblem problem = preset(cfg.global_at("problem"));
  const std::int64_t n = parse_int("n", cfg.param("n"));
  std::int64_t t_index = parse_int("t_index", cfg.param("t_index"));
  if (t_index == 0) t_index = n;
  const std::int64_t paths = parse_int("paths", cfg.param("paths"));
  const std::int64_t bins = parse_int("bins", cfg.param("bins"));
  const double range_sigmas =
      parse_double("range_sigmas", cfg.param("range_sigmas"));
  const std::uint64_t seed = parse_u64("seed", cfg.global_at("seed"));
  const int workers =
      static_cast<int>(parse_int("workers", cfg.global_at("workers")));

  double C = parse_double("envelope_C", cfg.param("envelope_C"));
  double c = parse_double("envelope_c", cfg.param("envelope_c"));
  json calibration;
  std::uint64_t check_seed = seed;
  if (parse_bool("calibrate", cfg.param("calibrate"))) {
    std::vector<double> c_grid, C_grid;
    for (double cc = 0.30; cc <= 2.001; cc += 0.05) c_grid.push_back(cc);
    for (double CC = 1.00; CC <= 6.001; CC += 0.05) C_grid.push_back(CC);
    const auto cal = calibrate_density_envelope(
        problem, n, t_index, paths, seed, c_grid, C_grid, bins, range_sigmas,
        workers);
    if (!cal.found)
      throw std::runtime_error(
          "density: calibration grid search found no passing envelope");
    C = cal.C;
    c = cal.c;
    check_seed = seed + 1;  // the check runs on a fresh stream
    calibration = {{"C", C}, {"c", c}, {"calibration_seed", seed}};
  }
  const DensityCheckReport rep = density_check(
      problem, n, t_index, paths, check_seed, C, c, bins, range_sigmas,
      workers);

  Artifacts art;
  json& j = art.report;
  j["problem"] = problem.name;
  j["n"] = rep.n;
  j["t_grid_index"] = rep.t_grid_index;
  j["t"] = rep.t;
  j["paths"] = rep.paths;
  j["check_seed"] = check_seed;
  if (!calibration.is_null()) j["calibration"] = calibration;
  j["envelope_C"] = rep.envelope_C;
  j["envelope_c"] = rep.envelope_c;
  j["upper_violations"] = rep.upper_violations;
  j["lower_violations"] = rep.lower_violations;
  j["lower_checked_bins"] = rep.lower_checked_bins;
  j["fitted_C_upper"] = rep.fitted_C_upper;
  j["fitted_C_lower"] = rep.fitted_C_lower;
  j["underflow"] = rep.underflow;
  j["overflow"] = rep.overflow;

  CsvBuilder csv("density-bins");
  csv.header({"lo", "hi", "count", "empirical_density", "upper_envelope",
              "lower_envelope"});
  const double np = static_cast<double>(rep.paths);
  for (std::size_t i = 0; i + 1 < rep.edges.size(); ++i) {
    const double lo = rep.edges[i], hi = rep.edges[i + 1];
    const double width = hi - lo;
    const double up = rep.envelope_C *
                      detail::gaussian_bin_mass(lo, hi, problem.x0[0],
                                                std::sqrt(rep.t / rep.envelope_c)) /
                      width;
    const double low = detail::gaussian_bin_mass(
                           lo, hi, problem.x0[0],
                           std::sqrt(rep.t * rep.envelope_c)) /
                       (rep.envelope_C * width);
    csv.row({fmt_double(lo), fmt_double(hi), std::to_string(rep.counts[i]),
             fmt_double(static_cast<double>(rep.counts[i]) / (np * width)),
             fmt_double(up), fmt_double(low)});
  }
  art.csv_files.emplace_back("density_bins.csv", csv.str());
  if (parse_bool("enforce", cfg.param("enforce")) &&
      rep.upper_violations + rep.lower_violations > 0)
    art.band_status = 1;
  return art;
}

inline Artifacts run_jump_integral(const RunConfig& cfg) {
  const SdeProblem problem = preset(cfg.global_at("problem"));
  const auto n_list = parse_int_list("n_list", cfg.param("n_list"));
  const double q = parse_double("q", cfg.param("q"));
  const std::int64_t paths = parse_int("paths", cfg.param("paths"));
  const std::uint64_t seed = parse_u64("seed", cfg.global_at("seed"));
  const int workers =
      static_cast<int>(parse_int("workers", cfg.global_at("workers")));

  Artifacts art;
  art.report["problem"] = problem.name;
  art.report["q"] = q;
  art.report["paths"] = paths;
  art.report["per_n"] = json::array();
  CsvBuilder csv("jump-integral-report");
  csv.header({"n", "estimate", "stderr", "sqrt_n_scaled"});
  for (std::int64_t n : n_list) {
    const auto est = discontinuity_integral(problem, n, q, paths, seed, workers);
    const double scaled = std::sqrt(static_cast<double>(n)) * est.estimate;
    art.report["per_n"].push_back({{"n", n},
                                   {"estimate", est.estimate},
                                   {"std_error", est.std_error},
                                   {"sqrt_n_scaled", scaled}});
    csv.row({std::to_string(n), fmt_double(est.estimate),
             fmt_double(est.std_error), fmt_double(scaled)});
  }
  art.csv_files.emplace_back("jump_integral.csv", csv.str());
  return art;
}

inline Artifacts run_increments(const RunConfig& cfg) {
  const SdeProblem problem = preset(cfg.global_at("problem"));
  const auto n_list = parse_int_list("n_list", cfg.param("n_list"));
  const double q = parse_double("q", cfg.param("q"));
  const std::int64_t paths = parse_int("paths", cfg.param("paths"));
  const std::uint64_t seed = parse_u64("seed", cfg.global_at("seed"));
  const int workers =
      static_cast<int>(parse_int("workers", cfg.global_at("workers")));

  Artifacts art;
  art.report["problem"] = problem.name;
  art.report["q"] = q;
  art.report["paths"] = paths;
  art.report["per_n"] = json::array();
  CsvBuilder csv("increments-report");
  csv.header({"n", "estimate", "stderr", "argmax_midpoint"});
  for (std::int64_t n : n_list) {
    const auto rep = increment_moment(problem, n, q, paths, seed, workers);
    art.report["per_n"].push_back({{"n", n},
                                   {"estimate", rep.estimate},
                                   {"std_error", rep.std_error},
                                   {"argmax_midpoint", rep.argmax_index}});
    csv.row({std::to_string(n), fmt_double(rep.estimate),
             fmt_double(rep.std_error), std::to_string(rep.argmax_index)});
  }
  art.csv_files.emplace_back("increments.csv", csv.str());
  return art;
}

inline Artifacts run_yw(const RunConfig& cfg) {
  const double delta = parse_double("delta", cfg.param("delta"));
  const double eps = parse_double("eps", cfg.param("eps"));
  YWGridSpec grid;
  grid.lo = parse_double("grid_min", cfg.param("grid_min"));
  grid.hi = parse_double("grid_max", cfg.param("grid_max"));
  grid.points = parse_int("grid_points", cfg.param("grid_points"));
  const YWFunction f = build_yw(delta, eps);
  const YWPropertyReport rep = check_properties(f, grid);

  Artifacts art;
  json& j = art.report;
  j["delta"] = delta;
  j["eps"] = eps;
  j["grid_points"] = rep.grid_points;
  j["psi_integral"] = rep.psi_integral;
  j["psi_integral_error"] = rep.psi_integral_error;
  j["properties"] = {
      {"envelope",
       {{"max_violation", rep.envelope_max_violation},
        {"violations", rep.envelope_violations}}},
      {"slope",
       {{"max_violation", rep.slope_max_violation},
        {"violations", rep.slope_violations}}},
      {"ratio",
       {{"max_violation", rep.ratio_max_violation},
        {"violations", rep.ratio_violations}}},
      {"curvature",
       {{"max_violation", rep.curvature_max_violation},
        {"violations", rep.curvature_violations}}},
  };
  CsvBuilder csv("yw-properties");
  csv.header({"property", "max_violation", "violations"});
  csv.row({"envelope", fmt_double(rep.envelope_max_violation),
           std::to_string(rep.envelope_violations)});
  csv.row({"slope", fmt_double(rep.slope_max_violation),
           std::to_string(rep.slope_violations)});
  csv.row({"ratio", fmt_double(rep.ratio_max_violation),
           std::to_string(rep.ratio_violations)});
  csv.row({"curvature", fmt_double(rep.curvature_max_violation),
           std::to_string(rep.curvature_violations)});
  art.csv_files.emplace_back("yw_properties.csv", csv.str());

  if (parse_bool("dump_samples", cfg.param("dump_samples"))) {
    const std::int64_t points = parse_int("dump_points", cfg.param("dump_points"));
    CsvBuilder dump("yw-samples");
    dump.header({"z", "psi", "phi_prime", "phi_double_prime"});
    for (std::int64_t i = 0; i < points; ++i) {
      const double f01 =
          static_cast<double>(i) / static_cast<double>(points - 1);
      const double z = grid.lo * std::pow(grid.hi / grid.lo, f01);
      dump.row({fmt_double(z), fmt_double(f.psi(z)),
                fmt_double(f.phi_prime(z)),
                fmt_double(f.phi_double_prime(z))});
    }
    art.csv_files.emplace_back("yw_samples.csv", dump.str());
  }
  if (rep.total_violations() > 0 || rep.psi_integral_error > 1e-8)
    art.band_status = 1;
  return art;
}

inline Artifacts run_mollify(const RunConfig& cfg) {
  const MollifierSeq seq = mollifier_base_preset(cfg.param("base"));
  const double box_L = parse_double("box_L", cfg.param("box_L"));
  const auto N_list64 = parse_int_list("N_list", cfg.param("N_list"));
  std::vector<int> N_list(N_list64.begin(), N_list64.end());
  const auto a_scalars = parse_double_list("a_list", cfg.param("a_list"));
  std::vector<std::vector<double>> a_list;
  for (double a : a_scalars) a_list.push_back({a});
  const auto u_list = parse_double_list("u_list", cfg.param("u_list"));

  const ConditionReport rep =
      check_approx_conditions(seq, box_L, N_list, a_list, u_list);

  Artifacts art;
  json& j = art.report;
  j["base"] = cfg.param("base");
  j["box_L"] = box_L;
  j["N_list"] = rep.N_list;
  j["local_l1"] = rep.local_l1;
  j["sup_observed"] = rep.sup_observed;
  j["sup_bound"] = seq.sup_bound;
  j["sup_bound_ok"] = rep.sup_bound_ok;
  j["fitted_gradient_constant"] = rep.fitted_gradient_constant;
  j["weighted_gradient"] = json::array();
  for (const auto& s : rep.weighted_gradient)
    j["weighted_gradient"].push_back({{"a", s.shift[0]},
                                      {"u", s.u},
                                      {"value", s.value},
                                      {"fitted_constant", s.fitted_constant}});
  CsvBuilder csv("mollify-report");
  csv.header({"N", "local_l1"});
  for (std::size_t i = 0; i < rep.N_list.size(); ++i)
    csv.row({std::to_string(rep.N_list[i]), fmt_double(rep.local_l1[i])});
  art.csv_files.emplace_back("mollify_l1.csv", csv.str());

  if (parse_bool("convergence", cfg.param("convergence"))) {
    const SdeProblem problem = preset(cfg.global_at("problem"));
    const auto conv = mollifier_convergence(
        seq, problem, parse_int("conv_n", cfg.param("conv_n")),
        parse_double("conv_kappa", cfg.param("conv_kappa")), N_list,
        parse_int("conv_paths", cfg.param("conv_paths")),
        parse_u64("seed", cfg.global_at("seed")),
        static_cast<int>(parse_int("workers", cfg.global_at("workers"))));
    j["convergence"] = {{"problem", problem.name},
                        {"estimates", conv.estimates},
                        {"std_errors", conv.std_errors}};
    CsvBuilder conv_csv("mollify-convergence");
    conv_csv.header({"N", "estimate", "stderr"});
    for (std::size_t i = 0; i < conv.N_list.size(); ++i)
      conv_csv.row({std::to_string(conv.N_list[i]),
                    fmt_double(conv.estimates[i]),
                    fmt_double(conv.std_errors[i])});
    art.csv_files.emplace_back("mollify_convergence.csv", conv_csv.str());
  }
  return art;
}

inline Artifacts run_komatsu(const RunConfig& cfg) {
  const auto grid =
      komatsu_default_grid(parse_int("points", cfg.param("points")),
                           parse_double("x_max", cfg.param("x_max")));
  const KomatsuReport rep = komatsu_check(grid);
  Artifacts art;
  art.report["points"] = rep.points;
  art.report["min_slack"] = rep.min_slack;
  art.report["argmin_x"] = rep.argmin_x;
  art.report["violations"] = rep.violations;
  CsvBuilder csv("komatsu-report");
  csv.header({"x", "tail_cdf", "lower_bound", "slack"});
  for (double x : grid) {
    const double lhs = normal_cdf(-std::fabs(x));
    const double rhs = komatsu_lower_bound(x);
    csv.row({fmt_double(x), fmt_double(lhs), fmt_double(rhs),
             fmt_double(lhs - rhs)});
  }
  art.csv_files.emplace_back("komatsu.csv", csv.str());
  if (rep.violations > 0) art.band_status = 1;
  return art;
}

inline Artifacts run_verify(const RunConfig& cfg) {
  const SdeProblem problem = preset(cfg.global_at("problem"));
  const std::int64_t samples = parse_int("samples", cfg.param("samples"));
  const std::uint64_t seed = parse_u64("seed", cfg.global_at("seed"));
  const AssumptionReport rep = verify_assumptions(problem, samples, seed);
  Artifacts art;
  json& j = art.report;
  j["problem"] = problem.name;
  j["samples"] = rep.samples;
  j["ellipticity_violations"] = rep.ellipticity_violations;
  j["max_ellipticity_violation"] = rep.max_ellipticity_violation;
  j["one_sided_lipschitz_violations"] = rep.one_sided_lipschitz_violations;
  j["max_one_sided_lipschitz_violation"] =
      rep.max_one_sided_lipschitz_violation;
  j["drift_bound_violations"] = rep.drift_bound_violations;
  j["max_drift_bound_violation"] = rep.max_drift_bound_violation;
  j["fitted_holder_quotient"] = rep.fitted_holder_quotient;
  j["holder_pairs_skipped"] = rep.holder_pairs_skipped;
  CsvBuilder csv("verify-report");
  csv.header({"samples", "ellipticity_violations", "osl_violations",
              "drift_bound_violations", "fitted_holder_quotient"});
  csv.row({std::to_string(rep.samples),
           std::to_string(rep.ellipticity_violations),
           std::to_string(rep.one_sided_lipschitz_violations),
           std::to_string(rep.drift_bound_violations),
           fmt_double(rep.fitted_holder_quotient)});
  art.csv_files.emplace_back("verify_report.csv", csv.str());
  if (rep.total_violations() > 0) art.band_status = 1;
  return art;
}

}  // namespace cli_detail

// Runs the configured subcommand and writes its artifacts plus metadata.
// Returns 0 on success, 1 when a configured acceptance band is violated,
// 2 on usage errors (unwritable output directory included). The --workers
// value never influences any written byte except metadata wall time.
inline int execute(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  using namespace cli_detail;
  const fs::path out_dir(cfg.global_at("out"));
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  {
    // Probe writability up front so a bad path is a clean usage error.
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream test(probe);
    if (!test) {
      std::cerr << "error: output directory '" << out_dir.string()
                << "' is not writable\n";
      return 2;
    }
    test.close();
    fs::remove(probe, ec);
  }

  const auto t_start = std::chrono::steady_clock::now();
  Artifacts art;
  if (cfg.subcommand == "rate") art = run_rate(cfg);
  else if (cfg.subcommand == "schemes") art = run_schemes(cfg);
  else if (cfg.subcommand == "density") art = run_density(cfg);
  else if (cfg.subcommand == "jump-integral") art = run_jump_integral(cfg);
  else if (cfg.subcommand == "increments") art = run_increments(cfg);
  else if (cfg.subcommand == "yw") art = run_yw(cfg);
  else if (cfg.subcommand == "mollify") art = run_mollify(cfg);
  else if (cfg.subcommand == "komatsu") art = run_komatsu(cfg);
  else if (cfg.subcommand == "verify") art = run_verify(cfg);
  else throw std::invalid_argument("unknown subcommand " + cfg.subcommand);
  const std::chrono::duration<double> wall =
      std::chrono::steady_clock::now() - t_start;

  const std::string& format = cfg.global_at("format");
  std::vector<std::string> written;
  if (format == "json" || format == "both") {
    const std::string name = cfg.subcommand == "jump-integral"
                                 ? "jump_integral_report.json"
                                 : cfg.subcommand + "_report.json";
    write_json(out_dir / name, art.report);
    written.push_back(name);
  }
  if (format == "csv" || format == "both") {
    for (const auto& [name, content] : art.csv_files) {
      write_file(out_dir / name, content);
      written.push_back(name);
    }
  }

  json meta;
  meta["library_version"] = kLibraryVersion;
  meta["subcommand"] = cfg.subcommand;
  meta["seed"] = parse_u64("seed", cfg.global_at("seed"));
  meta["resolved_config"] = {{"global", cfg.global},
                             {cfg.subcommand, cfg.params}};
  meta["outputs"] = written;
  meta["wall_time_seconds"] = wall.count();
  write_json(out_dir / "metadata.json", meta);
  return art.band_status;
}

}  // namespace irregular_sde
