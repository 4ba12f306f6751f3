// koopkit: run Koopman experiments from JSON configs or per-experiment
// subcommands.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopkit/experiments.hpp"

namespace {

namespace ex = koopkit::experiments;
using koopkit::io::Json;

enum ExitCode { kOk = 0, kPipelineError = 1, kConfigError = 2, kChecksFailed = 3 };

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string fit_mode;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--fit-mode", o.fit_mode, "standard or paper");
}

void apply(ex::ExperimentConfig& cfg, const Overrides& o) {
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw koopkit::ConfigError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;
    }
    ex::set_param(cfg, key, value);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.fit_mode.empty()) cfg.fit_mode = koopkit::edmd::parse_fit_mode(o.fit_mode);
  if (!o.out.empty()) cfg.output_dir = o.out;
}

int run(ex::ExperimentConfig cfg, const Overrides& o) {
  apply(cfg, o);
  ex::validate(cfg);
  if (o.print_config) {
    std::cout << cfg.to_json().dump(2) << '\n';
    return kOk;
  }
  std::cout << "experiment " << cfg.experiment << " (seed " << cfg.seed << ", fit mode "
            << koopkit::edmd::fit_mode_name(cfg.fit_mode) << ") -> " << cfg.output_dir << '\n';
  const auto result = ex::run_experiment(cfg, cfg.output_dir);
  for (const auto& c : result.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.value << ' ' << c.relation << ' '
              << c.threshold << '\n';
  std::cout << "summary: " << result.summary.dump() << '\n';
  return result.passed() ? kOk : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"koopkit: Koopman operator analysis of numerical algorithms"};
  app.set_version_flag("--version", std::string(koopkit::kVersion));
  app.require_subcommand(1);

  Overrides run_opts;
  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a JSON config");
  run_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  add_common(run_cmd, run_opts);
  run_cmd->add_flag("--print-config", run_opts.print_config, "Print the resolved config and exit");

  auto* list_cmd = app.add_subcommand("list", "List experiments");

  std::vector<Overrides> exp_opts(ex::experiment_names().size());
  std::vector<CLI::App*> exp_cmds;
  for (std::size_t i = 0; i < ex::experiment_names().size(); ++i) {
    auto* cmd = app.add_subcommand(ex::experiment_names()[i], "Run the " + ex::experiment_names()[i] + " experiment");
    add_common(cmd, exp_opts[i]);
    cmd->add_option("--set", exp_opts[i].sets, "Override a parameter, key=value (value parsed as JSON)");
    cmd->add_flag("--print-config", exp_opts[i].print_config, "Print the resolved config and exit");
    exp_cmds.push_back(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_cmd->parsed()) {
      for (const auto& n : ex::experiment_names()) std::cout << n << '\n';
      return kOk;
    }
    if (run_cmd->parsed()) return run(ex::config_from_json(koopkit::io::read_json(config_path)), run_opts);
    for (std::size_t i = 0; i < exp_cmds.size(); ++i)
      if (exp_cmds[i]->parsed()) return run(ex::make_config(ex::experiment_names()[i]), exp_opts[i]);
  } catch (const koopkit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const koopkit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPipelineError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPipelineError;
  }
  return kConfigError;
}
