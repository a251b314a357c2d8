// Command-line front end over the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rtu/rtu_c.h"

namespace {

struct Common {
  std::vector<std::uint64_t> seed;  // at most one
  std::string out;
  long long steps = 0;
  bool quiet = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool with_steps) {
  app->add_option("--seed", c.seed, "Run only this seed")->expected(1);
  app->add_option("--out", c.out, "Output directory (default: $RTU_OUT_ROOT/<name>)");
  if (with_steps) app->add_option("--steps", c.steps, "Override the step budget")->check(CLI::PositiveNumber);
  app->add_flag("--quiet", c.quiet, "Only report errors");
  app->add_option("--set", c.sets, "Override a config value: section.key=value");
}

int report_error(rtu_status s) {
  std::fprintf(stderr, "error (%s): %s\n", rtu_status_name(s), rtu_last_error());
  return s == RTU_ERR_CONFIG ? 2 : 3;
}

// Applies overrides; returns a process exit code on failure, -1 on success.
int apply(rtu_config* cfg, const Common& c) {
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects section.key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    const rtu_status s =
        rtu_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != RTU_OK) return report_error(s);
  }
  if (c.steps > 0) {
    const rtu_status s = rtu_config_set_steps(cfg, c.steps);
    if (s != RTU_OK) return report_error(s);
  }
  return -1;
}

rtu_run_options options(const Common& c) {
  rtu_run_options o{};
  o.output_dir = c.out.empty() ? nullptr : c.out.c_str();
  o.has_seed = c.seed.empty() ? 0 : 1;
  o.seed = c.seed.empty() ? 0 : c.seed.front();
  o.quiet = c.quiet ? 1 : 0;
  return o;
}

int finish(rtu_status s, int exit_code, const Common& c) {
  if (s != RTU_OK) return report_error(s);
  if (exit_code != 0) std::fprintf(stderr, "run failed: %s\n", rtu_last_error());
  else if (!c.quiet) std::fprintf(stderr, "done\n");
  return exit_code;
}

int run_config(rtu_config* cfg, const Common& c) {
  const int rc = apply(cfg, c);
  if (rc >= 0) return rc;
  const rtu_run_options o = options(c);
  int exit_code = 0;
  return finish(rtu_run(cfg, &o, &exit_code), exit_code, c);
}

struct ConfigHandle {
  rtu_config* p = nullptr;
  ~ConfigHandle() { rtu_config_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent trace units: online prediction, control and gradient tooling"};
  app.set_version_flag("--version", std::string(rtu_version()));
  app.require_subcommand(1);

  Common run_c, grad_c, time_c, eig_c, sweep_c;
  std::string run_path, sweep_path, dump_kind;
  std::vector<double> lr_grid;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", run_path, "Config file")->required()->check(CLI::ExistingFile);
  add_common(run, run_c, true);

  auto* grad = app.add_subcommand("gradcheck", "Compare RTRL, BPTT and finite differences");
  add_common(grad, grad_c, false);
  auto* timing = app.add_subcommand("timing", "Measure per-update time against truncation");
  add_common(timing, time_c, false);
  auto* eigen = app.add_subcommand("eigen", "Three-state MDP eigenvalue experiment");
  add_common(eigen, eig_c, true);

  auto* sweep = app.add_subcommand("sweep", "Run a config over a grid of learning rates");
  sweep->add_option("config", sweep_path, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--lr-grid", lr_grid, "Learning rates")->required()->delimiter(',');
  add_common(sweep, sweep_c, true);

  auto* dump = app.add_subcommand("config", "Print the default config of a kind");
  dump->add_option("kind", dump_kind, "predict | control | gradcheck | timing | eigen")
      ->required();

  CLI11_PARSE(app, argc, argv);

  ConfigHandle cfg;
  if (*run) {
    const rtu_status s = rtu_config_load(run_path.c_str(), &cfg.p);
    if (s != RTU_OK) return report_error(s);
    return run_config(cfg.p, run_c);
  }
  if (*sweep) {
    rtu_status s = rtu_config_load(sweep_path.c_str(), &cfg.p);
    if (s != RTU_OK) return report_error(s);
    const int rc = apply(cfg.p, sweep_c);
    if (rc >= 0) return rc;
    const rtu_run_options o = options(sweep_c);
    int exit_code = 0;
    s = rtu_sweep(cfg.p, lr_grid.data(), lr_grid.size(), &o, &exit_code);
    return finish(s, exit_code, sweep_c);
  }
  if (*dump) {
    rtu_status s = rtu_config_default(dump_kind.c_str(), &cfg.p);
    if (s != RTU_OK) return report_error(s);
    size_t needed = 0;
    rtu_config_emit(cfg.p, nullptr, 0, &needed);
    std::string text(needed, '\0');
    s = rtu_config_emit(cfg.p, text.data(), text.size(), &needed);
    if (s != RTU_OK) return report_error(s);
    std::fputs(text.c_str(), stdout);
    return 0;
  }
  const char* kind = *grad ? "gradcheck" : *timing ? "timing" : "eigen";
  const Common& c = *grad ? grad_c : *timing ? time_c : eig_c;
  const rtu_status s = rtu_config_default(kind, &cfg.p);
  if (s != RTU_OK) return report_error(s);
  return run_config(cfg.p, c);
}
