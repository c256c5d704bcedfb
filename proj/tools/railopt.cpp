#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "railopt/io.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kSolver = 3, kGradCheck = 4 };

int exit_code_for(const railopt::RunSummary& s) {
  if (s.command == "gradcheck" && !s.passed) return kGradCheck;
  if (!s.passed) return kSolver;
  return kOk;
}

void report(const railopt::RunSummary& s, const std::string& out_dir) {
  std::printf("%s: %s\n", s.command.c_str(), s.status.c_str());
  std::printf("  J_initial = %s\n  J_final   = %s\n", railopt::format_double(s.J_initial).c_str(),
              railopt::format_double(s.J_final).c_str());
  if (s.command == "optimize") {
    std::printf("  iterations = %d\n", s.iterations);
    std::printf("  control stationarity = %s\n  shape stationarity   = %s\n  collinearity         = %s\n",
                railopt::format_double(s.kkt.control_stationarity).c_str(),
                railopt::format_double(s.kkt.shape_stationarity).c_str(),
                railopt::format_double(s.kkt.collinearity).c_str());
  }
  if (s.details.contains("shape")) std::printf("  shape = %s\n", s.details["shape"]["values"].dump().c_str());
  if (s.details.contains("worst_relative_error"))
    std::printf("  worst relative error = %s\n", s.details["worst_relative_error"].dump().c_str());
  std::printf("  wall time = %.3f s\n  outputs in %s\n", s.wall_time, out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint actuator shape and control optimization for a semilinear beam"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  bool physical = false;
  for (const char* name : {"simulate", "optimize", "gradcheck", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_flag("--physical", physical, "also write physical.csv with w on the quadrature grid");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const railopt::RunConfig cfg = railopt::parse_config(config_path);
    const railopt::RunOptions opts{out_dir, physical};
    railopt::RunSummary summary;
    if (command == "simulate") summary = railopt::run_simulate(cfg, opts);
    else if (command == "optimize") summary = railopt::run_optimize(cfg, opts);
    else if (command == "gradcheck") summary = railopt::run_gradcheck(cfg, opts);
    else summary = railopt::run_sweep(cfg, opts);
    report(summary, out_dir.empty() ? cfg.output_dir : out_dir);
    return exit_code_for(summary);
  } catch (const railopt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const railopt::SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
}
