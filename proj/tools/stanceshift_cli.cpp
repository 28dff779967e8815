#include <csignal>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stanceshift/annotation_http.hpp"
#include "stanceshift/errors.hpp"
#include "stanceshift/report.hpp"
#include "stanceshift/runner.hpp"

namespace fs = std::filesystem;
using namespace stanceshift;

namespace {

void print_summary(const ExecuteSummary& s) {
  fmt::print("run directory: {}\n", s.run_dir.string());
  fmt::print("cells: {} total, {} already done, {} executed ({} failed), {} remaining\n", s.total_cells,
             s.already_done, s.executed, s.failed, s.remaining);
}

void print_report(const ReportBundle& b) {
  for (const auto& f : b.files) fmt::print("wrote {}\n", f.string());
  for (const auto& w : b.warnings) fmt::print(stderr, "warning: {}\n", w);
}

AnnotationServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stance-shift robustness harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config_path;
  std::optional<std::size_t> max_cells;
  auto* run = app.add_subcommand("run", "Plan, execute and report a run");
  run->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--max-cells", max_cells, "Stop after this many cells");

  std::string plan_out;
  auto* plan = app.add_subcommand("plan", "Show the cell matrix of a run without executing it");
  plan->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  plan->add_option("--out", plan_out, "Write the manifest JSON here");

  std::string run_dir;
  auto* resume_cmd = app.add_subcommand("resume", "Continue an interrupted run");
  resume_cmd->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  resume_cmd->add_option("--max-cells", max_cells, "Stop after this many cells");

  auto* report = app.add_subcommand("report", "Recompute report tables of a run");
  report->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* fixtures = app.add_subcommand("fixtures", "Fixture utilities");
  fixtures->require_subcommand(1);
  auto* fx_export = fixtures->add_subcommand("export", "Write mock scripts replaying a run's captured exchanges");
  fx_export->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::vector<std::string> study_paths;
  std::string data_dir = "annotation-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Serve the human annotation API");
  serve->add_option("--study", study_paths, "Study config JSON (repeatable)")->required()->check(CLI::ExistingFile);
  serve->add_option("--data-dir", data_dir, "Directory for event logs");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks one)");
  serve->add_option("--static", static_dir, "Directory with the built annotation UI");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run) {
      const auto cfg = load_run_config(config_path);
      const auto manifest = plan_run(cfg);
      ExecuteOptions opts;
      opts.max_cells = max_cells;
      const auto summary = execute(manifest, cfg, opts);
      print_summary(summary);
      if (summary.remaining == 0) print_report(emit_report(summary.run_dir));
    } else if (*plan) {
      const auto cfg = load_run_config(config_path);
      const auto manifest = plan_run(cfg);
      std::map<std::string, std::size_t> by_mode;
      for (const auto& c : manifest.cells) ++by_mode[std::string(to_string(c.mode))];
      fmt::print("run_id: {}\nseed: {}\ncells: {}\n", manifest.run_id, manifest.seed, manifest.cells.size());
      for (const auto& [mode, n] : by_mode) fmt::print("  {}: {}\n", mode, n);
      if (!plan_out.empty()) write_text_atomic(plan_out, to_json(manifest).dump(2) + "\n");
    } else if (*resume_cmd) {
      ExecuteOptions opts;
      opts.max_cells = max_cells;
      const auto summary = resume(run_dir, opts);
      print_summary(summary);
      if (summary.remaining == 0) print_report(emit_report(summary.run_dir));
    } else if (*report) {
      print_report(emit_report(run_dir));
    } else if (*fx_export) {
      for (const auto& f : export_fixtures(run_dir)) fmt::print("wrote {}\n", f.string());
    } else if (*serve) {
      AnnotationService service(data_dir);
      for (const auto& p : study_paths) service.add_study(load_study_config(p));
      AnnotationServer server(service, static_dir);
      if (port == 0) {
        port = server.bind_to_any_port(host);
      } else if (!server.bind(host, port)) {
        throw ConfigurationError(fmt::format("cannot bind {}:{}", host, port));
      }
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      spdlog::info("annotation service listening on http://{}:{}", host, port);
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
