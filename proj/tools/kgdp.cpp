#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "kgdp/advisor_http.hpp"
#include "kgdp/config.hpp"
#include "kgdp/harness.hpp"
#include "kgdp/results_csv.hpp"
#include "kgdp/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_validate(const std::string& path) {
  try {
    const auto cfg = kgdp::load_config(path);
    std::cout << "ok: " << path << " (digest " << kgdp::config_digest(cfg) << ")\n";
    return 0;
  } catch (const kgdp::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_simulate(const std::string& path, const fs::path& out_dir, std::optional<std::uint64_t> seed,
                 std::optional<std::size_t> replications) {
  kgdp::ExperimentConfig cfg;
  try {
    cfg = kgdp::load_config(path);
    if (seed) cfg.seed = *seed;
    if (replications) {
      if (*replications < 1) throw kgdp::ConfigError("--replications", "must be >= 1");
      cfg.replications = *replications;
    }
  } catch (const kgdp::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const auto problem = kgdp::build_problem(cfg);
    const auto seeds = kgdp::replication_seeds(cfg);
    const auto result = kgdp::run_replications(problem, cfg, seeds);
    const std::size_t d = problem->model.dimension;

    fs::create_directories(out_dir);
    const fs::path results = out_dir / "results.csv";
    const fs::path summary = out_dir / "summary.csv";
    const fs::path manifest = out_dir / "manifest.json";
    {
      std::ofstream f(results, std::ios::binary);
      kgdp::write_results_csv(f, result, cfg.policy, d);
      if (!f) throw kgdp::Error("cannot write " + results.string());
    }
    {
      std::ofstream f(summary, std::ios::binary);
      kgdp::write_summary_csv(f, result, cfg.policy, d);
      if (!f) throw kgdp::Error("cannot write " + summary.string());
    }
    nlohmann::json m;
    m["config_digest"] = kgdp::config_digest(cfg);
    m["config"] = kgdp::config_to_json(cfg);
    m["seeds"] = seeds;
    m["version"] = kgdp::kVersion;
    m["outputs"] = {{"results", results.string()}, {"summary", summary.string()}};
    std::ofstream f(manifest, std::ios::binary);
    f << m.dump(2) << '\n';
    if (!f) throw kgdp::Error("cannot write " + manifest.string());
    std::cout << "wrote " << result.runs.size() << " replication(s) of N=" << cfg.N << " to "
              << out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "simulation failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_serve(const fs::path& state, int port, const std::string& host, const std::string& static_dir) {
  std::unique_ptr<kgdp::AdvisorService> service;
  try {
    service = std::make_unique<kgdp::AdvisorService>(state);
  } catch (const std::exception& e) {
    std::cerr << "cannot open state directory: " << e.what() << '\n';
    return kExitRuntime;
  }
  httplib::Server server;
  // No SO_REUSEPORT, so a port held by another listener is reported as busy.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  kgdp::install_routes(server, *service, static_dir);
  if (!server.bind_to_port(host, port)) {
    std::cerr << "cannot bind " << host << ':' << port << '\n';
    return kExitRuntime;
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving on http://" << host << ':' << port << " (state " << state.string() << ")" << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge gradient with discrete priors: simulations and a live campaign advisor"};
  app.set_version_flag("--version", std::string(kgdp::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  auto* sim = app.add_subcommand("simulate", "run replications and write results.csv, summary.csv, manifest.json");
  sim->add_option("--config", config_path, "experiment config (JSON)")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "override the base seed");
  sim->add_option("--replications", replications, "override the replication count");

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "parse and validate a config");
  val->add_option("--config", validate_path, "experiment config (JSON)")->required();

  std::string state_dir;
  int port = 0;
  std::string host = "127.0.0.1";
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "run the advisor HTTP service");
  serve->add_option("--state", state_dir, "state directory")->required();
  serve->add_option("--port", port, "TCP port")->required()->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "bind address");
  serve->add_option("--static", static_dir, "directory of static web assets to serve at /")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*sim) return cmd_simulate(config_path, out_dir, seed, replications);
  if (*val) return cmd_validate(validate_path);
  if (*serve) {
    if (port == 0) {
      std::cerr << "port must be in 1..65535\n";
      return kExitRuntime;
    }
    return cmd_serve(state_dir, port, host, static_dir);
  }
  return kExitConfig;
}
