// Command-line front end: run, matrix, gradcheck, spectral, certify.
// Exit codes: 0 success, 1 usage or check failure, 2 gain certificate failed
// under --strict-gains, 3 divergence.

#include "lbgnn/gradcheck.hpp"
#include "lbgnn/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lbgnn;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(f);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const int v = std::stoi(s);
    return {v, v};
  }
  return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
}

Scenario load_scenario(const std::string& config) {
  if (config.empty()) {
    Scenario s;
    s.topology = build_topology(TopologyKind::path, 6);
    return s;
  }
  Scenario s = scenario_from_json(read_json(config));
  if (s.topology.n_agents == 0) s.topology = build_topology(TopologyKind::path, 6);
  return s;
}

double lipschitz_for(const ControlConfig& c) {
  return c.lipschitz > 0 ? c.lipschitz : estimate_target_lipschitz();
}

void print_certificate(const GainCertificate& c) {
  std::printf("gain certificate (N=%d, L=%.4f): %s\n", c.n_agents, c.lipschitz, c.pass() ? "PASS" : "FAIL");
  std::printf("  eps3=%.6g eps1=%.6g eps2=%.6g (upper %.6f)\n", c.eps3, c.eps1, c.eps2, c.eps2_upper);
  std::printf("  k1 > %.6g : %s (margin %.6g)\n", c.k1_bound, c.k1_ok ? "ok" : "violated", c.k1_margin);
  std::printf("  k2 > %.6g : %s (margin %.6g)\n", c.k2_bound, c.k2_ok ? "ok" : "violated", c.k2_margin);
  std::printf("  lambda1=%.6g lambda2=%.6g lambda3=%.6g\n", c.lambda1, c.lambda2, c.lambda3);
}

int cmd_run(const std::string& config, const std::optional<unsigned long long>& seed, const std::string& out,
            bool strict, bool sqrt_rms, int stride) {
  Scenario s = load_scenario(config);
  if (seed) s.control.seed = *seed;
  s.validate();
  const auto cert = certify_gains(s.control, s.topology.n_agents, lipschitz_for(s.control));
  print_certificate(cert);
  if (strict && !cert.pass()) {
    std::fprintf(stderr, "gain certificate failed; aborting (--strict-gains)\n");
    return 2;
  }
  const RunResult r = run_scenario(s);
  SummaryOptions opts;
  opts.take_sqrt = sqrt_rms;
  const RunSummary sum = summarize(r, opts);
  const auto& cols = summary_columns();
  const auto vals = summary_values(sum);
  std::printf("%s %s seed=%llu: %s in %.1f s\n", topology_label(s.topology).c_str(),
              pair_label(s.arch1, s.arch2).c_str(), s.control.seed, r.diverged ? "DIVERGED" : "ok",
              r.wall_seconds);
  for (std::size_t k = 0; k < cols.size(); ++k) std::printf("  %-16s %.6g\n", cols[k].c_str(), vals[k]);
  if (!out.empty()) {
    fs::create_directories(out);
    write_series_csv(r, fs::path(out) / "series.csv", stride);
    nlohmann::json j;
    j["scenario"] = to_json(s);
    j["summary"] = to_json(sum);
    j["certificate"] = to_json(r.certificate);
    if (r.diverged) j["failure"] = r.failure;
    write_text(fs::path(out) / "summary.json", j.dump(2) + "\n");
  }
  return r.diverged ? 3 : 0;
}

int cmd_matrix(const std::string& config, const std::optional<unsigned long long>& seed, const std::string& out,
               bool strict, bool sqrt_rms, int threads) {
  MatrixConfig m = config.empty() ? standard_matrix() : matrix_from_json(read_json(config));
  if (seed) m.seeds = {*seed};
  if (sqrt_rms) m.summary.take_sqrt = true;
  if (threads > 0) m.threads = threads;
  for (const auto& t : m.topologies) {
    const auto cert = certify_gains(m.base.control, t.n_agents, lipschitz_for(m.base.control));
    if (strict && !cert.pass()) {
      print_certificate(cert);
      std::fprintf(stderr, "gain certificate failed; aborting (--strict-gains)\n");
      return 2;
    }
  }
  const auto result = run_matrix(m, [](const MatrixCell& c) {
    std::printf("%-22s %-8s seed=%llu e_RMS=%.4f %s (%.1f s)\n", topology_label(c.topology).c_str(),
                pair_label(c.arch1, c.arch2).c_str(), c.seed, c.summary.e_rms,
                c.failure.empty() ? "ok" : c.failure.c_str(), c.summary.wall_seconds);
    std::fflush(stdout);
  });
  const std::string table = markdown_table(result);
  std::printf("%s", table.c_str());
  bool diverged = false;
  for (const auto& c : result.cells) diverged = diverged || c.summary.diverged;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "table.md", table);
    write_text(fs::path(out) / "cells.csv", cells_csv(result));
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : result.cells)
      j.push_back({{"topology", to_json(c.topology)},
                   {"pair", pair_label(c.arch1, c.arch2)},
                   {"seed", c.seed},
                   {"summary", to_json(c.summary)},
                   {"certificate", to_json(c.certificate)},
                   {"failure", c.failure}});
    write_text(fs::path(out) / "summary.json", j.dump(2) + "\n");
  }
  return diverged ? 3 : 0;
}

int cmd_gradcheck(int configs, const std::optional<unsigned long long>& seed) {
  GradcheckOptions o;
  o.configs = configs;
  if (seed) o.seed = *seed;
  const auto r = gradcheck(o);
  std::printf("configs=%d blocks=%ld entries=%ld\n", r.configs, r.blocks, r.entries);
  std::printf("max relative error     %.3e (tol %.0e)\n", r.max_rel_error, o.rel_tol);
  std::printf("max abs error (small)  %.3e (tol %.0e)\n", r.max_small_abs_error, o.abs_tol);
  std::printf("max gap between routes %.3e\n", r.max_route_gap);
  if (!r.worst.empty()) std::printf("worst entry: %s\n", r.worst.c_str());
  std::printf("%s in %.2f s\n", r.pass ? "PASS" : "FAIL", r.seconds);
  return r.pass ? 0 : 1;
}

int cmd_spectral(const std::string& range) {
  const auto [lo, hi] = parse_range(range);
  if (lo < 2 || hi < lo) throw std::invalid_argument("spectral range must satisfy 2 <= lo <= hi");
  bool ok = true;
  std::printf("%4s %16s %16s %10s %10s %10s\n", "N", "closed form", "eigensolved", "diff", "max l_max", "N+1");
  for (int n = lo; n <= hi; ++n) {
    std::vector<bool> pins(n, false);
    pins[0] = true;
    const auto path = make_topology(n, build_topology(TopologyKind::path, n).edges, pins);
    const double solved = symmetric_spectrum(pinned_laplacian(path)).values(0);
    const double closed = lambda_min_closed_form(n);
    double worst = 0.0;
    for (auto kind : {TopologyKind::path, TopologyKind::ring, TopologyKind::star, TopologyKind::complete,
                      TopologyKind::acyclic}) {
      if (kind == TopologyKind::ring && n < 3) continue;
      auto t = build_topology(kind, n);
      t.pins.assign(n, true);
      worst = std::max(worst, symmetric_spectrum(pinned_laplacian(t)).values.maxCoeff());
    }
    const double diff = std::abs(solved - closed);
    ok = ok && diff <= 1e-10 && worst <= n + 1.0 + 1e-10;
    std::printf("%4d %16.12f %16.12f %10.2e %10.6f %10.1f\n", n, closed, solved, diff, worst, n + 1.0);
  }
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_certify(const std::string& config, int n, double lipschitz, bool strict, bool as_json) {
  Scenario s = load_scenario(config);
  if (lipschitz > 0) s.control.lipschitz = lipschitz;
  const int agents = n > 0 ? n : s.topology.n_agents;
  const auto c = certify_gains(s.control, agents, lipschitz_for(s.control));
  if (as_json) std::printf("%s\n", to_json(c).dump(2).c_str());
  else print_certificate(c);
  return strict && !c.pass() ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-network adaptive target tracking: simulator and verification tools"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<unsigned long long> seed;
  bool strict = false, sqrt_rms = false, as_json = false;
  int stride = 20, threads = 0, configs = 50, n_agents = 0;
  double lipschitz = 0.0;
  std::string range = "2..10";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON configuration file");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_flag("--strict-gains", strict, "Fail when the gain certificate does not pass");
  };
  auto* run = app.add_subcommand("run", "Simulate one scenario");
  common(run);
  run->add_flag("--sqrt-rms", sqrt_rms, "Report conventional RMS (with square root)");
  run->add_option("--stride", stride, "Write every n-th sample to series.csv")->check(CLI::PositiveNumber);
  auto* matrix = app.add_subcommand("matrix", "Run the topology x architecture grid");
  common(matrix);
  matrix->add_flag("--sqrt-rms", sqrt_rms, "Report conventional RMS (with square root)");
  matrix->add_option("--threads", threads, "Worker threads");
  auto* grad = app.add_subcommand("gradcheck", "Check analytic Jacobians against finite differences");
  common(grad);
  grad->add_option("--configs", configs, "Number of random configurations")->check(CLI::PositiveNumber);
  auto* spectral = app.add_subcommand("spectral", "Check the interaction-matrix eigenvalue bounds");
  common(spectral);
  spectral->add_option("--n", range, "Agent counts, e.g. 2..10");
  auto* certify = app.add_subcommand("certify", "Evaluate the sufficient gain conditions");
  common(certify);
  certify->add_option("--n", n_agents, "Number of agents (defaults to the topology size)");
  certify->add_option("--lipschitz", lipschitz, "Lipschitz bound L of the target drift");
  certify->add_flag("--json", as_json, "Print the certificate as JSON");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, out, strict, sqrt_rms, stride);
    if (*matrix) return cmd_matrix(config, seed, out, strict, sqrt_rms, threads);
    if (*grad) return cmd_gradcheck(configs, seed);
    if (*spectral) return cmd_spectral(range);
    if (*certify) return cmd_certify(config, n_agents, lipschitz, strict, as_json);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
