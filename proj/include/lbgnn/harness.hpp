#pragma once

#include "lbgnn/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lbgnn {

/// (1/N) sum_i (1/K) sum_k s_i(k)^T s_i(k), with series[i][k] = s_i(k).
/// Mean square per agent; no square root.
/// Throws std::invalid_argument on an empty series or ragged agents.
double rms(const std::vector<std::vector<Eigen::VectorXd>>& series);

/// Same quantity from per-agent norms (rows = samples, cols = agents) over
/// rows [begin, end). With take_sqrt the per-agent square root is taken
/// before averaging over agents, giving the conventional RMS.
double rms_from_norms(const Eigen::MatrixXd& norms, Eigen::Index begin, Eigen::Index end,
                      bool take_sqrt = false);

/// Sample rows with from <= t < to. When `to` is at or past the last sample
/// time the last sample is included.
std::pair<Eigen::Index, Eigen::Index> window_rows(const std::vector<double>& t, double from, double to);

struct RunSummary {
  double e_rms = 0, de_rms = 0;
  double phi1_early = 0, phi1_late = 0;  // [0, split) and [split, end]
  double phi2_early = 0, phi2_late = 0;
  double u_rms = 0;
  double e_mean_first = 0, e_mean_last = 0;  // mean over agents of ||e_i|| in the first / last window
  double max_theta1_sq = 0, max_theta2_sq = 0, projection_limit = 0;
  bool diverged = false;
  double wall_seconds = 0;
};

struct SummaryOptions {
  double split = 10.0;        // early/late boundary for the approximation errors
  double trend_window = 10.0;  // width of the first and last windows for e_mean_*
  bool take_sqrt = false;
};

RunSummary summarize(const RunResult& result, const SummaryOptions& options = {});

/// The table columns in order.
const std::vector<std::string>& summary_columns();
std::vector<double> summary_values(const RunSummary& s);

struct MatrixConfig {
  std::vector<Topology> topologies;
  std::vector<std::pair<Arch, Arch>> pairs;
  std::vector<unsigned long long> seeds{0, 1, 2, 3, 4};
  Scenario base;  // gains, dt, duration, initial conditions; topology and archs are overwritten
  SummaryOptions summary;
  int threads = 1;
};

/// Standard grid: path, ring, star, complete, acyclic on six agents, crossed
/// with DNN+DNN, GNN+GNN, GAT+GNN.
MatrixConfig standard_matrix();

struct MatrixCell {
  Topology topology;
  Arch arch1, arch2;
  unsigned long long seed;
  RunSummary summary;
  GainCertificate certificate;
  std::string failure;
};

struct MatrixAggregate {
  Topology topology;
  Arch arch1, arch2;
  std::vector<double> mean, stddev;  // per summary column, sample std over seeds
  int runs = 0, failed = 0;
};

struct MatrixResult {
  std::vector<MatrixCell> cells;
  std::vector<MatrixAggregate> aggregates;
};

/// Runs every (topology, pair, seed) cell. A failed run is recorded and the
/// matrix continues. `on_cell` is called after each cell when set.
MatrixResult run_matrix(const MatrixConfig& config,
                        const std::function<void(const MatrixCell&)>& on_cell = {});

std::string pair_label(Arch a1, Arch a2);
std::string topology_label(const Topology& t);

/// Markdown table grouped by topology, one row per architecture pair.
std::string markdown_table(const MatrixResult& result);
std::string cells_csv(const MatrixResult& result);

/// t, agent (1-based), ||e||, ||edot||, ||qtilde||, ||u||, ||phi1err||, ||phi2err||.
/// Writes every `stride`-th sample.
void write_series_csv(const RunResult& result, const std::filesystem::path& path, int stride = 1);

// JSON schema. Topology: {"kind", "n_agents", "edges": [[1,2],...], "pins": [1,3,5]},
// node ids 1-based. Scenario: {"topology", "observer", "controller", "gains", "dt",
// "duration", "seed", "theta_bar", "band", "lipschitz", ...}.
nlohmann::json to_json(const Topology& t);
Topology topology_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControlConfig& c);
ControlConfig control_from_json(const nlohmann::json& j, ControlConfig base = {});
nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GainCertificate& c);
nlohmann::json to_json(const RunSummary& s);
MatrixConfig matrix_from_json(const nlohmann::json& j);

}  // namespace lbgnn
