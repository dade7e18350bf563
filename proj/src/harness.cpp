#include "lbgnn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lbgnn {

double rms(const std::vector<std::vector<Eigen::VectorXd>>& series) {
  if (series.empty() || series.front().empty()) throw std::invalid_argument("rms needs a nonempty window");
  const std::size_t k = series.front().size();
  double total = 0.0;
  for (const auto& agent : series) {
    if (agent.size() != k) throw std::invalid_argument("every agent needs the same number of samples");
    double acc = 0.0;
    for (const auto& s : agent) acc += s.squaredNorm();
    total += acc / static_cast<double>(k);
  }
  return total / static_cast<double>(series.size());
}

double rms_from_norms(const Eigen::MatrixXd& norms, Eigen::Index begin, Eigen::Index end, bool take_sqrt) {
  if (begin < 0 || end > norms.rows() || end <= begin || norms.cols() == 0)
    throw std::invalid_argument("rms needs a nonempty window");
  const auto block = norms.middleRows(begin, end - begin);
  const Eigen::ArrayXd per_agent = block.array().square().colwise().mean().transpose();
  return take_sqrt ? per_agent.sqrt().mean() : per_agent.mean();
}

std::pair<Eigen::Index, Eigen::Index> window_rows(const std::vector<double>& t, double from, double to) {
  if (t.empty()) return {0, 0};
  // Sample times are multiples of dt; the slack absorbs their rounding.
  constexpr double slack = 1e-9;
  const auto lo = std::lower_bound(t.begin(), t.end(), from - slack) - t.begin();
  Eigen::Index hi;
  if (to >= t.back() - slack) hi = static_cast<Eigen::Index>(t.size());
  else hi = std::lower_bound(t.begin(), t.end(), to - slack) - t.begin();
  return {static_cast<Eigen::Index>(lo), std::max<Eigen::Index>(hi, lo)};
}

RunSummary summarize(const RunResult& r, const SummaryOptions& o) {
  RunSummary s;
  s.diverged = r.diverged;
  s.wall_seconds = r.wall_seconds;
  s.max_theta1_sq = r.max_theta1_sq;
  s.max_theta2_sq = r.max_theta2_sq;
  s.projection_limit = r.projection_limit;
  if (r.t.empty()) return s;
  const Eigen::Index all = static_cast<Eigen::Index>(r.t.size());
  const double end = r.t.back();
  auto safe = [&](const Eigen::MatrixXd& m, std::pair<Eigen::Index, Eigen::Index> w) {
    return w.second > w.first ? rms_from_norms(m, w.first, w.second, o.take_sqrt)
                              : std::numeric_limits<double>::quiet_NaN();
  };
  s.e_rms = rms_from_norms(r.e, 0, all, o.take_sqrt);
  s.de_rms = rms_from_norms(r.de, 0, all, o.take_sqrt);
  s.u_rms = rms_from_norms(r.u, 0, all, o.take_sqrt);
  const auto early = window_rows(r.t, 0.0, o.split);
  const auto late = window_rows(r.t, o.split, end);
  s.phi1_early = safe(r.phi1_err, early);
  s.phi1_late = safe(r.phi1_err, late);
  s.phi2_early = safe(r.phi2_err, early);
  s.phi2_late = safe(r.phi2_err, late);
  const auto first = window_rows(r.t, 0.0, o.trend_window);
  const auto last = window_rows(r.t, end - o.trend_window, end);
  auto mean_norm = [&](std::pair<Eigen::Index, Eigen::Index> w) {
    if (w.second <= w.first) return std::numeric_limits<double>::quiet_NaN();
    return r.e.middleRows(w.first, w.second - w.first).mean();
  };
  s.e_mean_first = mean_norm(first);
  s.e_mean_last = mean_norm(last);
  return s;
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"e_RMS",         "edot_RMS",       "phi1_RMS[0:10]",
                                             "phi1_RMS[10:60]", "phi2_RMS[0:10]", "phi2_RMS[10:60]",
                                             "u_RMS"};
  return cols;
}

std::vector<double> summary_values(const RunSummary& s) {
  return {s.e_rms, s.de_rms, s.phi1_early, s.phi1_late, s.phi2_early, s.phi2_late, s.u_rms};
}

MatrixConfig standard_matrix() {
  MatrixConfig m;
  for (auto kind : {TopologyKind::path, TopologyKind::ring, TopologyKind::star, TopologyKind::complete,
                    TopologyKind::acyclic})
    m.topologies.push_back(build_topology(kind, 6));
  m.pairs = {{Arch::dnn, Arch::dnn}, {Arch::gnn, Arch::gnn}, {Arch::gat, Arch::gnn}};
  return m;
}

std::string pair_label(Arch a1, Arch a2) {
  std::string s = std::string(to_string(a1)) + "+" + std::string(to_string(a2));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string topology_label(const Topology& t) {
  const std::string n = std::to_string(t.n_agents);
  switch (t.kind) {
    case TopologyKind::path: return "Path (P" + n + ")";
    case TopologyKind::ring: return "Ring (R" + n + ")";
    case TopologyKind::star: return "Star (S" + n + ")";
    case TopologyKind::complete: return "Complete (K" + n + ")";
    case TopologyKind::acyclic: return "Acyclic (" + n + " agents)";
    case TopologyKind::custom: return "Custom (" + n + " agents)";
  }
  return "Custom";
}

MatrixResult run_matrix(const MatrixConfig& config, const std::function<void(const MatrixCell&)>& on_cell) {
  if (config.topologies.empty() || config.pairs.empty() || config.seeds.empty())
    throw std::invalid_argument("matrix needs at least one topology, pair and seed");
  MatrixResult out;
  for (const auto& t : config.topologies)
    for (const auto& [a1, a2] : config.pairs)
      for (auto seed : config.seeds) out.cells.push_back({t, a1, a2, seed, {}, {}, {}});

  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&]() {
    for (std::size_t c = next++; c < out.cells.size(); c = next++) {
      auto& cell = out.cells[c];
      Scenario sc = config.base;
      sc.topology = cell.topology;
      sc.arch1 = cell.arch1;
      sc.arch2 = cell.arch2;
      sc.control.seed = cell.seed;
      if (sc.spec2) sc.spec2->d_in = 2 * kDim * sc.topology.n_agents;
      try {
        const RunResult r = run_scenario(sc);
        cell.summary = summarize(r, config.summary);
        cell.certificate = r.certificate;
        if (r.diverged) cell.failure = r.failure;
      } catch (const std::exception& err) {
        cell.failure = err.what();
        cell.summary.diverged = true;
      }
      if (on_cell) {
        std::lock_guard lock(report);
        on_cell(cell);
      }
    }
  };
  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const std::size_t per_group = config.seeds.size();
  for (std::size_t g = 0; g < out.cells.size(); g += per_group) {
    MatrixAggregate agg;
    agg.topology = out.cells[g].topology;
    agg.arch1 = out.cells[g].arch1;
    agg.arch2 = out.cells[g].arch2;
    const std::size_t cols = summary_columns().size();
    std::vector<std::vector<double>> values(cols);
    for (std::size_t c = g; c < g + per_group; ++c) {
      const auto& cell = out.cells[c];
      if (!cell.failure.empty() || cell.summary.diverged) {
        ++agg.failed;
        continue;
      }
      ++agg.runs;
      const auto v = summary_values(cell.summary);
      for (std::size_t k = 0; k < cols; ++k) values[k].push_back(v[k]);
    }
    for (const auto& v : values) {
      const double n = static_cast<double>(v.size());
      double mean = std::numeric_limits<double>::quiet_NaN(), sd = 0.0;
      if (!v.empty()) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        if (v.size() > 1) {
          for (double x : v) sd += (x - mean) * (x - mean);
          sd = std::sqrt(sd / (n - 1.0));
        }
      }
      agg.mean.push_back(mean);
      agg.stddev.push_back(sd);
    }
    out.aggregates.push_back(std::move(agg));
  }
  return out;
}

namespace {

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::string markdown_table(const MatrixResult& result) {
  std::ostringstream os;
  const auto& cols = summary_columns();
  std::string current;
  for (const auto& agg : result.aggregates) {
    const std::string label = topology_label(agg.topology);
    if (label != current) {
      current = label;
      os << "\n### " << label << "\n\n| Architecture |";
      for (const auto& c : cols) os << ' ' << c << " |";
      os << "\n|---|";
      for (std::size_t k = 0; k < cols.size(); ++k) os << "---|";
      os << '\n';
    }
    os << "| " << pair_label(agg.arch1, agg.arch2);
    if (agg.failed > 0) os << " (" << agg.failed << " failed)";
    os << " |";
    for (std::size_t k = 0; k < cols.size(); ++k) {
      os << ' ' << fmt(agg.mean[k]);
      if (agg.runs > 1) os << " ± " << fmt(agg.stddev[k], 2);
      os << " |";
    }
    os << '\n';
  }
  return os.str();
}

std::string cells_csv(const MatrixResult& result) {
  std::ostringstream os;
  os << "topology,pair,seed";
  for (const auto& c : summary_columns()) os << ',' << c;
  os << ",e_mean_first,e_mean_last,max_theta1_sq,max_theta2_sq,diverged,wall_seconds\n";
  os << std::setprecision(10);
  for (const auto& cell : result.cells) {
    os << to_string(cell.topology.kind) << ',' << pair_label(cell.arch1, cell.arch2) << ',' << cell.seed;
    for (double v : summary_values(cell.summary)) os << ',' << v;
    const auto& s = cell.summary;
    os << ',' << s.e_mean_first << ',' << s.e_mean_last << ',' << s.max_theta1_sq << ','
       << s.max_theta2_sq << ',' << (s.diverged ? 1 : 0) << ',' << s.wall_seconds << '\n';
  }
  return os.str();
}

void write_series_csv(const RunResult& r, const std::filesystem::path& path, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "t,agent,||e||,||edot||,||qtilde||,||u||,||phi1err||,||phi2err||\n";
  f << std::setprecision(10);
  const auto rows = static_cast<Eigen::Index>(r.t.size());
  for (Eigen::Index k = 0; k < rows; k += stride)
    for (Eigen::Index i = 0; i < r.e.cols(); ++i)
      f << r.t[k] << ',' << i + 1 << ',' << r.e(k, i) << ',' << r.de(k, i) << ',' << r.q_tilde(k, i)
        << ',' << r.u(k, i) << ',' << r.phi1_err(k, i) << ',' << r.phi2_err(k, i) << '\n';
}

nlohmann::json to_json(const Topology& t) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : t.edges) edges.push_back({a + 1, b + 1});
  nlohmann::json pins = nlohmann::json::array();
  for (int i = 0; i < t.n_agents; ++i)
    if (t.pins[i]) pins.push_back(i + 1);
  return {{"kind", std::string(to_string(t.kind))}, {"n_agents", t.n_agents}, {"edges", edges}, {"pins", pins}};
}

Topology topology_from_json(const nlohmann::json& j) {
  if (j.is_string()) return build_topology(topology_kind_from_string(j.get<std::string>()), 6);
  const auto kind = topology_kind_from_string(j.value("kind", std::string("custom")));
  const int n = j.value("n_agents", 6);
  Topology t;
  if (j.contains("edges")) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>() - 1, e.at(1).get<int>() - 1);
    t = make_topology(n, std::move(edges), std::vector<bool>(n, false), kind);
    if (kind != TopologyKind::custom) t.pins = default_pins(kind, n);
  } else {
    t = build_topology(kind, n);
  }
  if (j.contains("pins")) {
    t.pins.assign(n, false);
    for (const auto& p : j.at("pins")) {
      const int id = p.get<int>();
      if (id < 1 || id > n) throw std::invalid_argument("pin id out of range");
      t.pins[id - 1] = true;
    }
  }
  return t;
}

nlohmann::json to_json(const ControlConfig& c) {
  return {{"alpha1", c.alpha1}, {"alpha2", c.alpha2}, {"k1", c.k1},         {"k2", c.k2},
          {"k3", c.k3},         {"k4", c.k4},         {"gamma1", c.gamma1}, {"gamma2", c.gamma2},
          {"theta_bar", c.theta_bar}, {"band", c.projection_band()}, {"lipschitz", c.lipschitz},
          {"dt", c.dt},         {"duration", c.duration}, {"seed", c.seed}};
}

ControlConfig control_from_json(const nlohmann::json& j, ControlConfig c) {
  auto get = [&](const char* key, double& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
  };
  get("alpha1", c.alpha1);
  get("alpha2", c.alpha2);
  get("k1", c.k1);
  get("k2", c.k2);
  get("k3", c.k3);
  get("k4", c.k4);
  get("gamma1", c.gamma1);
  get("gamma2", c.gamma2);
  if (j.contains("gamma")) c.gamma1 = c.gamma2 = j.at("gamma").get<double>();
  get("theta_bar", c.theta_bar);
  get("band", c.band);
  get("lipschitz", c.lipschitz);
  get("dt", c.dt);
  get("duration", c.duration);
  if (j.contains("seed")) c.seed = j.at("seed").get<unsigned long long>();
  return c;
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j;
  if (s.topology.n_agents > 0) j["topology"] = to_json(s.topology);
  j["observer"] = std::string(to_string(s.arch1));
  j["controller"] = std::string(to_string(s.arch2));
  auto c = to_json(s.control);
  j["gains"] = {{"alpha1", c["alpha1"]}, {"alpha2", c["alpha2"]}, {"k1", c["k1"]}, {"k2", c["k2"]},
                {"k3", c["k3"]},         {"k4", c["k4"]},         {"gamma1", c["gamma1"]},
                {"gamma2", c["gamma2"]}};
  for (const char* key : {"theta_bar", "band", "lipschitz", "dt", "duration", "seed"}) j[key] = c[key];
  if (s.spec1) j["observer_hidden"] = s.spec1->hidden;
  if (s.spec2) j["controller_hidden"] = s.spec2->hidden;
  if (s.init1) j["observer_init_std"] = s.init1->layer_stddev;
  if (s.init2) j["controller_init_std"] = s.init2->layer_stddev;
  j["radius"] = s.radius;
  j["phase"] = s.phase;
  j["interaction_floor"] = s.interaction_floor;
  j["target_position"] = {s.target_position.x(), s.target_position.y(), s.target_position.z()};
  j["target_velocity"] = {s.target_velocity.x(), s.target_velocity.y(), s.target_velocity.z()};
  return j;
}

namespace {

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  if (j.contains("topology")) s.topology = topology_from_json(j.at("topology"));
  if (j.contains("observer")) s.arch1 = arch_from_string(j.at("observer").get<std::string>());
  if (j.contains("controller")) s.arch2 = arch_from_string(j.at("controller").get<std::string>());
  s.control = control_from_json(j, control_from_json(j.value("gains", nlohmann::json::object())));
  const int n = s.topology.n_agents;
  if (j.contains("observer_hidden")) {
    LayerSpec spec{2 * kDim, kDim, j.at("observer_hidden").get<std::vector<int>>()};
    s.spec1 = spec;
  }
  if (j.contains("controller_hidden")) {
    // Without a topology the input width is fixed up once the agent count is known.
    LayerSpec spec{2 * kDim * n, kDim, j.at("controller_hidden").get<std::vector<int>>()};
    s.spec2 = spec;
  }
  if (j.contains("observer_init_std")) {
    const double v = j.at("observer_init_std").get<double>();
    s.init1 = InitOptions{v, v};
  }
  if (j.contains("controller_init_std")) {
    const double v = j.at("controller_init_std").get<double>();
    s.init2 = InitOptions{v, v};
  }
  s.radius = j.value("radius", s.radius);
  s.phase = j.value("phase", s.phase);
  s.interaction_floor = j.value("interaction_floor", s.interaction_floor);
  if (j.contains("target_position")) s.target_position = vec3_from_json(j.at("target_position"));
  if (j.contains("target_velocity")) s.target_velocity = vec3_from_json(j.at("target_velocity"));
  return s;
}

nlohmann::json to_json(const GainCertificate& c) {
  return {{"n_agents", c.n_agents},     {"lipschitz", c.lipschitz},   {"lambda_min", c.lambda_min},
          {"lambda_max", c.lambda_max}, {"eps1", c.eps1},             {"eps2", c.eps2},
          {"eps3", c.eps3},             {"eps2_upper", c.eps2_upper}, {"k1_bound", c.k1_bound},
          {"k2_bound", c.k2_bound},     {"k1_margin", c.k1_margin},   {"k2_margin", c.k2_margin},
          {"eps3_ok", c.eps3_ok},       {"eps1_ok", c.eps1_ok},       {"eps2_ok", c.eps2_ok},
          {"k1_ok", c.k1_ok},           {"k2_ok", c.k2_ok},           {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},       {"lambda3", c.lambda3},       {"pass", c.pass()}};
}

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json j;
  const auto& cols = summary_columns();
  const auto vals = summary_values(s);
  for (std::size_t k = 0; k < cols.size(); ++k) j[cols[k]] = vals[k];
  j["e_mean_first"] = s.e_mean_first;
  j["e_mean_last"] = s.e_mean_last;
  j["max_theta1_sq"] = s.max_theta1_sq;
  j["max_theta2_sq"] = s.max_theta2_sq;
  j["projection_limit"] = s.projection_limit;
  j["diverged"] = s.diverged;
  j["wall_seconds"] = s.wall_seconds;
  return j;
}

MatrixConfig matrix_from_json(const nlohmann::json& j) {
  MatrixConfig m = standard_matrix();
  if (j.contains("base")) m.base = scenario_from_json(j.at("base"));
  if (j.contains("topologies")) {
    m.topologies.clear();
    for (const auto& t : j.at("topologies")) m.topologies.push_back(topology_from_json(t));
  }
  if (j.contains("pairs")) {
    m.pairs.clear();
    for (const auto& p : j.at("pairs"))
      m.pairs.emplace_back(arch_from_string(p.at(0).get<std::string>()),
                           arch_from_string(p.at(1).get<std::string>()));
  }
  if (j.contains("seeds")) m.seeds = j.at("seeds").get<std::vector<unsigned long long>>();
  m.summary.split = j.value("split", m.summary.split);
  m.summary.take_sqrt = j.value("sqrt_rms", m.summary.take_sqrt);
  m.threads = j.value("threads", m.threads);
  return m;
}

}  // namespace lbgnn
