#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "abspread/blocks.hpp"
#include "abspread/experiments.hpp"
#include "abspread/sim.hpp"
#include "abspread/stats.hpp"

namespace abspread::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kTimeseriesHeader = "replica,t,n_infected_sites,n_B_particles,R,L,max_norm_B,n_A_in_half_region";

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json test_entry(const std::string& name, double statistic, std::optional<double> p, bool pass) {
  return {{"name", name},
          {"statistic", number_or_null(statistic)},
          {"p", p ? number_or_null(*p) : json(nullptr)},
          {"pass", pass}};
}

WalkParams walk_params(const RunConfig& cfg) { return {cfg.d, cfg.D_A, cfg.D_B, cfg.mu_A}; }

json speed_json(const SpeedEstimate& s) {
  return {{"slope", s.slope},       {"ci", {s.ci_lo(), s.ci_hi()}}, {"half_width", s.half_width},
          {"intercept", s.intercept}, {"t_lo", s.t_lo},             {"t_hi", s.t_hi},
          {"n_epochs", s.n_epochs},   {"n_replicas", s.n_replicas}};
}

// Speed fit plus its test entry; null when the grid is too short.
void add_speed(json& summary, const std::vector<ExperimentRecord>& records, double window, const BootstrapSpec& boot) {
  try {
    const auto s = speed_estimate(records, window, boot);
    summary["speed"] = speed_json(s);
    summary["tests"].push_back(test_entry("speed_positive", s.slope, std::nullopt, s.ci_lo() > 0.0));
  } catch (const std::invalid_argument& e) {
    summary["speed"] = nullptr;
    summary["notes"].push_back(std::string("speed fit skipped: ") + e.what());
  }
}

json bound_json(const BoundCheck& c) {
  return {{"t", c.t},           {"n", c.n},         {"mean", c.mean}, {"mean_n0", c.mean_n0},
          {"std_err", c.std_err}, {"bound", c.bound}, {"pass", c.pass}};
}

void add_bounds(json& summary, const std::vector<ExperimentRecord>& records, const WalkParams& params,
                const std::vector<double>& times) {
  for (double t : times) {
    const auto c = check_b_count_bound(records, params, t);
    summary["bound_checks"].push_back(bound_json(c));
    summary["tests"].push_back(test_entry("b_count_bound_t=" + format_number(t),
                                          (c.mean + 3.0 * c.std_err) / c.bound, std::nullopt, c.pass));
  }
}

void add_martingale(json& summary, const std::vector<double>& times,
                    const std::vector<std::vector<double>>& increments) {
  for (const auto& s : martingale_test(times, increments)) {
    const double z = s.std_err > 0.0 ? s.mean / s.std_err : (s.mean == 0.0 ? 0.0 : INFINITY);
    summary["tests"].push_back(
        test_entry("martingale_t=" + format_number(s.t), z, std::erfc(std::abs(z) / std::sqrt(2.0)), s.pass));
  }
}

void add_stationarity(json& summary, const StationarityResult& r) {
  summary["stationarity"] = {{"statistic", r.statistic}, {"dof", r.dof}, {"p", r.p}, {"n_sites", r.n_sites}};
  summary["tests"].push_back(test_entry("stationarity_chi_square", r.statistic, r.p, r.p > 0.001));
}

std::string martingale_csv(const MartingaleRun& run) {
  std::string s = "replica,t,increment\n";
  for (std::size_t i = 0; i < run.increments.size(); ++i) {
    for (std::size_t j = 0; j < run.times.size(); ++j) {
      s += std::to_string(i) + ',' + format_number(run.times[j]) + ',' + format_number(run.increments[i][j]) + '\n';
    }
  }
  return s;
}

std::string histogram_csv(const std::vector<std::uint64_t>& hist) {
  std::string s = "count,sites\n";
  for (std::size_t c = 0; c < hist.size(); ++c) s += std::to_string(c) + ',' + std::to_string(hist[c]) + '\n';
  return s;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw IoError(path.string() + ":1: expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  const auto width = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != width) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

template <class T>
T cell_as(const std::string& v, const fs::path& path, std::size_t row) {
  T x{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw IoError(path.string() + ":" + std::to_string(row + 2) + ": bad value '" + v + "'");
  }
  return x;
}

// Summary fields needed to re-analyze a run directory.
struct SavedRun {
  bool present = false;
  RunConfig cfg;
};

SavedRun read_summary(const fs::path& dir) {
  SavedRun s;
  const auto path = dir / "summary.json";
  if (!fs::exists(path)) return s;
  json j;
  try {
    j = json::parse(read_file(path));
    const auto& c = j.at("config");
    s.cfg.d = c.at("d").get<int>();
    s.cfg.D_A = c.at("D_A").get<double>();
    s.cfg.D_B = c.at("D_B").get<double>();
    s.cfg.mu_A = c.at("mu_A").get<double>();
    s.cfg.seed = c.at("seed").get<std::uint64_t>();
    s.cfg.speed_window = c.at("speed_window").get<double>();
    s.cfg.bootstrap = c.at("bootstrap").get<int>();
    s.cfg.bound_times = c.at("bound_times").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  s.present = true;
  return s;
}

int run_impl(const RunConfig& cfg, std::ostream& log, json& summary) {
  cfg.validate();
  SimConfig sim;
  sim.params = walk_params(cfg);
  sim.b_seeds = cfg.seed_sites();
  sim.t_max = cfg.t_max;
  sim.kappa = cfg.kappa;
  sim.window_margin = cfg.window_margin;
  try {
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto W = sim.window_radius();
  for (const auto& s : sim.b_seeds) {
    if (norm_inf(s) > W) {
      throw ConfigError("seeds: site " + s.to_string() + " lies outside the window C(" + std::to_string(W) + ")");
    }
  }
  if (cfg.blocks) {
    double children = 1.0;
    for (int i = 0; i < cfg.d; ++i) children *= std::pow(static_cast<double>(cfg.C0), 6.0);
    if (children > 1e6) throw ConfigError("blocks: C0^(6d) children per parent block is too many");
  }

  const fs::path dir = cfg.out;
  make_dir(dir);
  const int threads = cfg.worker_threads();
  const BootstrapSpec boot{cfg.bootstrap, cfg.seed};
  int status = kPass;

  summary = json::object();
  summary["config"] = config_json(cfg);
  summary["n_replicas"] = cfg.replicas;
  summary["speed"] = nullptr;
  summary["bound_checks"] = json::array();
  summary["tests"] = json::array();
  summary["exact"] = json::object();
  summary["invariant_failures"] = json::array();
  summary["notes"] = json::array();

  SamplingPlan plan;
  plan.epochs = epoch_grid(cfg.t_max, cfg.epoch_dt, cfg.epoch_geometric);
  plan.half_region_slope = cfg.half_region_slope;
  ReplicaOptions opt;
  opt.threads = threads;
  log << "run: " << cfg.replicas << " replicas to t=" << format_number(cfg.t_max) << " in " << dir.string() << "\n";
  const auto results = run_replicas(sim, plan, cfg.seed, cfg.replicas, opt);
  std::vector<ExperimentRecord> records;
  for (std::size_t i = 0; i < results.size(); ++i) {
    records.push_back(results[i].record);
    for (const auto& f : results[i].invariant_failures) {
      summary["invariant_failures"].push_back("replica " + std::to_string(i) + ": " + f);
      status = kFail;
    }
  }
  write_file(dir / "timeseries.csv", timeseries_csv(records));
  if (cfg.front) add_speed(summary, records, cfg.speed_window, boot);

  if (cfg.shape) {
    if (cfg.t_max > 0.0) {
      auto state = SimState::init(sim, RngStream{cfg.seed, 0});
      run_until(state, cfg.t_max, SamplingPlan{});
      const auto early = shape_snapshot(state, cfg.t_max / 2.0);
      const auto late = shape_snapshot(state, cfg.t_max);
      std::string s = "t";
      for (int i = 1; i <= cfg.d; ++i) s += ",x" + std::to_string(i);
      s += '\n';
      for (const auto* snap : {&early, &late}) {
        const double t = snap == &early ? cfg.t_max / 2.0 : cfg.t_max;
        for (const auto& p : *snap) {
          s += format_number(t);
          for (double x : p) s += ',' + format_number(x);
          s += '\n';
        }
      }
      write_file(dir / "shape.csv", s);
      summary["shape"] = {{"t", {cfg.t_max / 2.0, cfg.t_max}},
                          {"sizes", {early.size(), late.size()}},
                          {"hausdorff", hausdorff_distance(early, late)}};
    } else {
      summary["notes"].push_back("shape skipped: t_max is 0");
    }
  }

  if (cfg.bounds) {
    log << "bounds: " << cfg.bound_replicas << " replicas\n";
    BoundSpec b;
    b.params = walk_params(cfg);
    b.times = cfg.bound_times;
    b.replicas = cfg.bound_replicas;
    b.kappa = cfg.kappa;
    b.seed = cfg.seed;
    b.threads = threads;
    const auto recs = bound_records(b);
    write_file(dir / "bounds_timeseries.csv", timeseries_csv(recs));
    add_bounds(summary, recs, b.params, b.times);
  }

  if (cfg.martingale) {
    log << "martingale: " << cfg.martingale_replicas << " replicas\n";
    MartingaleSpec m;
    m.params = walk_params(cfg);
    m.distance = cfg.martingale_distance;
    m.times = cfg.martingale_times;
    m.replicas = cfg.martingale_replicas;
    m.tracking = cfg.martingale_tracking;
    m.seed = cfg.seed;
    m.threads = threads;
    const auto run = run_martingale(m);
    write_file(dir / "martingale.csv", martingale_csv(run));
    add_martingale(summary, run.times, run.increments);
    summary["exact"]["martingale_increments"] = {{"intervals", run.sigma_intervals},
                                                 {"violations", run.increment_violations},
                                                 {"max_increment", run.max_increment},
                                                 {"bound", run.increment_bound}};
    if (run.increment_violations > 0) status = kFail;
  }

  if (cfg.coupling) {
    log << "coupling: " << cfg.coupling_pairs << " pairs\n";
    CouplingSpec c;
    c.params = walk_params(cfg);
    c.t_max = cfg.coupling_t_max;
    c.pairs = cfg.coupling_pairs;
    c.epochs = epoch_grid(cfg.coupling_t_max, cfg.coupling_t_max / 4.0);
    c.seed = cfg.seed;
    c.threads = threads;
    const auto run = run_coupling(c);
    std::string s = "pair,kind,site,dominated\n";
    for (std::size_t i = 0; i < run.pairs.size(); ++i) {
      const auto& p = run.pairs[i];
      s += std::to_string(i) + ',' + to_string(p.kind) + ",\"" + p.site.to_string() + "\"," +
           (p.dominated ? "1" : "0") + '\n';
    }
    write_file(dir / "coupling.csv", s);
    summary["exact"]["coupling"] = {{"pairs", run.pairs.size()}, {"dominated", run.dominated}};
    if (run.dominated != run.pairs.size()) status = kFail;
  }

  if (cfg.blocks) {
    log << "blocks: " << cfg.blocks_configs << " configurations\n";
    MultiscaleSpec m;
    m.d = cfg.d;
    m.C0 = cfg.C0;
    m.gamma0 = cfg.gamma0;
    m.mus = cfg.blocks_mus;
    m.configs = cfg.blocks_configs;
    m.paths = cfg.blocks_paths;
    m.field_rate = cfg.blocks_field_rate;
    m.seed = cfg.seed;
    m.threads = threads;
    const auto run = run_multiscale(m);
    if (!run.configs.empty()) write_file(dir / "blocks.csv", blocks_csv(run.configs.front().labels, cfg.d));
    summary["exact"]["blocks"] = {{"configs", run.configs.size()},
                                  {"blocks", run.blocks},
                                  {"w_checks", run.w_checks},
                                  {"w_exceeds_u", run.w_exceeds_u},
                                  {"bad_not_inferior", run.bad_not_inferior},
                                  {"good_with_bad_pedestal", run.good_with_bad_pedestal},
                                  {"pedestal_mismatch", run.pedestal_mismatch},
                                  {"recursion_checks", run.recursion_checks},
                                  {"recursion_failures", run.recursion_failures}};
    if (!run.all_exact()) status = kFail;
  }

  if (cfg.stationarity) {
    log << "stationarity: " << cfg.stationarity_replicas << " fields\n";
    StationaritySpec s;
    s.params = walk_params(cfg);
    s.t = cfg.stationarity_t;
    s.window = cfg.stationarity_window;
    s.k = cfg.stationarity_k;
    s.replicas = cfg.stationarity_replicas;
    s.seed = cfg.seed;
    const auto r = run_stationarity(s);
    write_file(dir / "stationarity.csv", histogram_csv(r.histogram));
    add_stationarity(summary, r);
  }

  write_file(dir / "summary.json", dump(summary));
  if (status != kPass) log << "run: exact check failed, see " << (dir / "summary.json").string() << "\n";
  return status;
}

}  // namespace

std::string format_number(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string timeseries_csv(const std::vector<ExperimentRecord>& records) {
  std::string s = kTimeseriesHeader;
  s += '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& e : records[i].samples) {
      s += std::to_string(i);
      s += ',' + format_number(e.t);
      s += ',' + std::to_string(e.n_infected_sites);
      s += ',' + std::to_string(e.n_b);
      s += ',' + (e.front_right ? std::to_string(*e.front_right) : std::string());
      s += ',' + (e.front_left ? std::to_string(*e.front_left) : std::string());
      s += ',' + std::to_string(e.max_norm_b);
      s += ',' + std::to_string(e.n_a_half_region);
      s += '\n';
    }
  }
  return s;
}

std::vector<ExperimentRecord> read_timeseries(const fs::path& path, int dim) {
  const auto rows = read_csv(path, kTimeseriesHeader);
  std::map<std::uint64_t, ExperimentRecord> by_replica;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& c = rows[r];
    auto& rec = by_replica[cell_as<std::uint64_t>(c[0], path, r)];
    rec.dim = dim;
    EpochSample e;
    e.t = cell_as<double>(c[1], path, r);
    e.n_infected_sites = cell_as<std::uint64_t>(c[2], path, r);
    e.n_b = cell_as<std::uint64_t>(c[3], path, r);
    if (!c[4].empty()) e.front_right = cell_as<std::int64_t>(c[4], path, r);
    if (!c[5].empty()) e.front_left = cell_as<std::int64_t>(c[5], path, r);
    e.max_norm_b = cell_as<std::int64_t>(c[6], path, r);
    e.n_a_half_region = cell_as<std::uint64_t>(c[7], path, r);
    if (!rec.samples.empty() && !(e.t > rec.samples.back().t)) {
      throw IoError(path.string() + ":" + std::to_string(r + 2) + ": epochs out of order");
    }
    rec.samples.push_back(e);
  }
  if (by_replica.empty()) throw IoError(path.string() + ": no rows");
  std::vector<ExperimentRecord> out;
  for (auto& [id, rec] : by_replica) out.push_back(std::move(rec));
  return out;
}

int cmd_run(const RunConfig& cfg, std::ostream& log) {
  json summary;
  return run_impl(cfg, log, summary);
}

int cmd_analyze(const fs::path& dir, const std::set<std::string>& checks, std::ostream& log) {
  static const std::set<std::string> known{"speed", "bounds", "stationarity", "martingale"};
  for (const auto& c : checks) {
    if (!known.count(c)) throw ConfigError("unknown check '" + c + "'");
  }
  if (!fs::is_directory(dir)) throw IoError("no run directory " + dir.string());
  const auto saved = read_summary(dir);
  const std::map<std::string, fs::path> inputs{{"speed", dir / "timeseries.csv"},
                                               {"bounds", dir / "bounds_timeseries.csv"},
                                               {"stationarity", dir / "stationarity.csv"},
                                               {"martingale", dir / "martingale.csv"}};
  std::vector<std::string> todo;
  for (const std::string name : {"speed", "bounds", "martingale", "stationarity"}) {
    const auto& path = inputs.at(name);
    const bool wanted = checks.empty() || checks.count(name);
    if (!wanted) continue;
    if (fs::exists(path)) {
      todo.push_back(name);
    } else if (!checks.empty()) {
      throw IoError("check '" + name + "' needs " + path.string());
    }
  }
  if (todo.empty()) throw IoError("no run outputs in " + dir.string());
  const bool needs_summary = std::find(todo.begin(), todo.end(), "bounds") != todo.end() ||
                             std::find(todo.begin(), todo.end(), "stationarity") != todo.end();
  if (needs_summary && !saved.present) throw IoError("missing " + (dir / "summary.json").string());

  json analysis = json::object();
  analysis["bound_checks"] = json::array();
  analysis["tests"] = json::array();
  analysis["notes"] = json::array();
  analysis["speed"] = nullptr;
  analysis["checks"] = todo;

  for (const auto& name : todo) {
    log << "analyze: " << name << "\n";
    const auto& path = inputs.at(name);
    try {
      if (name == "speed") {
        int dim = saved.cfg.d;
        auto recs = read_timeseries(path, 1);
        if (!saved.present) dim = recs.front().samples.front().front_right ? 1 : 2;
        for (auto& r : recs) r.dim = dim;
        add_speed(analysis, recs, saved.cfg.speed_window, BootstrapSpec{saved.cfg.bootstrap, saved.cfg.seed});
      } else if (name == "bounds") {
        auto recs = read_timeseries(path, saved.cfg.d);
        add_bounds(analysis, recs, walk_params(saved.cfg), saved.cfg.bound_times);
      } else if (name == "stationarity") {
        const auto rows = read_csv(path, "count,sites");
        std::vector<std::uint64_t> hist;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const auto c = cell_as<std::uint64_t>(rows[r][0], path, r);
          if (c != hist.size()) throw IoError(path.string() + ":" + std::to_string(r + 2) + ": counts out of order");
          hist.push_back(cell_as<std::uint64_t>(rows[r][1], path, r));
        }
        add_stationarity(analysis, poisson_histogram_test(hist, saved.cfg.mu_A));
      } else {
        const auto rows = read_csv(path, "replica,t,increment");
        std::vector<double> times;
        std::vector<std::vector<double>> inc;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const auto rep = cell_as<std::size_t>(rows[r][0], path, r);
          const auto t = cell_as<double>(rows[r][1], path, r);
          if (rep == inc.size()) inc.emplace_back();
          if (rep + 1 != inc.size()) throw IoError(path.string() + ":" + std::to_string(r + 2) + ": replica out of order");
          if (rep == 0) times.push_back(t);
          const auto j = inc.back().size();
          if (j >= times.size() || times[j] != t) {
            throw IoError(path.string() + ":" + std::to_string(r + 2) + ": sample times differ between replicas");
          }
          inc.back().push_back(cell_as<double>(rows[r][2], path, r));
        }
        for (const auto& row : inc) {
          if (row.size() != times.size()) throw IoError(path.string() + ": incomplete replica");
        }
        add_martingale(analysis, times, inc);
      }
    } catch (const std::invalid_argument& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  bool pass = true;
  for (const auto& t : analysis["tests"]) pass = pass && t["pass"].get<bool>();
  analysis["pass"] = pass;
  write_file(dir / "analysis.json", dump(analysis));
  return pass ? kPass : kFail;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  const auto rep = validate_constants(cfg.gamma0, cfg.C0, cfg.mu_A, cfg.d, cfg.r_max, cfg.C4);
  const auto sched = gamma_schedule(cfg.gamma0, cfg.C0, cfg.r_max);
  const auto ok = [](bool b) { return b ? "ok" : "FAIL"; };
  out << "constants: gamma0=" << format_number(cfg.gamma0) << " C0=" << cfg.C0 << " mu_A=" << format_number(cfg.mu_A)
      << " d=" << cfg.d << " r_max=" << cfg.r_max << " C4=" << format_number(cfg.C4) << "\n";
  out << "density: gamma0 * product = " << format_number(cfg.gamma0 * rep.gamma_product)
      << " (upper " << format_number(cfg.gamma0 * rep.gamma_product_upper) << ") <= 1/2: " << ok(rep.density_ok)
      << "\n";
  for (std::size_t i = 0; i < rep.kernel_ok.size(); ++i) {
    out << "kernel r=" << i + 1 << ": lhs - rhs = " << format_number(rep.kernel_lhs[i]) << " " << ok(rep.kernel_ok[i])
        << "\n";
  }
  for (std::size_t i = 0; i < rep.scale_ok.size(); ++i) {
    out << "scale r=" << i + 1 << ": log rho0 = " << format_number(rep.log_rho0[i]) << " " << ok(rep.scale_ok[i])
        << "\n";
  }
  out << "r gamma_r\n";
  for (int r = 1; r <= cfg.r_max; ++r) out << r << " " << format_number(sched.at(r)) << "\n";
  out << "gamma_inf <= " << format_number(cfg.gamma0 * rep.gamma_product_upper) << "\n";
  out << "all constraints: " << ok(rep.all_ok()) << "\n";
  return kPass;
}

std::pair<std::string, std::vector<std::string>> parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--grid expects KEY=v1,v2,..., got '" + text + "'");
  std::pair<std::string, std::vector<std::string>> axis{text.substr(0, eq), {}};
  std::istringstream in(text.substr(eq + 1));
  std::string v;
  while (std::getline(in, v, ',')) {
    if (!v.empty()) axis.second.push_back(v);
  }
  if (axis.second.empty()) throw ConfigError("--grid " + axis.first + ": no values");
  return axis;
}

int cmd_sweep(const RunConfig& cfg, const Grid& grid, std::ostream& log) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  std::vector<RunConfig> cells{cfg};
  std::vector<std::vector<std::string>> values{{}};
  for (const auto& [key, vals] : grid) {
    if (vals.empty()) throw ConfigError("sweep: no values for " + key);
    std::vector<RunConfig> next;
    std::vector<std::vector<std::string>> next_values;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (const auto& v : vals) {
        auto cell = cells[c];
        apply_setting(cell, key, v, "--grid: ");
        next.push_back(std::move(cell));
        next_values.push_back(values[c]);
        next_values.back().push_back(v);
      }
    }
    cells = std::move(next);
    values = std::move(next_values);
  }
  const fs::path base = cfg.out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%03zu", i);
    cells[i].out = (base / name).string();
    cells[i].validate();
  }
  make_dir(base);

  std::string csv = "cell";
  for (const auto& [key, vals] : grid) csv += ',' + key;
  csv += ",status,slope,ci_lo,ci_hi\n";
  int status = kPass;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json summary;
    std::string cell_status;
    try {
      cell_status = run_impl(cells[i], log, summary) == kPass ? "ok" : "failed";
    } catch (const std::exception& e) {
      cell_status = std::string("error: ") + e.what();
      for (auto& ch : cell_status) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
    }
    if (cell_status != "ok") status = kFail;
    csv += fs::path(cells[i].out).filename().string();
    for (const auto& v : values[i]) csv += ',' + v;
    csv += ',' + cell_status;
    if (summary.contains("speed") && !summary["speed"].is_null()) {
      const auto& s = summary["speed"];
      csv += ',' + format_number(s["slope"].get<double>()) + ',' + format_number(s["ci"][0].get<double>()) + ',' +
             format_number(s["ci"][1].get<double>());
    } else {
      csv += ",,,";
    }
    csv += '\n';
  }
  write_file(base / "sweep.csv", csv);
  return status;
}

}  // namespace abspread::cli
