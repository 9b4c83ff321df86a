#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "abspread/lattice.hpp"
#include "json.hpp"

namespace abspread::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // simulation
  int d = 1;
  double D_A = 1.0;
  double D_B = 1.0;
  double mu_A = 1.0;
  std::vector<std::string> seeds;  // "x,y,..." each; empty: the origin
  double t_max = 50.0;
  double kappa = 4.0;
  double window_margin = 0.0;

  // harness
  std::size_t replicas = 10;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: available parallelism
  std::string out = "out";

  // epochs and observables
  double epoch_dt = 1.0;
  int epoch_geometric = 0;
  double half_region_slope = 0.5;
  double speed_window = 0.5;
  int bootstrap = 1000;

  // experiment selection
  bool front = true;
  bool shape = false;
  bool martingale = false;
  bool blocks = false;
  bool coupling = false;
  bool bounds = false;
  bool stationarity = false;

  std::vector<double> bound_times{0.5, 1.0, 2.0};
  std::size_t bound_replicas = 500;

  std::int64_t martingale_distance = 5;
  std::vector<double> martingale_times{1.0, 2.0, 5.0};
  std::size_t martingale_replicas = 1000;
  bool martingale_tracking = false;

  std::size_t coupling_pairs = 200;
  double coupling_t_max = 10.0;

  std::int64_t C0 = 2;
  double gamma0 = 1e-4;
  int r_max = 4;
  double C4 = 1.0;
  std::vector<double> blocks_mus{1.0, 5.0};
  std::size_t blocks_configs = 4;
  std::size_t blocks_paths = 50;
  double blocks_field_rate = 0.004;

  double stationarity_t = 10.0;
  std::int64_t stationarity_window = 50;
  double stationarity_k = 5.0;
  std::size_t stationarity_replicas = 50;

  int worker_threads() const;
  std::vector<Site> seed_sites() const;
  void validate() const;
};

/// Sets one key from its text value. `where` prefixes error messages.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where);

/// Applies "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Applies a "KEY=VALUE" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Every effective parameter, keyed like the config file.
nlohmann::json config_json(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace abspread::cli
