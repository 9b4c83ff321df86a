#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "abspread/record.hpp"
#include "config.hpp"

namespace abspread::cli {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2, kIo = 3 };

/// Columns: replica,t,n_infected_sites,n_B_particles,R,L,max_norm_B,n_A_in_half_region.
/// R and L are empty outside d = 1.
std::string timeseries_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_timeseries(const std::filesystem::path& path, int dim);

/// Shortest round-trip decimal.
std::string format_number(double x);

int cmd_run(const RunConfig& cfg, std::ostream& log);

/// checks: subset of {speed, bounds, stationarity, martingale}; empty runs
/// every check whose input is present.
int cmd_analyze(const std::filesystem::path& dir, const std::set<std::string>& checks, std::ostream& log);

int cmd_validate(const RunConfig& cfg, std::ostream& out);

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Parses "KEY=v1,v2,..".
std::pair<std::string, std::vector<std::string>> parse_grid_axis(const std::string& text);

int cmd_sweep(const RunConfig& cfg, const Grid& grid, std::ostream& log);

}  // namespace abspread::cli
