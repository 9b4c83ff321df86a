#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abspread/lattice.hpp"
#include "abspread/record.hpp"
#include "abspread/sim.hpp"
#include "abspread/walk.hpp"

namespace abspread {

struct FrontExtremes {
  std::int64_t R = 0;
  std::int64_t L = 0;
};

/// R = max B position, L = -min B position. d = 1 only.
FrontExtremes front_extremes(const SimState& state);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;  // 0 with two points or an exact fit
};

/// Ordinary least squares of y on t.
LineFit ols_fit(std::span<const double> t, std::span<const double> y);

/// R(t) in d = 1, the max-norm radius of the B positions otherwise.
double front_statistic(const EpochSample& s, int d);

struct SpeedEstimate {
  int dim = 1;
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 95%
  double t_lo = 0.0;        // fit window
  double t_hi = 0.0;
  std::size_t n_epochs = 0;
  std::size_t n_replicas = 0;

  double ci_lo() const { return slope - half_width; }
  double ci_hi() const { return slope + half_width; }
};

struct BootstrapSpec {
  int resamples = 1000;
  std::uint64_t seed = 0;
};

/// Fit of the replica-mean front statistic over the last `window_fraction`
/// of the epoch grid. With several replicas the half-width comes from a
/// percentile bootstrap over replicas; a single replica falls back to
/// 1.96 times the OLS standard error.
SpeedEstimate speed_estimate(const std::vector<ExperimentRecord>& replicas, double window_fraction,
                             const BootstrapSpec& boot = {});
SpeedEstimate speed_estimate(const ExperimentRecord& record, double window_fraction);
/// Same fit over the epochs with t_lo <= t <= t_hi.
SpeedEstimate speed_estimate_between(const std::vector<ExperimentRecord>& replicas, double t_lo, double t_hi,
                                     const BootstrapSpec& boot = {});

/// N_B exp((D_A + D_B) mu_A t).
double genealogical_bound(const WalkParams& params, double n_b, double t);

struct BoundCheck {
  double t = 0.0;
  std::size_t n = 0;
  double mean = 0.0;     // B count at t
  double mean_n0 = 0.0;  // B count at time 0, after the seed sites convert
  double std_err = 0.0;  // of the paired difference N_B(t) - N_B(0) e^{...}
  double bound = 0.0;    // genealogical_bound(params, mean_n0, t)
  bool pass = false;
};

/// Mean B count at epoch t against the genealogical bound started from each
/// replica's own time-0 B count. Passes iff mean + 3 stderr <= bound, the
/// stderr taken over the paired differences. Needs at least 100 replicas
/// sampled at 0 and at t.
BoundCheck check_b_count_bound(const std::vector<ExperimentRecord>& replicas, const WalkParams& params, double t);

/// Sites in C(radius) holding at least one of the given positions.
std::uint64_t occupied_sites_in_cube(const std::vector<Site>& positions, double radius);

/// Positions of the A particles, sorted.
std::vector<Site> a_positions(const SimState& state);

/// Sites in C(slope t / 2) occupied by an A particle. The state must sit at
/// time t and have D_A == D_B; the calibration must match its dimension and
/// have a positive slope.
std::uint64_t half_region_check(const SimState& state, const SpeedEstimate& speed, double t);

struct ChiSquareBin {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;  // inclusive; UINT32_MAX for the open tail
  std::uint64_t observed = 0;
  double expected = 0.0;
};

struct StationarityResult {
  double statistic = 0.0;
  int dof = 0;
  double p = 0.0;
  std::uint64_t n_sites = 0;
  double margin = 0.0;
  std::vector<ChiSquareBin> bins;
  std::vector<std::uint64_t> histogram;  // sites holding c particles, by c
};

/// Margin needed between the window and the edge of the sampled region.
double stationarity_margin(double rate, double elapsed, double k);

/// Chi-square fit of the per-site counts in `window` against Poisson(mu),
/// pooled over fields. Bins merge until each expects at least 5 sites.
StationarityResult poisson_stationarity_test(std::span<const FreeField> fields, double t, const Box& window,
                                             double k = 5.0);
StationarityResult poisson_stationarity_test(const FreeField& field, double t, const Box& window,
                                             double k = 5.0);

/// Same test from a histogram: hist[c] sites held c particles.
StationarityResult poisson_histogram_test(const std::vector<std::uint64_t>& hist, double mu);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, int dof);

using ScaledPoint = std::vector<double>;

/// {x / t : x in B~(t)}, sorted like the infected region.
std::vector<ScaledPoint> shape_snapshot(const SimState& state, double t);

/// Euclidean Hausdorff distance; both sets nonempty.
double hausdorff_distance(const std::vector<ScaledPoint>& a, const std::vector<ScaledPoint>& b);

}  // namespace abspread
