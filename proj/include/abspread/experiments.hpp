#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abspread/blocks.hpp"
#include "abspread/lattice.hpp"
#include "abspread/record.hpp"
#include "abspread/sim.hpp"
#include "abspread/stats.hpp"

namespace abspread {

/// Hardware concurrency, at least 1.
int default_threads();

/// Calls f(i) for every i in [0, n) on up to `threads` workers. Results must
/// be written by index. The first exception by index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

/// Linear grid 0, dt, 2dt, ... up to t_max (t_max always included), plus
/// n_geometric early points dt/2, dt/4, ...
std::vector<double> epoch_grid(double t_max, double dt, int n_geometric = 0);

struct ReplicaResult {
  ExperimentRecord record;
  std::vector<Site> final_a;  // A positions at t_max, when requested
  std::vector<std::string> invariant_failures;
};

struct ReplicaOptions {
  std::string fingerprint;
  bool keep_final_a = false;
  int threads = 1;
};

/// Replica i runs on RngStream{seed, i}. Each record is checked for the
/// exact per-sample invariants (monotone infected count, B positions inside
/// the front extremes, store consistency).
std::vector<ReplicaResult> run_replicas(const SimConfig& cfg, const SamplingPlan& plan, std::uint64_t seed,
                                        std::size_t n, const ReplicaOptions& opt = {});

// Martingale experiment.

struct MartingaleSpec {
  WalkParams params{1, 1.0, 1.0, 1.0};
  std::int64_t distance = 5;  // target at distance * e_1
  double kappa = 0.6;         // window factor for the initial field
  std::vector<double> times{1.0, 2.0, 5.0};
  std::size_t replicas = 10000;
  bool tracking = false;  // follow an A particle started at the target
  std::uint64_t seed = 1;
  int threads = 1;
};

struct MartingaleStat {
  double t = 0.0;
  std::size_t n = 0;
  double mean = 0.0;  // of M(t) - M(0)
  double std_err = 0.0;
  bool pass = false;  // |mean| <= 3 std_err
};

struct MartingaleRun {
  std::vector<double> times;
  std::vector<std::vector<double>> increments;  // [replica][time] M(t) - M(0)
  std::vector<double> m0;
  std::uint64_t increment_violations = 0;
  std::uint64_t sigma_intervals = 0;
  double max_increment = 0.0;
  double increment_bound = 0.0;
  std::uint64_t stopped = 0;  // tracking runs that met phi
};

MartingaleRun run_martingale(const MartingaleSpec& spec);

/// Flatness test per sample time.
std::vector<MartingaleStat> martingale_test(const std::vector<double>& times,
                                            const std::vector<std::vector<double>>& increments);

// Coupling experiment.

enum class Perturbation : std::uint8_t { remove_site, add_b, add_particle };
std::string to_string(Perturbation p);

struct CouplingSpec {
  WalkParams params{1, 1.0, 1.0, 1.0};
  double t_max = 10.0;
  double kappa = 1.0;
  std::size_t pairs = 200;
  std::vector<double> epochs{0.0, 2.5, 5.0, 7.5, 10.0};
  std::uint64_t seed = 1;
  int threads = 1;
};

struct CouplingPair {
  Perturbation kind = Perturbation::remove_site;
  Site site;
  bool dominated = false;
};

struct CouplingRun {
  std::vector<CouplingPair> pairs;
  std::size_t dominated = 0;
};

/// Low and high systems differing at one site, driven by shared paths.
CouplingRun run_coupling(const CouplingSpec& spec);

// Genealogical bound experiment.

struct BoundSpec {
  WalkParams params{1, 1.0, 1.0, 1.0};
  std::vector<double> times{0.5, 1.0, 2.0};
  std::size_t replicas = 500;
  double kappa = 4.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Single-seed replicas sampled at 0 and at spec.times.
std::vector<ExperimentRecord> bound_records(const BoundSpec& spec);
std::vector<BoundCheck> run_bound_checks(const BoundSpec& spec);

// Stationarity experiment.

struct StationaritySpec {
  WalkParams params{1, 1.0, 1.0, 1.0};
  double t = 10.0;
  std::int64_t window = 50;  // test window C(window)
  double k = 5.0;
  std::size_t replicas = 50;
  std::uint64_t seed = 1;
};

/// Free fields sampled on C(window + margin), evolved to t and pooled.
StationarityResult run_stationarity(const StationaritySpec& spec);

// Multiscale experiment: one (r = 2) parent block and all its r = 1
// children, classified on a free field started at the parent's pedestal.

struct MultiscaleSpec {
  int d = 1;
  std::int64_t C0 = 2;
  double gamma0 = 1e-4;
  std::vector<double> mus{1.0, 5.0};  // cycled over configurations
  std::size_t configs = 100;
  std::size_t paths = 50;  // walk paths per configuration
  double field_rate = 0.004;
  double path_rate = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct MultiscaleConfigResult {
  double mu = 0.0;
  std::size_t blocks = 0;
  std::size_t bad_r1 = 0;
  std::size_t inferior_r1 = 0;
  bool parent_bad = false;
  std::uint64_t w_checks = 0;
  std::uint64_t w_exceeds_u = 0;
  std::size_t bad_not_inferior = 0;
  std::size_t good_with_bad_pedestal = 0;
  std::size_t pedestal_mismatch = 0;  // sweep vs independent pedestal scan
  std::size_t recursion_checks = 0;
  std::size_t recursion_failures = 0;
  std::uint64_t max_phi_r = 0;
  bool inferior_child_under_good_pedestal = false;
  std::vector<BlockLabel> labels;  // kept for the first configuration only
};

struct MultiscaleRun {
  std::vector<MultiscaleConfigResult> configs;
  std::uint64_t w_checks = 0;
  std::uint64_t w_exceeds_u = 0;
  std::size_t blocks = 0;
  std::size_t bad_not_inferior = 0;
  std::size_t good_with_bad_pedestal = 0;
  std::size_t pedestal_mismatch = 0;
  std::size_t recursion_checks = 0;
  std::size_t recursion_failures = 0;

  bool all_exact() const {
    return w_exceeds_u == 0 && bad_not_inferior == 0 && good_with_bad_pedestal == 0 && pedestal_mismatch == 0 &&
           recursion_failures == 0;
  }
};

/// Step path of a rate-`rate` walk on [t0, t1) started at x0.
SpaceTimePath sample_walk_path(const Site& x0, double t0, double t1, double rate, CounterRng& rng);

MultiscaleRun run_multiscale(const MultiscaleSpec& spec);

}  // namespace abspread
