#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "abspread/lattice.hpp"
#include "abspread/sim.hpp"

namespace abspread {

/// Target of the drift: a fixed site x, or a particle phi whose current
/// position is used instead (tracking mode).
struct TrackedParticle {
  std::uint32_t id = 0;
};
using PathTarget = std::variant<Site, TrackedParticle>;

enum class PathEventKind : std::uint8_t { start, moved, handoff };

std::string to_string(PathEventKind k);

struct PathEvent {
  double time = 0.0;
  PathEventKind kind = PathEventKind::start;
  Site from;
  Site to;
  std::uint32_t rho_before = 0;
  std::uint32_t rho_after = 0;
};

/// Piece of the trajectory on which every martingale integrand is constant.
struct TraceSegment {
  double start = 0.0;
  Site lambda;
  Site target;                    // x, or phi's position
  std::uint32_t n_at_lambda = 0;  // particles at lambda (all of type B)
  double target_rate = 0.0;       // phi's jump rate; 0 for a fixed target
};

/// The distinguished path lambda(., x) and its carrier particle rho-hat.
///
/// Moves only when rho-hat attempts a jump. A lone carrier is always followed.
/// With company, lambda follows only a jump that strictly reduces the
/// Euclidean distance to the target; otherwise lambda stays and the carrier
/// role passes to the lowest-id particle left behind.
class DistinguishedPath {
 public:
  /// lambda(0) is the site of `carrier` (default: lowest-id B-particle);
  /// rho-hat(0) is the lowest-id particle there.
  static DistinguishedPath start(const SimState& state, PathTarget target,
                                 std::optional<std::uint32_t> carrier = std::nullopt);

  /// Applies one simulator event. Events not involving rho-hat (or phi) only
  /// refresh the occupancy trace.
  void advance(const EventRecord& ev, const SimState& state);

  const Site& lambda() const { return lambda_; }
  std::uint32_t rho_hat() const { return rho_; }
  bool tracking() const { return std::holds_alternative<TrackedParticle>(target_); }
  const PathTarget& target() const { return target_; }
  double start_time() const { return start_time_; }
  double frontier() const { return frontier_; }
  int dim() const { return lambda_.dim; }

  const std::vector<PathEvent>& events() const { return events_; }
  const std::vector<TraceSegment>& trace() const { return trace_; }
  /// Attempted jumps of rho-hat, plus phi's jumps in tracking mode.
  const std::vector<double>& sigma_events() const { return sigma_events_; }
  std::uint64_t handoffs() const { return handoffs_; }

 private:
  DistinguishedPath() = default;
  Site target_position(const SimState& state) const;
  double target_rate(const SimState& state) const;
  void refresh_trace(double t, const SimState& state);
  void check_carrier(const SimState& state) const;

  PathTarget target_;
  Site lambda_;
  std::uint32_t rho_ = 0;
  double start_time_ = 0.0;
  double frontier_ = 0.0;
  std::vector<PathEvent> events_;
  std::vector<TraceSegment> trace_;
  std::vector<double> sigma_events_;
  std::uint64_t handoffs_ = 0;
};

DistinguishedPath start_path(const SimState& state, PathTarget target,
                             std::optional<std::uint32_t> carrier = std::nullopt);
void advance_path(DistinguishedPath& path, const EventRecord& ev, const SimState& state);
void advance_path_tracking(DistinguishedPath& path, const EventRecord& ev, const SimState& state);

struct DriftTerms {
  double gamma_1 = 0.0;    // average change of the distance over all 2d offsets
  double gamma_ge2 = 0.0;  // same normalization, strictly negative changes only
};

DriftTerms drift_terms(const Site& lambda_pos, const Site& target_pos);

struct MartingaleSample {
  double t = 0.0;
  double value = 0.0;
};

struct IntegrandSample {
  double t = 0.0;
  bool i_1 = false;
  bool i_ge2 = false;
  double gamma_1 = 0.0;
  double gamma_ge2 = 0.0;
  double drift = 0.0;  // total integrand rate, rates included
};

struct MartingaleSeries {
  double m0 = 0.0;
  std::vector<MartingaleSample> samples;
  std::vector<IntegrandSample> integrand;
  std::optional<double> stopped_at;  // tracking mode: first meeting with phi
  double increment_bound = 0.0;
  double max_sigma_increment = 0.0;
  std::uint64_t increment_violations = 0;
  std::uint64_t sigma_intervals = 0;
};

/// Exact evaluation of the compensated distance
///   M(t) = |lambda(t) - target(t)| - int_0^t drift(u) du
/// over the piecewise-constant trace. `horizon` is the time up to which the
/// trace is complete (normally state.now()).
class MartingaleEvaluator {
 public:
  MartingaleEvaluator(const DistinguishedPath& path, double rate_b, double horizon);

  double value(double t) const;       // right-continuous value
  double left_value(double t) const;  // M(t-)
  double horizon() const { return horizon_; }
  std::optional<double> stop_time() const { return stop_; }
  const std::vector<double>& drift() const { return drift_; }

 private:
  std::size_t segment_at(double t, bool left) const;
  double integral_to(double t) const;
  double raw(double t, bool left) const;

  const DistinguishedPath* path_;
  double horizon_;
  std::vector<double> drift_;     // per segment
  std::vector<double> cum_;       // integral up to segment start
  std::vector<double> distance_;  // per segment
  std::optional<double> stop_;
};

/// M at the sample times plus the increment check between consecutive
/// sigma-points (attempted jumps, phi jumps, or one time unit, whichever
/// comes first).
MartingaleSeries martingale_series(const DistinguishedPath& path, double rate_b,
                                   std::span<const double> sample_times, double horizon);

struct GeometryReport {
  int d = 1;
  std::int64_t radius = 0;
  std::uint64_t points = 0;
  std::uint64_t violations_unconditional = 0;  // Sigma*-average > -1/(4d) at lambda != x
  std::uint64_t violations_k8 = 0;             // Gamma_1 > K8 / (|v| + 1)
  std::uint64_t violations_k8_k9 = 0;          // Gamma_ge2 > -1/(4d) + K8 / (|v| + 1)
  std::uint64_t violations_unit = 0;           // |lhs| > 1
  double k8 = 0.0;
  double k8_floor = 0.0;             // max of Gamma_1 * (|v| + 1)
  double max_gamma_ge2_nonzero = 0.0;  // largest Sigma*-average over lambda != x
};

/// Exhaustive check of the drift-geometry inequalities over |lambda - x|_inf <= radius.
GeometryReport geometry_bounds_check(int d, std::int64_t radius, double k8);

}  // namespace abspread
