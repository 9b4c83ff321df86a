#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "abspread/lattice.hpp"
#include "abspread/record.hpp"
#include "abspread/rng.hpp"
#include "abspread/walk.hpp"

namespace abspread {

struct ParticleState {
  std::uint32_t id = 0;
  Site pos;
  PType type = PType::A;
  double next_jump = kNever;
  std::optional<double> switch_time;  // set once, at A -> B
  std::uint32_t clock_version = 0;
  CounterRng rng;
};

struct Cell {
  std::uint32_t n_a = 0;
  std::uint32_t n_b = 0;
  std::vector<std::uint32_t> ids;

  std::uint32_t total() const { return n_a + n_b; }
};

struct SimConfig {
  WalkParams params;
  std::vector<Site> b_seeds{Site(1)};
  double t_max = 50.0;
  double window_margin = 0.0;
  double kappa = 4.0;

  void validate() const;
  /// W = ceil(kappa (D_A + D_B + 1) t_max + window_margin).
  std::int64_t window_radius() const;
};

struct InitialParticle {
  std::uint32_t id = 0;
  Site pos;
  PType type = PType::A;
};

struct EventRecord {
  double time = 0.0;
  std::uint32_t mover = 0;
  Site from;
  Site to;
  PType mover_type_before = PType::A;
  std::uint32_t from_count_before = 0;  // particles at `from` just before the jump, mover included
  std::vector<std::uint32_t> converted;  // ids switched A -> B by this event
};

/// One replica of the interacting A/B system.
class SimState {
 public:
  /// Poisson field on C(W), seeds converted in place. Seeds get ids 0..n-1,
  /// field particles follow in scan order.
  static SimState init(const SimConfig& cfg, const RngStream& rng);
  /// Explicit initial configuration. Mixed sites are rejected.
  static SimState from_particles(const WalkParams& params, double t_max,
                                 std::vector<InitialParticle> initial, const RngStream& rng);

  double now() const { return now_; }
  double t_max() const { return t_max_; }
  const WalkParams& params() const { return params_; }
  const NeighborBasis& basis() const { return basis_; }
  std::int64_t window_radius() const { return window_radius_; }

  const std::vector<ParticleState>& particles() const { return particles_; }
  const ParticleState& particle(std::uint32_t id) const;
  bool has_particle(std::uint32_t id) const;

  const Cell* cell(const Site& x) const;
  std::uint32_t count_at(const Site& x) const;
  std::uint32_t count_b() const { return n_b_; }
  const std::unordered_map<Site, double, SiteHash>& first_visit() const { return first_visit_; }

  /// Time of the earliest pending jump, or kNever.
  double next_event_time();
  /// step_event: pops and applies the earliest jump.
  EventRecord step();
  /// Moves the clock forward without events (t must not pass a pending jump).
  void advance_clock(double t);

  /// Occupancy/particle-store agreement and the mixed-site exclusion. Throws
  /// std::logic_error on violation.
  void check_consistency() const;

 private:
  struct QueueEntry {
    double time;
    std::uint32_t id;
    std::uint32_t version;
    bool operator>(const QueueEntry& o) const {
      return time != o.time ? time > o.time : id > o.id;
    }
  };

  SimState() = default;
  void add_particle(std::uint32_t id, const Site& pos, PType type, const RngStream& rng);
  void schedule(ParticleState& p, double now);
  void convert(ParticleState& p, double t, Cell& cell);
  ParticleState& mut(std::uint32_t id);
  void drop_stale();

  WalkParams params_;
  NeighborBasis basis_;
  double now_ = 0.0;
  double t_max_ = 0.0;
  std::int64_t window_radius_ = 0;
  std::uint32_t n_b_ = 0;
  std::vector<ParticleState> particles_;
  std::vector<std::int32_t> index_of_;  // id -> slot in particles_, -1 if absent
  std::unordered_map<Site, Cell, SiteHash> occupancy_;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue_;
  std::unordered_map<Site, double, SiteHash> first_visit_;
};

inline EventRecord step_event(SimState& state) { return state.step(); }

using EventObserver = std::function<void(const EventRecord&, const SimState&)>;

/// Observables of `state` as an epoch sample at time t (state.now() <= t and
/// no pending event before t is assumed).
EpochSample sample_epoch(const SimState& state, double t, const SamplingPlan& plan);

/// Processes every event with time <= t, sampling at plan.epochs <= t.
ExperimentRecord run_until(SimState& state, double t, const SamplingPlan& plan,
                           const EventObserver& observer = {});

/// B~(t) = sites first visited by a B-particle at or before t, sorted.
std::vector<Site> infected_region(const SimState& state, double t);

/// Low/high systems driven by the same per-particle paths. Requires
/// D_A == D_B and containment of the initial states.
std::pair<ExperimentRecord, ExperimentRecord> coupled_run(
    const WalkParams& params, double t_max, const std::vector<InitialParticle>& low,
    const std::vector<InitialParticle>& high, const SamplingPlan& plan, const RngStream& rng);

/// Initial configuration of SimState::init, as explicit particles.
std::vector<InitialParticle> initial_particles(const SimConfig& cfg, const RngStream& rng);

/// True iff at every epoch every low particle exists in high at the same
/// position, and A-in-high implies A-in-low.
bool check_domination(const ExperimentRecord& low, const ExperimentRecord& high);

/// {time, particles:[{id,pos,type}], first_visit:[{site,time}]}, sorted.
nlohmann::json snapshot_json(const SimState& state);

}  // namespace abspread
