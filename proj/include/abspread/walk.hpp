#pragma once

#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "abspread/lattice.hpp"
#include "abspread/rng.hpp"

namespace abspread {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct WalkParams {
  int d = 1;
  double rate_A = 1.0;  // D_A
  double rate_B = 1.0;  // D_B
  double mu_A = 1.0;    // mean A-particles per site

  void validate() const;
};

/// now + Exp(rate), or kNever when rate == 0.
double sample_jump_time(double rate, double now, CounterRng& rng);

/// x + e with e uniform over the 2d offsets.
Site sample_jump_target(const Site& x, const NeighborBasis& basis, CounterRng& rng);

struct FreeParticle {
  std::uint32_t id = 0;
  Site pos;
  Site origin;  // position at field.start_time
  double next_jump = kNever;
  CounterRng rng;
};

/// The free system: the same walkers with the interaction switched off. Every
/// particle walks at one rate on the unbounded lattice.
struct FreeField {
  int dim = 1;
  double rate = 1.0;
  double mu = 1.0;
  double start_time = 0.0;
  double time = 0.0;
  Box sampled;  // window where the initial Poisson field was drawn
  std::vector<FreeParticle> particles;

  std::size_t size() const { return particles.size(); }
  /// N*(x, time) for every occupied site.
  std::unordered_map<Site, std::uint32_t, SiteHash> occupancy() const;
  std::uint32_t count_at(const Site& x) const;
};

/// Per-site Poisson(mu) counts over `window` in scan order. Ids are assigned in
/// scan order, then per-site index, starting at `first_id`.
std::vector<std::pair<Site, std::uint32_t>> sample_poisson_counts(const Box& window, double mu,
                                                                  const RngStream& rng);

/// Poisson field at time `start_time` on `window`; clocks run at rate_A.
FreeField sample_initial_field(const Box& window, const WalkParams& params, const RngStream& rng,
                               double start_time = 0.0, std::uint32_t first_id = 0);

/// Advances every particle independently to t_target. Composes: evolving to
/// t1 then t2 equals evolving to t2 directly.
void evolve_free_system(FreeField& field, double t_target);

}  // namespace abspread
