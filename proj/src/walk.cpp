#include "abspread/walk.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace abspread {

void WalkParams::validate() const {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("d must be in [1, 3]");
  if (!(rate_A >= 0.0)) throw std::invalid_argument("rate_A must be >= 0");
  if (!(rate_B >= 0.0)) throw std::invalid_argument("rate_B must be >= 0");
  if (!(mu_A > 0.0)) throw std::invalid_argument("mu_A must be > 0");
}

double sample_jump_time(double rate, double now, CounterRng& rng) {
  if (rate < 0.0) throw std::invalid_argument("sample_jump_time: negative rate");
  if (rate == 0.0) return kNever;
  return now + rng.exp1() / rate;
}

Site sample_jump_target(const Site& x, const NeighborBasis& basis, CounterRng& rng) {
  return x + basis[static_cast<std::size_t>(rng.below(basis.size()))];
}

std::unordered_map<Site, std::uint32_t, SiteHash> FreeField::occupancy() const {
  std::unordered_map<Site, std::uint32_t, SiteHash> occ;
  occ.reserve(particles.size());
  for (const auto& p : particles) ++occ[p.pos];
  return occ;
}

std::uint32_t FreeField::count_at(const Site& x) const {
  std::uint32_t n = 0;
  for (const auto& p : particles) n += (p.pos == x);
  return n;
}

std::vector<std::pair<Site, std::uint32_t>> sample_poisson_counts(const Box& window, double mu,
                                                                  const RngStream& rng) {
  if (window.empty()) throw std::invalid_argument("sample_initial_field: empty window");
  if (!(mu > 0.0)) throw std::invalid_argument("sample_initial_field: mu must be > 0");
  auto gen = rng.substream(Domain::field);
  std::poisson_distribution<std::uint32_t> poisson(mu);
  std::vector<std::pair<Site, std::uint32_t>> out;
  window.for_each([&](const Site& x) {
    const auto n = poisson(gen);
    if (n > 0) out.emplace_back(x, n);
  });
  return out;
}

FreeField sample_initial_field(const Box& window, const WalkParams& params, const RngStream& rng,
                               double start_time, std::uint32_t first_id) {
  params.validate();
  if (window.dim() != params.d) throw std::invalid_argument("sample_initial_field: window dimension mismatch");
  FreeField field;
  field.dim = params.d;
  field.rate = params.rate_A;
  field.mu = params.mu_A;
  field.start_time = start_time;
  field.time = start_time;
  field.sampled = window;
  std::uint32_t id = first_id;
  for (const auto& [site, n] : sample_poisson_counts(window, params.mu_A, rng)) {
    for (std::uint32_t j = 0; j < n; ++j) {
      FreeParticle p;
      p.id = id++;
      p.pos = site;
      p.origin = site;
      p.rng = rng.substream(Domain::walk, p.id);
      p.next_jump = sample_jump_time(field.rate, start_time, p.rng);
      field.particles.push_back(std::move(p));
    }
  }
  return field;
}

void evolve_free_system(FreeField& field, double t_target) {
  if (t_target < field.time) {
    throw std::invalid_argument("evolve_free_system: target time " + std::to_string(t_target) +
                                " precedes field time " + std::to_string(field.time));
  }
  const auto basis = neighbor_offsets(field.dim);
  for (auto& p : field.particles) {
    while (p.next_jump <= t_target) {
      p.pos = sample_jump_target(p.pos, basis, p.rng);
      p.next_jump = sample_jump_time(field.rate, p.next_jump, p.rng);
    }
  }
  field.time = t_target;
}

}  // namespace abspread
