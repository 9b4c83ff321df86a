#include "abspread/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace abspread {

void SimConfig::validate() const {
  params.validate();
  if (b_seeds.empty()) throw std::invalid_argument("at least one B seed is required");
  for (const auto& s : b_seeds) {
    if (s.dim != params.d) throw std::invalid_argument("seed " + s.to_string() + " has wrong dimension");
  }
  if (!(t_max >= 0.0)) throw std::invalid_argument("t_max must be >= 0");
  if (!(window_margin >= 0.0)) throw std::invalid_argument("window_margin must be >= 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
}

std::int64_t SimConfig::window_radius() const {
  return static_cast<std::int64_t>(
      std::ceil(kappa * (params.rate_A + params.rate_B + 1.0) * t_max + window_margin));
}

std::vector<InitialParticle> initial_particles(const SimConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const auto radius = cfg.window_radius();
  const Box window = Box::cube(cfg.params.d, radius);
  for (const auto& s : cfg.b_seeds) {
    if (!window.contains(s)) {
      throw std::invalid_argument("seed " + s.to_string() + " lies outside the sampling window C(" +
                                  std::to_string(radius) + ")");
    }
  }
  std::vector<InitialParticle> out;
  std::uint32_t id = 0;
  for (const auto& s : cfg.b_seeds) out.push_back({id++, s, PType::B});
  const auto is_seed = [&](const Site& x) {
    return std::find(cfg.b_seeds.begin(), cfg.b_seeds.end(), x) != cfg.b_seeds.end();
  };
  for (const auto& [site, n] : sample_poisson_counts(window, cfg.params.mu_A, rng)) {
    const PType t = is_seed(site) ? PType::B : PType::A;
    for (std::uint32_t j = 0; j < n; ++j) out.push_back({id++, site, t});
  }
  return out;
}

SimState SimState::init(const SimConfig& cfg, const RngStream& rng) {
  SimState s = from_particles(cfg.params, cfg.t_max, initial_particles(cfg, rng), rng);
  s.window_radius_ = cfg.window_radius();
  return s;
}

SimState SimState::from_particles(const WalkParams& params, double t_max,
                                  std::vector<InitialParticle> initial, const RngStream& rng) {
  params.validate();
  SimState s;
  s.params_ = params;
  s.basis_ = neighbor_offsets(params.d);
  s.t_max_ = t_max;
  std::sort(initial.begin(), initial.end(),
            [](const InitialParticle& a, const InitialParticle& b) { return a.id < b.id; });
  s.particles_.reserve(initial.size());
  for (const auto& p : initial) {
    if (p.pos.dim != params.d) throw std::invalid_argument("particle position has wrong dimension");
    if (s.has_particle(p.id)) throw std::invalid_argument("duplicate particle id " + std::to_string(p.id));
    s.add_particle(p.id, p.pos, p.type, rng);
  }
  for (const auto& [site, cell] : s.occupancy_) {
    if (cell.n_a > 0 && cell.n_b > 0) {
      throw std::invalid_argument("initial configuration has A and B particles at " + site.to_string());
    }
    if (cell.n_b > 0) s.first_visit_.emplace(site, 0.0);
  }
  for (auto& p : s.particles_) s.schedule(p, 0.0);
  return s;
}

void SimState::add_particle(std::uint32_t id, const Site& pos, PType type, const RngStream& rng) {
  if (index_of_.size() <= id) index_of_.resize(static_cast<std::size_t>(id) + 1, -1);
  index_of_[id] = static_cast<std::int32_t>(particles_.size());
  ParticleState p;
  p.id = id;
  p.pos = pos;
  p.type = type;
  if (type == PType::B) {
    p.switch_time = 0.0;
    ++n_b_;
  }
  p.rng = rng.substream(Domain::walk, id);
  Cell& c = occupancy_[pos];
  c.ids.push_back(id);
  (type == PType::A ? c.n_a : c.n_b)++;
  particles_.push_back(std::move(p));
}

bool SimState::has_particle(std::uint32_t id) const {
  return id < index_of_.size() && index_of_[id] >= 0;
}

const ParticleState& SimState::particle(std::uint32_t id) const {
  if (!has_particle(id)) throw std::out_of_range("no particle with id " + std::to_string(id));
  return particles_[static_cast<std::size_t>(index_of_[id])];
}

ParticleState& SimState::mut(std::uint32_t id) {
  return particles_[static_cast<std::size_t>(index_of_[id])];
}

const Cell* SimState::cell(const Site& x) const {
  auto it = occupancy_.find(x);
  return it == occupancy_.end() ? nullptr : &it->second;
}

std::uint32_t SimState::count_at(const Site& x) const {
  const Cell* c = cell(x);
  return c ? c->total() : 0;
}

void SimState::schedule(ParticleState& p, double now) {
  const double rate = p.type == PType::A ? params_.rate_A : params_.rate_B;
  p.next_jump = sample_jump_time(rate, now, p.rng);
  ++p.clock_version;
  if (p.next_jump != kNever) queue_.push({p.next_jump, p.id, p.clock_version});
}

void SimState::convert(ParticleState& p, double t, Cell& cell) {
  p.type = PType::B;
  p.switch_time = t;
  --cell.n_a;
  ++cell.n_b;
  ++n_b_;
}

void SimState::drop_stale() {
  while (!queue_.empty()) {
    const auto& top = queue_.top();
    if (mut(top.id).clock_version == top.version) return;
    queue_.pop();
  }
}

double SimState::next_event_time() {
  drop_stale();
  return queue_.empty() ? kNever : queue_.top().time;
}

void SimState::advance_clock(double t) {
  if (t < now_) throw std::invalid_argument("advance_clock: time moves backwards");
  if (next_event_time() < t) throw std::logic_error("advance_clock: would skip a pending event");
  now_ = t;
}

EventRecord SimState::step() {
  drop_stale();
  if (queue_.empty()) throw std::logic_error("step_event: no pending events");
  const QueueEntry top = queue_.top();
  if (top.time > t_max_) throw std::logic_error("step_event: next event lies beyond t_max");
  queue_.pop();

  ParticleState& p = mut(top.id);
  EventRecord ev;
  ev.time = top.time;
  ev.mover = p.id;
  ev.from = p.pos;
  ev.mover_type_before = p.type;
  {
    Cell& src = occupancy_[p.pos];
    ev.from_count_before = src.total();
    auto it = std::find(src.ids.begin(), src.ids.end(), p.id);
    *it = src.ids.back();
    src.ids.pop_back();
    (p.type == PType::A ? src.n_a : src.n_b)--;
  }
  p.pos = sample_jump_target(p.pos, basis_, p.rng);
  ev.to = p.pos;
  now_ = top.time;

  Cell& dst = occupancy_[p.pos];
  dst.ids.push_back(p.id);
  (p.type == PType::A ? dst.n_a : dst.n_b)++;

  if (dst.n_a > 0 && dst.n_b > 0) {
    for (auto id : dst.ids) {
      if (mut(id).type == PType::A) ev.converted.push_back(id);
    }
    std::sort(ev.converted.begin(), ev.converted.end());
    for (auto id : ev.converted) {
      ParticleState& q = mut(id);
      convert(q, now_, dst);
      // Memorylessness: a fresh rate-D_B clock from the switch instant.
      if (id != p.id && params_.rate_A != params_.rate_B) schedule(q, now_);
    }
  }
  if (dst.n_b > 0) first_visit_.try_emplace(ev.to, now_);
  schedule(p, now_);
  return ev;
}

void SimState::check_consistency() const {
  std::unordered_map<Site, std::pair<std::uint32_t, std::uint32_t>, SiteHash> counts;
  std::uint32_t nb = 0;
  for (const auto& p : particles_) {
    auto& c = counts[p.pos];
    if (p.type == PType::A) {
      ++c.first;
      if (p.switch_time) throw std::logic_error("A-particle " + std::to_string(p.id) + " has a switch time");
    } else {
      ++c.second;
      ++nb;
      if (!p.switch_time) throw std::logic_error("B-particle " + std::to_string(p.id) + " lacks a switch time");
    }
  }
  if (nb != n_b_) throw std::logic_error("B count out of sync");
  for (const auto& [site, cell] : occupancy_) {
    auto it = counts.find(site);
    const auto expect = it == counts.end() ? std::pair<std::uint32_t, std::uint32_t>{0, 0} : it->second;
    if (cell.n_a != expect.first || cell.n_b != expect.second || cell.ids.size() != cell.total()) {
      throw std::logic_error("occupancy out of sync at " + site.to_string());
    }
    if (cell.n_a > 0 && cell.n_b > 0) throw std::logic_error("mixed site at " + site.to_string());
  }
  for (const auto& [site, c] : counts) {
    if (!occupancy_.count(site)) throw std::logic_error("particle at unindexed site " + site.to_string());
    if (c.second > 0 && !first_visit_.count(site)) {
      throw std::logic_error("B-occupied site " + site.to_string() + " missing from first_visit");
    }
  }
  for (const auto& [site, t] : first_visit_) {
    if (t > now_) throw std::logic_error("first_visit in the future at " + site.to_string());
  }
}

EpochSample sample_epoch(const SimState& state, double t, const SamplingPlan& plan) {
  EpochSample s;
  s.t = t;
  for (const auto& [site, tv] : state.first_visit()) s.n_infected_sites += (tv <= t);
  const Cube half{plan.half_region_slope * t / 2.0};
  std::int64_t right = 0, left = 0;
  bool any_b = false;
  for (const auto& p : state.particles()) {
    if (p.type == PType::B) {
      ++s.n_b;
      s.max_norm_b = std::max(s.max_norm_b, norm_inf(p.pos));
      if (!any_b) {
        right = left = p.pos[0];
        any_b = true;
      } else {
        right = std::max(right, p.pos[0]);
        left = std::min(left, p.pos[0]);
      }
    } else if (cube_contains(half, p.pos)) {
      ++s.n_a_half_region;
    }
    if (plan.keep_particles) s.particles.push_back({p.id, p.pos, p.type});
  }
  if (state.params().d == 1 && any_b) {
    s.front_right = right;
    s.front_left = -left;
  }
  return s;
}

ExperimentRecord run_until(SimState& state, double t, const SamplingPlan& plan,
                           const EventObserver& observer) {
  if (t > state.t_max()) throw std::invalid_argument("run_until: t exceeds t_max");
  if (t < state.now()) throw std::invalid_argument("run_until: t precedes the current time");
  ExperimentRecord rec;
  rec.dim = state.params().d;
  const auto drain = [&](double until) {
    while (state.next_event_time() <= until) {
      const auto ev = state.step();
      if (observer) observer(ev, state);
    }
    state.advance_clock(until);
  };
  for (double e : plan.epochs) {
    if (e > t) break;
    if (e < state.now()) throw std::invalid_argument("run_until: epoch precedes the current time");
    drain(e);
    rec.samples.push_back(sample_epoch(state, e, plan));
  }
  drain(t);
  return rec;
}

std::vector<Site> infected_region(const SimState& state, double t) {
  if (t > state.now()) throw std::invalid_argument("infected_region: t is in the future");
  std::vector<Site> out;
  for (const auto& [site, tv] : state.first_visit()) {
    if (tv <= t) out.push_back(site);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<ExperimentRecord, ExperimentRecord> coupled_run(
    const WalkParams& params, double t_max, const std::vector<InitialParticle>& low,
    const std::vector<InitialParticle>& high, const SamplingPlan& plan, const RngStream& rng) {
  if (params.rate_A != params.rate_B) throw std::invalid_argument("coupled_run requires D_A == D_B");
  std::unordered_map<std::uint32_t, const InitialParticle*> by_id;
  for (const auto& p : high) by_id.emplace(p.id, &p);
  for (const auto& p : low) {
    auto it = by_id.find(p.id);
    if (it == by_id.end() || it->second->pos != p.pos) {
      throw std::invalid_argument("coupled_run: low particle " + std::to_string(p.id) +
                                  " is not present in the high state at the same site");
    }
    if (it->second->type == PType::A && p.type != PType::A) {
      throw std::invalid_argument("coupled_run: particle " + std::to_string(p.id) +
                                  " is A in the high state but B in the low state");
    }
  }
  SamplingPlan keep = plan;
  keep.keep_particles = true;
  SimState s_low = SimState::from_particles(params, t_max, low, rng);
  SimState s_high = SimState::from_particles(params, t_max, high, rng);
  return {run_until(s_low, t_max, keep), run_until(s_high, t_max, keep)};
}

bool check_domination(const ExperimentRecord& low, const ExperimentRecord& high) {
  if (low.samples.size() != high.samples.size()) throw std::invalid_argument("check_domination: epoch count mismatch");
  for (std::size_t e = 0; e < low.samples.size(); ++e) {
    const auto& lo = low.samples[e];
    const auto& hi = high.samples[e];
    if (lo.t != hi.t) throw std::invalid_argument("check_domination: epoch times differ");
    std::size_t j = 0;
    for (const auto& p : lo.particles) {
      while (j < hi.particles.size() && hi.particles[j].id < p.id) ++j;
      if (j == hi.particles.size() || hi.particles[j].id != p.id) return false;
      const auto& q = hi.particles[j];
      if (q.pos != p.pos) return false;
      if (q.type == PType::A && p.type != PType::A) return false;
    }
  }
  return true;
}

nlohmann::json snapshot_json(const SimState& state) {
  using nlohmann::json;
  const auto coords = [](const Site& s) {
    json a = json::array();
    for (int i = 0; i < s.dim; ++i) a.push_back(s[i]);
    return a;
  };
  json particles = json::array();
  for (const auto& p : state.particles()) {
    particles.push_back({{"id", p.id}, {"pos", coords(p.pos)}, {"type", std::string(1, type_char(p.type))}});
  }
  std::vector<std::pair<Site, double>> fv(state.first_visit().begin(), state.first_visit().end());
  std::sort(fv.begin(), fv.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  json visits = json::array();
  for (const auto& [site, t] : fv) visits.push_back({{"site", coords(site)}, {"time", t}});
  return {{"time", state.now()}, {"particles", particles}, {"first_visit", visits}};
}

}  // namespace abspread
