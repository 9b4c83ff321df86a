#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "abspread/sim.hpp"

using namespace abspread;

namespace {

SimConfig config_1d(double mu, double t_max) {
  SimConfig cfg;
  cfg.params = WalkParams{1, 1.0, 1.0, mu};
  cfg.b_seeds = {Site(1, {0})};
  cfg.t_max = t_max;
  return cfg;
}

std::vector<InitialParticle> line(std::initializer_list<std::pair<std::int64_t, PType>> ps) {
  std::vector<InitialParticle> out;
  std::uint32_t id = 0;
  for (auto [x, t] : ps) out.push_back({id++, Site(1, {x}), t});
  return out;
}

// First stream id whose first event moves `mover` to `target`.
SimState find_first_move(const WalkParams& params, const std::vector<InitialParticle>& init,
                         std::uint32_t mover, std::int64_t target) {
  for (std::uint32_t s = 0; s < 1000; ++s) {
    auto state = SimState::from_particles(params, 100.0, init, RngStream{77, s});
    auto probe = state;
    auto ev = probe.step();
    if (ev.mover == mover && ev.to[0] == target) return state;
  }
  FAIL("no stream found");
  return SimState::from_particles(params, 100.0, init, RngStream{});
}

}  // namespace

TEST_CASE("init converts residents at seeded sites") {
  auto cfg = config_1d(1.0, 5.0);
  const RngStream rng{21, 0};
  const auto counts = sample_poisson_counts(Box::cube(1, cfg.window_radius()), 1.0, rng);
  auto two = std::find_if(counts.begin(), counts.end(), [](const auto& c) { return c.second == 2; });
  REQUIRE(two != counts.end());
  cfg.b_seeds = {two->first};
  auto state = SimState::init(cfg, rng);
  const Cell* c = state.cell(two->first);
  REQUIRE(c != nullptr);
  CHECK(c->n_b == 3);
  CHECK(c->n_a == 0);
  CHECK(state.first_visit().at(two->first) == 0.0);
  for (auto id : c->ids) CHECK(*state.particle(id).switch_time == 0.0);
  state.check_consistency();

  // empty site
  for (std::int64_t x = -10; x <= 10; ++x) {
    const Site s(1, {x});
    if (std::none_of(counts.begin(), counts.end(), [&](const auto& q) { return q.first == s; })) {
      cfg.b_seeds = {s};
      auto st = SimState::init(cfg, rng);
      CHECK(st.count_at(s) == 1);
      CHECK(st.cell(s)->n_b == 1);
      break;
    }
  }
}

TEST_CASE("init errors and the near-empty limit") {
  auto cfg = config_1d(1e-9, 10.0);
  cfg.b_seeds.clear();
  CHECK_THROWS_AS(SimState::init(cfg, RngStream{}), std::invalid_argument);
  cfg.b_seeds = {Site(1, {1000})};
  CHECK_THROWS_AS(SimState::init(cfg, RngStream{}), std::invalid_argument);
  cfg.b_seeds = {Site(1, {0}), Site(1, {0}), Site(1, {3})};
  auto st = SimState::init(cfg, RngStream{4, 4});
  CHECK(st.particles().size() == 3);
  CHECK(st.count_at(Site(1, {0})) == 2);
  CHECK(st.particle(0).type == PType::B);
}

TEST_CASE("B jumping onto A's converts all of them") {
  WalkParams params{1, 0.0, 1.0, 1.0};
  auto init = line({{0, PType::B}, {1, PType::A}, {1, PType::A}, {1, PType::A}});
  auto state = find_first_move(params, init, 0, 1);
  CHECK(state.particle(1).next_jump == kNever);
  auto ev = state.step();
  CHECK(ev.mover_type_before == PType::B);
  CHECK(ev.converted == std::vector<std::uint32_t>{1, 2, 3});
  CHECK(state.cell(Site(1, {1}))->n_b == 4);
  for (std::uint32_t id : {1u, 2u, 3u}) {
    CHECK(state.particle(id).type == PType::B);
    CHECK(*state.particle(id).switch_time == ev.time);
    // frog model: rate switch gives the converted particle a finite clock
    CHECK(state.particle(id).next_jump > ev.time);
    CHECK(state.particle(id).next_jump < kNever);
  }
  CHECK(state.first_visit().at(Site(1, {1})) == ev.time);
  state.check_consistency();
}

TEST_CASE("A jumping onto a B switches the jumper") {
  WalkParams params{1, 1.0, 0.0, 1.0};
  auto init = line({{0, PType::B}, {1, PType::A}});
  auto state = find_first_move(params, init, 1, 0);
  auto ev = state.step();
  CHECK(ev.converted == std::vector<std::uint32_t>{1});
  CHECK(state.particle(1).type == PType::B);
  CHECK(state.particle(1).next_jump == kNever);  // now moves at rate_B = 0
  state.check_consistency();
}

TEST_CASE("A onto A only changes occupancy") {
  WalkParams params{1, 1.0, 0.0, 1.0};
  auto init = line({{50, PType::B}, {0, PType::A}, {1, PType::A}});
  auto state = find_first_move(params, init, 1, 1);
  auto ev = state.step();
  CHECK(ev.converted.empty());
  CHECK(state.cell(Site(1, {1}))->n_a == 2);
  CHECK(state.count_at(Site(1, {0})) == 0);
  CHECK(ev.from_count_before == 1);
  state.check_consistency();
}

TEST_CASE("run_until trivial cases") {
  auto cfg = config_1d(1.0, 10.0);
  auto state = SimState::init(cfg, RngStream{1, 0});
  const auto before = snapshot_json(state);
  auto rec = run_until(state, 0.0, SamplingPlan{{0.0}});
  REQUIRE(rec.samples.size() == 1);
  CHECK(rec.samples[0].t == 0.0);
  CHECK(snapshot_json(state) == before);
  CHECK_THROWS(run_until(state, 11.0, SamplingPlan{}));

  cfg.params.rate_A = cfg.params.rate_B = 0.0;
  auto frozen = SimState::init(cfg, RngStream{1, 0});
  const auto j0 = snapshot_json(frozen)["particles"];
  run_until(frozen, 10.0, SamplingPlan{{0.0, 5.0, 10.0}});
  CHECK(snapshot_json(frozen)["particles"] == j0);
  CHECK(frozen.now() == 10.0);
}

TEST_CASE("event count is a superposed Poisson process") {
  WalkParams params{2, 1.0, 1.0, 1.0};
  std::vector<InitialParticle> init;
  for (std::uint32_t i = 0; i < 20; ++i) {
    init.push_back({i, Site(2, {static_cast<std::int64_t>(i % 5), static_cast<std::int64_t>(i / 5)}),
                    i == 0 ? PType::B : PType::A});
  }
  // (0,0) must hold only the B seed
  const double t = 3.0;
  const int reps = 2000;
  double total = 0;
  for (int r = 0; r < reps; ++r) {
    auto st = SimState::from_particles(params, t, init, RngStream{5, static_cast<std::uint32_t>(r)});
    std::uint64_t n = 0;
    run_until(st, t, SamplingPlan{}, [&](const EventRecord&, const SimState&) { ++n; });
    total += static_cast<double>(n);
  }
  const double expect = 20 * 1.0 * t;
  CHECK(std::abs(total / reps - expect) < 3 * std::sqrt(expect / reps));
}

TEST_CASE("infected_region") {
  auto cfg = config_1d(1e-9, 20.0);
  auto state = SimState::init(cfg, RngStream{2, 0});
  CHECK(infected_region(state, 0.0) == std::vector<Site>{Site(1, {0})});
  auto ev = state.step();
  CHECK(infected_region(state, ev.time) == std::vector<Site>{std::min(ev.from, ev.to), std::max(ev.from, ev.to)});

  auto cfg2 = config_1d(1.0, 20.0);
  auto s2 = SimState::init(cfg2, RngStream{3, 0});
  std::vector<std::size_t> sizes;
  for (double t : {2.0, 5.0, 10.0, 20.0}) {
    run_until(s2, t, SamplingPlan{});
    sizes.push_back(infected_region(s2, t).size());
    const auto early = infected_region(s2, t / 2);
    const auto late = infected_region(s2, t);
    CHECK(std::includes(late.begin(), late.end(), early.begin(), early.end()));
  }
  CHECK(std::is_sorted(sizes.begin(), sizes.end()));
  CHECK_THROWS(infected_region(s2, 21.0));
}

TEST_CASE("dynamics invariants hold after every event") {
  for (double rate_a : {0.0, 0.5, 1.0}) {
    for (int d : {1, 2}) {
      SimConfig cfg;
      cfg.params = WalkParams{d, rate_a, 1.0, 0.8};
      cfg.b_seeds = {Site(d)};
      cfg.t_max = 6.0;
      cfg.kappa = 1.0;
      auto state = SimState::init(cfg, RngStream{9, static_cast<std::uint32_t>(d)});
      const auto n0 = state.particles().size();
      auto visits = state.first_visit();
      std::vector<std::optional<double>> switches;
      for (const auto& p : state.particles()) switches.push_back(p.switch_time);
      std::uint64_t events = 0;
      run_until(state, cfg.t_max, SamplingPlan{}, [&](const EventRecord& ev, const SimState& s) {
        ++events;
        if (events % 97 == 0) s.check_consistency();
        const Cell* c = s.cell(ev.to);
        REQUIRE(c != nullptr);
        CHECK_FALSE((c->n_a > 0 && c->n_b > 0));
        for (auto id : ev.converted) CHECK(*s.particle(id).switch_time == ev.time);
      });
      state.check_consistency();
      CHECK(state.particles().size() == n0);
      for (const auto& [site, t] : visits) CHECK(state.first_visit().at(site) == t);
      for (std::size_t i = 0; i < n0; ++i) {
        if (switches[i]) CHECK(state.particles()[i].switch_time == switches[i]);
      }
      CHECK(events > 0);
    }
  }
}

TEST_CASE("with D_A == D_B positions follow the free system") {
  SimConfig cfg = config_1d(1.0, 8.0);
  cfg.kappa = 1.0;
  const RngStream rng{31, 2};
  auto state = SimState::init(cfg, rng);
  run_until(state, 8.0, SamplingPlan{});
  auto field = sample_initial_field(Box::cube(1, cfg.window_radius()), cfg.params, rng, 0.0,
                                    static_cast<std::uint32_t>(cfg.b_seeds.size()));
  evolve_free_system(field, 8.0);
  for (const auto& fp : field.particles) CHECK(state.particle(fp.id).pos == fp.pos);
}

TEST_CASE("coupled runs and domination") {
  WalkParams params{1, 1.0, 1.0, 1.0};
  SimConfig cfg;
  cfg.params = params;
  cfg.t_max = 10.0;
  cfg.kappa = 1.0;
  const RngStream rng{12, 0};
  const auto high = initial_particles(cfg, rng);
  SamplingPlan plan{{0, 1, 2, 4, 6, 8, 10}};

  auto [a, b] = coupled_run(params, cfg.t_max, high, high, plan, rng);
  CHECK(check_domination(a, b));
  for (std::size_t e = 0; e < a.samples.size(); ++e) {
    REQUIRE(a.samples[e].particles.size() == b.samples[e].particles.size());
    for (std::size_t i = 0; i < a.samples[e].particles.size(); ++i) {
      CHECK(a.samples[e].particles[i].pos == b.samples[e].particles[i].pos);
      CHECK(a.samples[e].particles[i].type == b.samples[e].particles[i].type);
    }
  }

  // drop one A particle
  auto low = high;
  auto victim = std::find_if(low.begin(), low.end(), [](const auto& p) { return p.type == PType::A; });
  REQUIRE(victim != low.end());
  low.erase(victim);
  auto [lo, hi] = coupled_run(params, cfg.t_max, low, high, plan, rng);
  CHECK(check_domination(lo, hi));
  for (std::size_t e = 0; e < lo.samples.size(); ++e) {
    std::size_t j = 0;
    for (const auto& p : lo.samples[e].particles) {
      while (hi.samples[e].particles[j].id != p.id) ++j;
      CHECK(hi.samples[e].particles[j].pos == p.pos);
    }
  }

  // demote an extra B seed site to A in the low system
  auto high2 = high;
  const std::uint32_t extra = 100000;
  high2.push_back({extra, Site(1, {4}), PType::B});
  for (auto& p : high2) {
    if (p.pos == Site(1, {4})) p.type = PType::B;
  }
  auto low2 = high2;
  for (auto& p : low2) {
    if (p.pos == Site(1, {4})) p.type = PType::A;
  }
  auto [lo2, hi2] = coupled_run(params, cfg.t_max, low2, high2, plan, rng);
  CHECK(check_domination(lo2, hi2));
  CHECK_FALSE(check_domination(hi2, lo2));

  // detector: corrupt one low-side type where high has A
  auto corrupt = lo2;
  bool done = false;
  for (auto& p : corrupt.samples.back().particles) {
    auto q = std::find_if(hi2.samples.back().particles.begin(), hi2.samples.back().particles.end(),
                          [&](const auto& h) { return h.id == p.id; });
    if (q->type == PType::A) {
      p.type = PType::B;
      done = true;
      break;
    }
  }
  REQUIRE(done);
  CHECK_FALSE(check_domination(corrupt, hi2));

  // containment violations
  CHECK_THROWS_AS(coupled_run(params, cfg.t_max, high2, low2, plan, rng), std::invalid_argument);
  auto moved = low;
  moved.front().pos = moved.front().pos + Site(1, {1});
  CHECK_THROWS_AS(coupled_run(params, cfg.t_max, moved, high, plan, rng), std::invalid_argument);
  WalkParams unequal = params;
  unequal.rate_A = 0.5;
  CHECK_THROWS_AS(coupled_run(unequal, cfg.t_max, low, high, plan, rng), std::invalid_argument);

  auto short_rec = lo;
  short_rec.samples.pop_back();
  CHECK_THROWS_AS(check_domination(short_rec, hi), std::invalid_argument);
}

TEST_CASE("snapshot json golden") {
  WalkParams params{2, 0.0, 0.0, 1.0};
  std::vector<InitialParticle> init{{0, Site(2, {0, 0}), PType::B},
                                    {1, Site(2, {1, 0}), PType::A},
                                    {2, Site(2, {0, 0}), PType::B}};
  auto st = SimState::from_particles(params, 1.0, init, RngStream{});
  run_until(st, 1.0, SamplingPlan{});
  const auto golden = nlohmann::json::parse(R"({
    "time": 1.0,
    "particles": [
      {"id": 0, "pos": [0, 0], "type": "B"},
      {"id": 1, "pos": [1, 0], "type": "A"},
      {"id": 2, "pos": [0, 0], "type": "B"}],
    "first_visit": [{"site": [0, 0], "time": 0.0}]
  })");
  CHECK(snapshot_json(st) == golden);

  std::vector<InitialParticle> mixed{{0, Site(1, {0}), PType::B}, {1, Site(1, {0}), PType::A}};
  CHECK_THROWS_AS(SimState::from_particles(WalkParams{}, 1.0, mixed, RngStream{}), std::invalid_argument);
}
