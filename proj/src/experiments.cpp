#include "abspread/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "abspread/path.hpp"

namespace abspread {

int default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> epoch_grid(double t_max, double dt, int n_geometric) {
  if (!(t_max >= 0.0)) throw std::invalid_argument("epoch_grid: t_max must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("epoch_grid: dt must be > 0");
  if (n_geometric < 0) throw std::invalid_argument("epoch_grid: negative geometric count");
  std::vector<double> out;
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t >= t_max) break;
    out.push_back(t);
  }
  out.push_back(t_max);
  double g = dt;
  for (int j = 0; j < n_geometric; ++j) {
    g /= 2.0;
    if (g < t_max) out.push_back(g);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

std::vector<std::string> record_invariants(const ExperimentRecord& rec) {
  std::vector<std::string> bad;
  for (std::size_t e = 0; e < rec.samples.size(); ++e) {
    const auto& s = rec.samples[e];
    if (e > 0) {
      const auto& p = rec.samples[e - 1];
      if (s.n_infected_sites < p.n_infected_sites) {
        bad.push_back("infected count decreased at t=" + std::to_string(s.t));
      }
      if (s.n_b < p.n_b) bad.push_back("B count decreased at t=" + std::to_string(s.t));
    }
    if (rec.dim == 1) {
      if (!s.front_right || !s.front_left) {
        bad.push_back("missing front extremes at t=" + std::to_string(s.t));
      } else if (s.max_norm_b != std::max(*s.front_right, *s.front_left)) {
        bad.push_back("max norm disagrees with the front extremes at t=" + std::to_string(s.t));
      }
    }
  }
  return bad;
}

}  // namespace

std::vector<ReplicaResult> run_replicas(const SimConfig& cfg, const SamplingPlan& plan, std::uint64_t seed,
                                        std::size_t n, const ReplicaOptions& opt) {
  cfg.validate();
  std::vector<ReplicaResult> out(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    auto state = SimState::init(cfg, RngStream{seed, static_cast<std::uint32_t>(i)});
    auto& res = out[i];
    res.record = run_until(state, cfg.t_max, plan);
    res.record.fingerprint = opt.fingerprint;
    res.invariant_failures = record_invariants(res.record);
    try {
      state.check_consistency();
    } catch (const std::logic_error& e) {
      res.invariant_failures.emplace_back(e.what());
    }
    if (opt.keep_final_a) res.final_a = a_positions(state);
  });
  return out;
}

MartingaleRun run_martingale(const MartingaleSpec& spec) {
  if (spec.times.empty()) throw std::invalid_argument("run_martingale: no sample times");
  if (!std::is_sorted(spec.times.begin(), spec.times.end())) {
    throw std::invalid_argument("run_martingale: sample times must be ascending");
  }
  const double horizon = spec.times.back();
  SimConfig cfg;
  cfg.params = spec.params;
  cfg.t_max = horizon;
  cfg.kappa = spec.kappa;
  cfg.b_seeds = {Site(spec.params.d)};
  cfg.validate();
  Site target(spec.params.d);
  target[0] = spec.distance;

  struct One {
    std::vector<double> inc;
    double m0 = 0.0;
    MartingaleSeries series;
  };
  std::vector<One> reps(spec.replicas);
  parallel_for(spec.replicas, spec.threads, [&](std::size_t i) {
    const RngStream rng{spec.seed, static_cast<std::uint32_t>(i)};
    auto init = initial_particles(cfg, rng);
    PathTarget tgt = target;
    if (spec.tracking) {
      const auto phi = static_cast<std::uint32_t>(init.size());
      init.push_back({phi, target, PType::A});
      tgt = TrackedParticle{phi};
    }
    auto state = SimState::from_particles(cfg.params, horizon, init, rng);
    auto path = start_path(state, tgt);
    run_until(state, horizon, SamplingPlan{}, [&](const EventRecord& e, const SimState& s) {
      if (spec.tracking) {
        advance_path_tracking(path, e, s);
      } else {
        advance_path(path, e, s);
      }
    });
    auto& r = reps[i];
    r.series = martingale_series(path, spec.params.rate_B, spec.times, horizon);
    r.m0 = r.series.m0;
    for (const auto& s : r.series.samples) r.inc.push_back(s.value - r.series.m0);
  });

  MartingaleRun run;
  run.times = spec.times;
  for (auto& r : reps) {
    run.increments.push_back(std::move(r.inc));
    run.m0.push_back(r.m0);
    run.increment_violations += r.series.increment_violations;
    run.sigma_intervals += r.series.sigma_intervals;
    run.max_increment = std::max(run.max_increment, r.series.max_sigma_increment);
    run.increment_bound = std::max(run.increment_bound, r.series.increment_bound);
    run.stopped += r.series.stopped_at.has_value();
  }
  return run;
}

std::vector<MartingaleStat> martingale_test(const std::vector<double>& times,
                                            const std::vector<std::vector<double>>& increments) {
  if (increments.size() < 2) throw std::invalid_argument("martingale_test: need at least two replicas");
  std::vector<MartingaleStat> out;
  for (std::size_t j = 0; j < times.size(); ++j) {
    MartingaleStat st;
    st.t = times[j];
    st.n = increments.size();
    for (const auto& row : increments) {
      if (row.size() != times.size()) throw std::invalid_argument("martingale_test: ragged increment table");
      st.mean += row[j];
    }
    st.mean /= static_cast<double>(st.n);
    double ss = 0.0;
    for (const auto& row : increments) ss += (row[j] - st.mean) * (row[j] - st.mean);
    st.std_err = std::sqrt(ss / static_cast<double>(st.n - 1) / static_cast<double>(st.n));
    st.pass = std::abs(st.mean) <= 3.0 * st.std_err;
    out.push_back(st);
  }
  return out;
}

std::string to_string(Perturbation p) {
  switch (p) {
    case Perturbation::remove_site:
      return "remove_site";
    case Perturbation::add_b:
      return "add_b";
    case Perturbation::add_particle:
      return "add_particle";
  }
  return "?";
}

CouplingRun run_coupling(const CouplingSpec& spec) {
  SimConfig cfg;
  cfg.params = spec.params;
  cfg.t_max = spec.t_max;
  cfg.kappa = spec.kappa;
  cfg.b_seeds = {Site(spec.params.d)};
  cfg.validate();
  const std::int64_t half = std::max<std::int64_t>(1, cfg.window_radius() / 2);
  SamplingPlan plan;
  plan.epochs = spec.epochs;

  CouplingRun run;
  run.pairs.resize(spec.pairs);
  parallel_for(spec.pairs, spec.threads, [&](std::size_t i) {
    const RngStream rng{spec.seed, static_cast<std::uint32_t>(i)};
    const auto base = initial_particles(cfg, rng);
    auto aux = rng.substream(Domain::aux, 0);
    Site z(spec.params.d);
    do {
      for (int k = 0; k < spec.params.d; ++k) {
        z[k] = static_cast<std::int64_t>(aux.below(static_cast<std::uint64_t>(2 * half + 1))) - half;
      }
    } while (z == Site(spec.params.d));
    const auto fresh = static_cast<std::uint32_t>(base.size());
    auto& pair = run.pairs[i];
    pair.kind = static_cast<Perturbation>(i % 3);
    pair.site = z;
    std::vector<InitialParticle> low = base, high = base;
    switch (pair.kind) {
      case Perturbation::remove_site:
        std::erase_if(low, [&](const InitialParticle& p) { return p.pos == z; });
        break;
      case Perturbation::add_b:
        for (auto& p : high) {
          if (p.pos == z) p.type = PType::B;
        }
        high.push_back({fresh, z, PType::B});
        break;
      case Perturbation::add_particle: {
        const bool has_b = std::any_of(base.begin(), base.end(),
                                       [&](const InitialParticle& p) { return p.pos == z && p.type == PType::B; });
        high.push_back({fresh, z, has_b ? PType::B : PType::A});
        break;
      }
    }
    const auto [lo, hi] = coupled_run(spec.params, spec.t_max, low, high, plan, rng);
    pair.dominated = check_domination(lo, hi);
  });
  for (const auto& p : run.pairs) run.dominated += p.dominated;
  return run;
}

std::vector<ExperimentRecord> bound_records(const BoundSpec& spec) {
  if (spec.times.empty()) throw std::invalid_argument("run_bound_checks: no times");
  SimConfig cfg;
  cfg.params = spec.params;
  cfg.kappa = spec.kappa;
  cfg.t_max = *std::max_element(spec.times.begin(), spec.times.end());
  cfg.b_seeds = {Site(spec.params.d)};
  SamplingPlan plan;
  plan.epochs = spec.times;
  plan.epochs.push_back(0.0);
  std::sort(plan.epochs.begin(), plan.epochs.end());
  plan.epochs.erase(std::unique(plan.epochs.begin(), plan.epochs.end()), plan.epochs.end());
  ReplicaOptions opt;
  opt.threads = spec.threads;
  const auto res = run_replicas(cfg, plan, spec.seed, spec.replicas, opt);
  std::vector<ExperimentRecord> recs;
  for (const auto& r : res) recs.push_back(r.record);
  return recs;
}

std::vector<BoundCheck> run_bound_checks(const BoundSpec& spec) {
  const auto recs = bound_records(spec);
  std::vector<BoundCheck> out;
  for (double t : spec.times) out.push_back(check_b_count_bound(recs, spec.params, t));
  return out;
}

StationarityResult run_stationarity(const StationaritySpec& spec) {
  spec.params.validate();
  const double margin = stationarity_margin(spec.params.rate_A, spec.t, spec.k);
  const auto reach = spec.window + static_cast<std::int64_t>(std::ceil(margin));
  std::vector<FreeField> fields;
  fields.reserve(spec.replicas);
  for (std::size_t r = 0; r < spec.replicas; ++r) {
    auto f = sample_initial_field(Box::cube(spec.params.d, reach), spec.params,
                                  RngStream{spec.seed, static_cast<std::uint32_t>(r)});
    evolve_free_system(f, spec.t);
    fields.push_back(std::move(f));
  }
  return poisson_stationarity_test(fields, spec.t, Box::cube(spec.params.d, spec.window), spec.k);
}

SpaceTimePath sample_walk_path(const Site& x0, double t0, double t1, double rate, CounterRng& rng) {
  if (!(t1 > t0)) throw std::invalid_argument("sample_walk_path: empty time range");
  if (!(rate >= 0.0)) throw std::invalid_argument("sample_walk_path: negative rate");
  const auto basis = neighbor_offsets(x0.dim);
  SpaceTimePath p;
  p.times.push_back(t0);
  p.xs.push_back(x0);
  p.end = t1;
  for (double t = sample_jump_time(rate, t0, rng); t < t1; t = sample_jump_time(rate, t, rng)) {
    p.times.push_back(t);
    p.xs.push_back(sample_jump_target(p.xs.back(), basis, rng));
  }
  return p;
}

namespace {

MultiscaleConfigResult multiscale_config(const MultiscaleSpec& spec, std::size_t c) {
  const int d = spec.d;
  const auto C0 = spec.C0;
  MultiscaleConfigResult res;
  res.mu = spec.mus[c % spec.mus.size()];
  const RngStream rng{spec.seed, static_cast<std::uint32_t>(c)};

  MultiscaleParams mp;
  mp.C0 = C0;
  mp.schedule = gamma_schedule(spec.gamma0, C0, 2);
  mp.mu = res.mu;

  const BlockIndex parent{2, Site(d), 0};
  auto blocks = children_of(parent, C0);
  blocks.push_back(parent);

  const auto t0 = enlarged_t0(parent, C0);
  const auto t1 = enlarged_t1(parent, C0);
  const auto V = enlarged_space(parent, C0);
  const auto margin = static_cast<std::int64_t>(
                          std::ceil(10.0 * std::sqrt(spec.field_rate * static_cast<double>(t1 - t0)))) + 1;
  Box box{Site(d), Site(d)};
  for (int k = 0; k < d; ++k) {
    box.lo[k] = V.lo[k] - margin;
    box.hi[k] = V.hi[k] - 1 + margin;
  }
  const WalkParams wp{d, spec.field_rate, spec.field_rate, res.mu};
  auto field = sample_initial_field(box, wp, rng, static_cast<double>(t0));

  const Label direct_pedestal = classify_pedestal(field, parent, mp);
  SweepStats stats;
  const auto labels = classify_blocks(std::move(field), blocks, mp, &stats);
  res.blocks = labels.size();
  res.w_checks = stats.w_checks;
  res.w_exceeds_u = stats.w_exceeds_u;

  LabelSet l1, l2;
  bool any_inferior = false;
  for (const auto& l : labels) {
    if (l.idx.r == 1) {
      l1.add(l);
      res.bad_r1 += l.label == Label::bad;
      const bool inf = l.inferior.value_or(false);
      res.inferior_r1 += inf;
      any_inferior = any_inferior || inf;
      if (l.label == Label::bad && !inf) ++res.bad_not_inferior;
    } else {
      l2.add(l);
      res.parent_bad = l.label == Label::bad;
      if (l.pedestal != direct_pedestal) ++res.pedestal_mismatch;
      if (l.label == Label::bad && l.inferior && !*l.inferior) ++res.bad_not_inferior;
    }
    if (l.label == Label::good && l.pedestal == Label::bad) ++res.good_with_bad_pedestal;
  }
  res.inferior_child_under_good_pedestal = any_inferior && direct_pedestal == Label::good;

  const auto delta = block_delta(C0, 2);
  const HalfOpenBox inside = block_space(parent, C0);
  for (std::size_t p = 0; p < spec.paths; ++p) {
    auto prng = rng.substream(Domain::path, static_cast<std::uint32_t>(p));
    SpaceTimePath path;
    for (;;) {
      Site x0(d);
      for (int k = 0; k < d; ++k) {
        x0[k] = delta / 4 + static_cast<std::int64_t>(prng.below(static_cast<std::uint64_t>(delta / 2)));
      }
      path = sample_walk_path(x0, static_cast<double>(block_t0(parent, C0)),
                              static_cast<double>(block_t0(parent, C0) + delta), spec.path_rate, prng);
      if (std::all_of(path.xs.begin(), path.xs.end(), [&](const Site& x) { return inside.contains(x); })) break;
    }
    const auto rc = check_recursion(path, l1, l2, 1, C0, d);
    ++res.recursion_checks;
    res.recursion_failures += !rc.holds;
    res.max_phi_r = std::max(res.max_phi_r, rc.phi_r);
  }
  if (c == 0) res.labels = labels;
  return res;
}

}  // namespace

MultiscaleRun run_multiscale(const MultiscaleSpec& spec) {
  if (spec.mus.empty()) throw std::invalid_argument("run_multiscale: no densities");
  if (spec.C0 < 2) throw std::invalid_argument("run_multiscale: C0 must be >= 2");
  MultiscaleRun run;
  run.configs.resize(spec.configs);
  parallel_for(spec.configs, spec.threads, [&](std::size_t c) { run.configs[c] = multiscale_config(spec, c); });
  for (const auto& c : run.configs) {
    run.blocks += c.blocks;
    run.w_checks += c.w_checks;
    run.w_exceeds_u += c.w_exceeds_u;
    run.bad_not_inferior += c.bad_not_inferior;
    run.good_with_bad_pedestal += c.good_with_bad_pedestal;
    run.pedestal_mismatch += c.pedestal_mismatch;
    run.recursion_checks += c.recursion_checks;
    run.recursion_failures += c.recursion_failures;
  }
  return run;
}

}  // namespace abspread
