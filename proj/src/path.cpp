#include "abspread/path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace abspread {

std::string to_string(PathEventKind k) {
  switch (k) {
    case PathEventKind::start: return "start";
    case PathEventKind::moved: return "moved";
    case PathEventKind::handoff: return "handoff";
  }
  return "?";
}

DistinguishedPath DistinguishedPath::start(const SimState& state, PathTarget target,
                                           std::optional<std::uint32_t> carrier) {
  if (const auto* x = std::get_if<Site>(&target); x && x->dim != state.params().d) {
    throw std::invalid_argument("path target has wrong dimension");
  }
  if (const auto* phi = std::get_if<TrackedParticle>(&target); phi && !state.has_particle(phi->id)) {
    throw std::invalid_argument("tracked particle " + std::to_string(phi->id) + " does not exist");
  }
  const ParticleState* first = nullptr;
  if (carrier) {
    if (!state.has_particle(*carrier) || state.particle(*carrier).type != PType::B) {
      throw std::invalid_argument("path carrier " + std::to_string(*carrier) + " is not a B-particle");
    }
    first = &state.particle(*carrier);
  } else {
    for (const auto& p : state.particles()) {
      if (p.type == PType::B && (!first || p.id < first->id)) first = &p;
    }
  }
  if (!first) throw std::invalid_argument("cannot start a path: no B-particles");

  DistinguishedPath path;
  path.target_ = target;
  path.lambda_ = first->pos;
  const Cell* c = state.cell(first->pos);
  path.rho_ = *std::min_element(c->ids.begin(), c->ids.end());
  path.start_time_ = state.now();
  path.frontier_ = state.now();
  path.events_.push_back({state.now(), PathEventKind::start, path.lambda_, path.lambda_, path.rho_, path.rho_});
  path.refresh_trace(state.now(), state);
  return path;
}

Site DistinguishedPath::target_position(const SimState& state) const {
  if (const auto* x = std::get_if<Site>(&target_)) return *x;
  return state.particle(std::get<TrackedParticle>(target_).id).pos;
}

double DistinguishedPath::target_rate(const SimState& state) const {
  const auto* phi = std::get_if<TrackedParticle>(&target_);
  if (!phi) return 0.0;
  const auto& p = state.particle(phi->id);
  return p.type == PType::A ? state.params().rate_A : state.params().rate_B;
}

void DistinguishedPath::check_carrier(const SimState& state) const {
  const auto& p = state.particle(rho_);
  if (p.type != PType::B || p.pos != lambda_) {
    throw std::logic_error("distinguished particle " + std::to_string(rho_) + " is not a B-particle at lambda = " +
                           lambda_.to_string());
  }
}

void DistinguishedPath::refresh_trace(double t, const SimState& state) {
  TraceSegment seg{t, lambda_, target_position(state), state.count_at(lambda_), target_rate(state)};
  if (!trace_.empty()) {
    const auto& last = trace_.back();
    if (last.lambda == seg.lambda && last.target == seg.target && last.n_at_lambda == seg.n_at_lambda &&
        last.target_rate == seg.target_rate) {
      return;
    }
    if (last.start == t) {
      trace_.back() = seg;
      return;
    }
  }
  trace_.push_back(seg);
}

void DistinguishedPath::advance(const EventRecord& ev, const SimState& state) {
  if (ev.time < frontier_) {
    throw std::invalid_argument("path event at t = " + std::to_string(ev.time) +
                                " precedes the path frontier " + std::to_string(frontier_));
  }
  frontier_ = ev.time;
  const auto* phi = std::get_if<TrackedParticle>(&target_);
  if (ev.mover == rho_) {
    if (ev.from != lambda_) throw std::logic_error("distinguished particle jumped from outside lambda");
    sigma_events_.push_back(ev.time);
    const Site w = ev.from;
    const Site x = target_position(state);
    PathEvent pe{ev.time, PathEventKind::moved, w, ev.to, rho_, rho_};
    if (ev.from_count_before == 1 || norm_l2_sq(ev.to - x) < norm_l2_sq(w - x)) {
      lambda_ = ev.to;
    } else {
      const Cell* c = state.cell(w);
      if (!c || c->ids.empty()) throw std::logic_error("handoff with no particle left at " + w.to_string());
      rho_ = *std::min_element(c->ids.begin(), c->ids.end());
      pe.kind = PathEventKind::handoff;
      pe.to = w;
      pe.rho_after = rho_;
      ++handoffs_;
    }
    events_.push_back(pe);
  } else if (phi && ev.mover == phi->id) {
    sigma_events_.push_back(ev.time);
  }
  check_carrier(state);
  if (ev.from == lambda_ || ev.to == lambda_ || ev.mover == rho_ || (phi && ev.mover == phi->id) ||
      !ev.converted.empty()) {
    refresh_trace(ev.time, state);
  }
}

DistinguishedPath start_path(const SimState& state, PathTarget target, std::optional<std::uint32_t> carrier) {
  return DistinguishedPath::start(state, target, carrier);
}

void advance_path(DistinguishedPath& path, const EventRecord& ev, const SimState& state) {
  if (path.tracking()) throw std::invalid_argument("advance_path on a tracking path");
  path.advance(ev, state);
}

void advance_path_tracking(DistinguishedPath& path, const EventRecord& ev, const SimState& state) {
  if (!path.tracking()) throw std::invalid_argument("advance_path_tracking on a fixed-target path");
  path.advance(ev, state);
}

DriftTerms drift_terms(const Site& lambda_pos, const Site& target_pos) {
  const Site v = lambda_pos - target_pos;
  const std::int64_t r2 = norm_l2_sq(v);
  const double r = std::sqrt(static_cast<double>(r2));
  DriftTerms out;
  const int d = v.dim;
  for (int i = 0; i < d; ++i) {
    for (int s : {1, -1}) {
      Site w = v;
      w[i] += s;
      const std::int64_t w2 = norm_l2_sq(w);
      const double diff = std::sqrt(static_cast<double>(w2)) - r;
      out.gamma_1 += diff;
      if (w2 < r2) out.gamma_ge2 += diff;
    }
  }
  out.gamma_1 /= 2.0 * d;
  out.gamma_ge2 /= 2.0 * d;
  return out;
}

MartingaleEvaluator::MartingaleEvaluator(const DistinguishedPath& path, double rate_b, double horizon)
    : path_(&path), horizon_(horizon) {
  const auto& tr = path.trace();
  if (tr.empty()) throw std::invalid_argument("empty path trace");
  if (horizon < path.frontier()) {
    throw std::invalid_argument("horizon lies before the last recorded event");
  }
  drift_.reserve(tr.size());
  distance_.reserve(tr.size());
  cum_.reserve(tr.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < tr.size(); ++j) {
    const auto& s = tr[j];
    if (j > 0) acc += drift_[j - 1] * (s.start - tr[j - 1].start);
    cum_.push_back(acc);
    const DriftTerms g = drift_terms(s.lambda, s.target);
    if (s.n_at_lambda == 0) throw std::logic_error("lambda is unoccupied in the trace");
    double rate = rate_b * (s.n_at_lambda == 1 ? g.gamma_1 : g.gamma_ge2);
    if (path.tracking()) rate += s.target_rate * g.gamma_1;
    drift_.push_back(rate);
    distance_.push_back(norm_l2(s.lambda - s.target));
    if (path.tracking() && !stop_ && s.lambda == s.target) stop_ = s.start;
  }
}

std::size_t MartingaleEvaluator::segment_at(double t, bool left) const {
  const auto& tr = path_->trace();
  auto it = left ? std::lower_bound(tr.begin(), tr.end(), t,
                                    [](const TraceSegment& s, double v) { return s.start < v; })
                 : std::upper_bound(tr.begin(), tr.end(), t,
                                    [](double v, const TraceSegment& s) { return v < s.start; });
  if (it == tr.begin()) return 0;
  return static_cast<std::size_t>(it - tr.begin()) - 1;
}

double MartingaleEvaluator::raw(double t, bool left) const {
  const std::size_t j = segment_at(t, left);
  const double integral = cum_[j] + drift_[j] * (t - path_->trace()[j].start);
  return distance_[j] - integral;
}

double MartingaleEvaluator::value(double t) const {
  if (t < path_->start_time() || t > horizon_) {
    throw std::out_of_range("martingale requested at t = " + std::to_string(t) + " outside the recorded trace");
  }
  if (stop_ && t >= *stop_) return raw(*stop_, false);
  return raw(t, false);
}

double MartingaleEvaluator::left_value(double t) const {
  if (t <= path_->start_time()) return value(path_->start_time());
  if (t > horizon_) throw std::out_of_range("martingale requested beyond the recorded trace");
  if (stop_ && t > *stop_) return raw(*stop_, false);
  return raw(t, true);
}

MartingaleSeries martingale_series(const DistinguishedPath& path, double rate_b,
                                   std::span<const double> sample_times, double horizon) {
  const MartingaleEvaluator m(path, rate_b, horizon);
  MartingaleSeries out;
  const double t0 = path.start_time();
  out.m0 = m.value(t0);
  out.stopped_at = m.stop_time();
  for (double t : sample_times) out.samples.push_back({t, m.value(t)});

  const auto& tr = path.trace();
  for (std::size_t j = 0; j < tr.size(); ++j) {
    const auto& s = tr[j];
    const DriftTerms g = drift_terms(s.lambda, s.target);
    out.integrand.push_back({s.start, s.n_at_lambda == 1, s.n_at_lambda >= 2, g.gamma_1, g.gamma_ge2, m.drift()[j]});
  }

  double max_phi_rate = 0.0;
  for (const auto& s : tr) max_phi_rate = std::max(max_phi_rate, s.target_rate);
  out.increment_bound = 1.0 + rate_b + max_phi_rate;
  constexpr double kRoundoff = 1e-9;

  // sigma grid: next attempted jump (or phi jump), capped at one time unit
  const auto& ev = path.sigma_events();
  const double end = out.stopped_at ? std::min(horizon, *out.stopped_at) : horizon;
  std::size_t next_ev = 0;
  std::size_t seg = 0;
  double sigma = t0;
  while (sigma < end) {
    while (next_ev < ev.size() && ev[next_ev] <= sigma) ++next_ev;
    double nxt = sigma + 1.0;
    if (next_ev < ev.size()) nxt = std::min(nxt, ev[next_ev]);
    nxt = std::min(nxt, end);
    const double base = m.value(sigma);
    double worst = std::abs(m.value(nxt) - base);
    worst = std::max(worst, std::abs(m.left_value(nxt) - base));
    while (seg + 1 < tr.size() && tr[seg + 1].start <= sigma) ++seg;
    for (std::size_t j = seg + 1; j < tr.size() && tr[j].start < nxt; ++j) {
      worst = std::max(worst, std::abs(m.left_value(tr[j].start) - base));
      worst = std::max(worst, std::abs(m.value(tr[j].start) - base));
    }
    out.max_sigma_increment = std::max(out.max_sigma_increment, worst);
    if (worst > out.increment_bound + kRoundoff) ++out.increment_violations;
    ++out.sigma_intervals;
    sigma = nxt;
  }
  return out;
}

GeometryReport geometry_bounds_check(int d, std::int64_t radius, double k8) {
  if (radius < 1) throw std::invalid_argument("geometry_bounds_check: radius must be >= 1");
  GeometryReport rep;
  rep.d = d;
  rep.radius = radius;
  rep.k8 = k8;
  rep.max_gamma_ge2_nonzero = -std::numeric_limits<double>::infinity();
  const Site origin(d);
  const double k9 = 1.0 / (4.0 * d);
  Box::cube(d, radius).for_each([&](const Site& v) {
    ++rep.points;
    const DriftTerms g = drift_terms(v, origin);
    const double r = norm_l2(v);
    if (std::abs(g.gamma_1) > 1.0 || std::abs(g.gamma_ge2) > 1.0) ++rep.violations_unit;
    rep.k8_floor = std::max(rep.k8_floor, g.gamma_1 * (r + 1.0));
    if (g.gamma_1 > k8 / (r + 1.0)) ++rep.violations_k8;
    if (v == origin) return;
    rep.max_gamma_ge2_nonzero = std::max(rep.max_gamma_ge2_nonzero, g.gamma_ge2);
    if (g.gamma_ge2 > -k9) ++rep.violations_unconditional;
    if (g.gamma_ge2 > -k9 + k8 / (r + 1.0)) ++rep.violations_k8_k9;
  });
  return rep;
}

}  // namespace abspread
