#include "abspread/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace abspread {

FrontExtremes front_extremes(const SimState& state) {
  if (state.params().d != 1) throw std::invalid_argument("front_extremes: needs d = 1");
  bool any = false;
  std::int64_t hi = 0, lo = 0;
  for (const auto& p : state.particles()) {
    if (p.type != PType::B) continue;
    if (!any) {
      hi = lo = p.pos[0];
      any = true;
    } else {
      hi = std::max(hi, p.pos[0]);
      lo = std::min(lo, p.pos[0]);
    }
  }
  if (!any) throw std::invalid_argument("front_extremes: no B particles");
  return {hi, -lo};
}

LineFit ols_fit(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw std::invalid_argument("ols_fit: length mismatch");
  const std::size_t n = t.size();
  if (n < 2) throw std::invalid_argument("ols_fit: need at least two points");
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  if (stt <= 0.0) throw std::invalid_argument("ols_fit: all abscissae equal");
  LineFit f;
  f.slope = sty / stt;
  f.intercept = my - f.slope * mt;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * t[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / stt);
  }
  return f;
}

double front_statistic(const EpochSample& s, int d) {
  if (d == 1) {
    if (!s.front_right) throw std::invalid_argument("front_statistic: epoch without B particles");
    return static_cast<double>(*s.front_right);
  }
  return static_cast<double>(s.max_norm_b);
}

namespace {

// Every replica must share one epoch grid.
void check_grid(const std::vector<ExperimentRecord>& replicas) {
  if (replicas.empty()) throw std::invalid_argument("speed_estimate: no replicas");
  const auto& first = replicas.front();
  for (const auto& r : replicas) {
    if (r.dim != first.dim) throw std::invalid_argument("speed_estimate: replicas differ in dimension");
    if (r.samples.size() != first.samples.size()) {
      throw std::invalid_argument("speed_estimate: replicas differ in epoch count");
    }
    for (std::size_t e = 0; e < r.samples.size(); ++e) {
      if (r.samples[e].t != first.samples[e].t) {
        throw std::invalid_argument("speed_estimate: replicas differ in epoch times");
      }
    }
  }
}

SpeedEstimate fit_epochs(const std::vector<ExperimentRecord>& replicas, const std::vector<std::size_t>& epochs,
                         const BootstrapSpec& boot) {
  if (epochs.size() < 10) {
    throw std::invalid_argument("speed_estimate: " + std::to_string(epochs.size()) +
                                " epochs in the fit window, need at least 10");
  }
  const int d = replicas.front().dim;
  const std::size_t n = replicas.size();
  std::vector<double> ts;
  ts.reserve(epochs.size());
  for (auto e : epochs) ts.push_back(replicas.front().samples[e].t);

  // y[rep][j]
  std::vector<std::vector<double>> y(n, std::vector<double>(epochs.size()));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < epochs.size(); ++j) y[r][j] = front_statistic(replicas[r].samples[epochs[j]], d);
  }
  const auto mean_curve = [&](const std::vector<std::size_t>& pick) {
    std::vector<double> m(epochs.size(), 0.0);
    for (auto r : pick) {
      for (std::size_t j = 0; j < m.size(); ++j) m[j] += y[r][j];
    }
    for (auto& v : m) v /= static_cast<double>(pick.size());
    return m;
  };

  std::vector<std::size_t> all(n);
  for (std::size_t r = 0; r < n; ++r) all[r] = r;
  const auto m = mean_curve(all);
  const auto fit = ols_fit(ts, m);

  SpeedEstimate s;
  s.dim = d;
  s.slope = fit.slope;
  s.intercept = fit.intercept;
  s.t_lo = ts.front();
  s.t_hi = ts.back();
  s.n_epochs = ts.size();
  s.n_replicas = n;
  if (n == 1) {
    s.half_width = 1.96 * fit.slope_se;
    return s;
  }
  if (boot.resamples < 2) throw std::invalid_argument("speed_estimate: need at least 2 bootstrap resamples");
  CounterRng rng(boot.seed, 0, Domain::aux, 0xB0075EEDu);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(boot.resamples));
  std::vector<std::size_t> pick(n);
  for (int b = 0; b < boot.resamples; ++b) {
    for (auto& p : pick) p = static_cast<std::size_t>(rng.below(n));
    slopes.push_back(ols_fit(ts, mean_curve(pick)).slope);
  }
  std::sort(slopes.begin(), slopes.end());
  const auto quantile = [&](double q) {
    const double h = q * static_cast<double>(slopes.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, slopes.size() - 1);
    return slopes[lo] + (h - static_cast<double>(lo)) * (slopes[hi] - slopes[lo]);
  };
  s.half_width = std::max({0.0, s.slope - quantile(0.025), quantile(0.975) - s.slope});
  return s;
}

}  // namespace

SpeedEstimate speed_estimate(const std::vector<ExperimentRecord>& replicas, double window_fraction,
                             const BootstrapSpec& boot) {
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw std::invalid_argument("speed_estimate: window fraction must lie in (0, 1]");
  }
  check_grid(replicas);
  const std::size_t total = replicas.front().samples.size();
  const auto take = static_cast<std::size_t>(std::ceil(window_fraction * static_cast<double>(total)));
  std::vector<std::size_t> epochs;
  for (std::size_t e = total - std::min(take, total); e < total; ++e) epochs.push_back(e);
  return fit_epochs(replicas, epochs, boot);
}

SpeedEstimate speed_estimate(const ExperimentRecord& record, double window_fraction) {
  return speed_estimate(std::vector<ExperimentRecord>{record}, window_fraction);
}

SpeedEstimate speed_estimate_between(const std::vector<ExperimentRecord>& replicas, double t_lo, double t_hi,
                                     const BootstrapSpec& boot) {
  check_grid(replicas);
  std::vector<std::size_t> epochs;
  const auto& s = replicas.front().samples;
  for (std::size_t e = 0; e < s.size(); ++e) {
    if (s[e].t >= t_lo && s[e].t <= t_hi) epochs.push_back(e);
  }
  return fit_epochs(replicas, epochs, boot);
}

double genealogical_bound(const WalkParams& params, double n_b, double t) {
  if (t < 0.0) throw std::invalid_argument("genealogical_bound: t < 0");
  return n_b * std::exp((params.rate_A + params.rate_B) * params.mu_A * t);
}

BoundCheck check_b_count_bound(const std::vector<ExperimentRecord>& replicas, const WalkParams& params, double t) {
  if (replicas.size() < 100) {
    throw std::invalid_argument("check_b_count_bound: " + std::to_string(replicas.size()) +
                                " replicas, need at least 100");
  }
  const auto count_at = [](const ExperimentRecord& r, double when) {
    const auto it =
        std::find_if(r.samples.begin(), r.samples.end(), [&](const EpochSample& s) { return s.t == when; });
    if (it == r.samples.end()) {
      throw std::invalid_argument("check_b_count_bound: a replica has no epoch at t=" + std::to_string(when));
    }
    return static_cast<double>(it->n_b);
  };
  BoundCheck c;
  c.t = t;
  c.n = replicas.size();
  const double growth = genealogical_bound(params, 1.0, t);
  std::vector<double> diff;
  diff.reserve(c.n);
  for (const auto& r : replicas) {
    const double nt = count_at(r, t);
    const double n0 = count_at(r, 0.0);
    c.mean += nt;
    c.mean_n0 += n0;
    diff.push_back(nt - n0 * growth);
  }
  const double n = static_cast<double>(c.n);
  c.mean /= n;
  c.mean_n0 /= n;
  double md = 0.0;
  for (double v : diff) md += v;
  md /= n;
  double ss = 0.0;
  for (double v : diff) ss += (v - md) * (v - md);
  c.std_err = std::sqrt(ss / (n - 1.0) / n);
  c.bound = genealogical_bound(params, c.mean_n0, t);
  c.pass = c.mean + 3.0 * c.std_err <= c.bound;
  return c;
}

std::uint64_t occupied_sites_in_cube(const std::vector<Site>& positions, double radius) {
  const Cube c{radius};
  std::set<Site> sites;
  for (const auto& x : positions) {
    if (cube_contains(c, x)) sites.insert(x);
  }
  return sites.size();
}

std::vector<Site> a_positions(const SimState& state) {
  std::vector<Site> out;
  for (const auto& p : state.particles()) {
    if (p.type == PType::A) out.push_back(p.pos);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t half_region_check(const SimState& state, const SpeedEstimate& speed, double t) {
  if (speed.dim != state.params().d) throw std::invalid_argument("half_region_check: calibration dimension mismatch");
  if (!(speed.slope > 0.0) || !std::isfinite(speed.slope)) {
    throw std::invalid_argument("half_region_check: missing calibration (slope must be positive)");
  }
  if (state.params().rate_A != state.params().rate_B) throw std::invalid_argument("half_region_check: needs D_A == D_B");
  if (t != state.now()) throw std::invalid_argument("half_region_check: state is not at time t");
  return occupied_sites_in_cube(a_positions(state), speed.slope * t / 2.0);
}

double stationarity_margin(double rate, double elapsed, double k) {
  return 3.0 * std::sqrt(rate * elapsed) * k;
}

double chi_square_sf(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_square_sf: dof < 1");
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

StationarityResult poisson_histogram_test(const std::vector<std::uint64_t>& hist, double mu) {
  StationarityResult res;
  res.histogram = hist;
  for (auto h : hist) res.n_sites += h;
  if (!(mu > 0.0)) throw std::invalid_argument("poisson_histogram_test: mu must be positive");
  const double n = static_cast<double>(res.n_sites);
  const auto observed_from = [&](std::size_t c) {
    std::uint64_t s = 0;
    for (std::size_t j = c; j < hist.size(); ++j) s += hist[j];
    return s;
  };

  double pk = std::exp(-mu);
  ChiSquareBin cur;
  for (std::uint32_t c = 0;; ++c) {
    cur.expected += n * pk;
    cur.observed += c < hist.size() ? hist[c] : 0;
    const double tail = n * boost::math::gamma_p(static_cast<double>(c) + 1.0, mu);  // P(X > c)
    if (tail < 5.0) {
      cur.hi = std::numeric_limits<std::uint32_t>::max();
      cur.expected += tail;
      cur.observed += observed_from(c + 1);
      if (cur.expected < 5.0 && !res.bins.empty()) {
        auto& last = res.bins.back();
        last.hi = cur.hi;
        last.expected += cur.expected;
        last.observed += cur.observed;
      } else {
        res.bins.push_back(cur);
      }
      break;
    }
    if (cur.expected >= 5.0) {
      cur.hi = c;
      res.bins.push_back(cur);
      cur = ChiSquareBin{};
      cur.lo = c + 1;
    }
    pk *= mu / (static_cast<double>(c) + 1.0);
  }
  if (res.bins.size() < 2) throw std::invalid_argument("poisson_stationarity_test: too few sites for a chi-square test");
  for (const auto& b : res.bins) {
    const double diff = static_cast<double>(b.observed) - b.expected;
    res.statistic += diff * diff / b.expected;
  }
  res.dof = static_cast<int>(res.bins.size()) - 1;
  res.p = chi_square_sf(res.statistic, res.dof);
  return res;
}

StationarityResult poisson_stationarity_test(std::span<const FreeField> fields, double t, const Box& window,
                                             double k) {
  if (fields.empty()) throw std::invalid_argument("poisson_stationarity_test: no fields");
  const double mu = fields.front().mu;
  StationarityResult res;
  std::vector<std::uint64_t> hist;
  for (const auto& f : fields) {
    if (f.dim != window.dim()) throw std::invalid_argument("poisson_stationarity_test: dimension mismatch");
    if (f.mu != mu) throw std::invalid_argument("poisson_stationarity_test: fields differ in mu");
    if (f.time != t) throw std::invalid_argument("poisson_stationarity_test: field is not at time t");
    const double m = stationarity_margin(f.rate, t - f.start_time, k);
    res.margin = std::max(res.margin, m);
    for (int i = 0; i < f.dim; ++i) {
      if (static_cast<double>(window.lo[i] - f.sampled.lo[i]) < m ||
          static_cast<double>(f.sampled.hi[i] - window.hi[i]) < m) {
        throw std::invalid_argument("poisson_stationarity_test: window is within " + std::to_string(m) +
                                    " sites of the unsampled exterior");
      }
    }
    const auto occ = f.occupancy();
    window.for_each([&](const Site& x) {
      const auto it = occ.find(x);
      const std::uint32_t c = it == occ.end() ? 0 : it->second;
      if (hist.size() <= c) hist.resize(c + 1, 0);
      ++hist[c];
      ++res.n_sites;
    });
  }
  StationarityResult fit = poisson_histogram_test(hist, mu);
  fit.margin = res.margin;
  return fit;
}

StationarityResult poisson_stationarity_test(const FreeField& field, double t, const Box& window, double k) {
  return poisson_stationarity_test(std::span<const FreeField>(&field, 1), t, window, k);
}

std::vector<ScaledPoint> shape_snapshot(const SimState& state, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("shape_snapshot: t must be positive");
  std::vector<ScaledPoint> out;
  for (const auto& x : infected_region(state, t)) {
    ScaledPoint p(static_cast<std::size_t>(x.dim));
    for (int i = 0; i < x.dim; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(x[i]) / t;
    out.push_back(std::move(p));
  }
  return out;
}

double hausdorff_distance(const std::vector<ScaledPoint>& a, const std::vector<ScaledPoint>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff_distance: empty set");
  const auto dist2 = [](const ScaledPoint& p, const ScaledPoint& q) {
    if (p.size() != q.size()) throw std::invalid_argument("hausdorff_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
    return s;
  };
  const auto directed = [&](const std::vector<ScaledPoint>& x, const std::vector<ScaledPoint>& y) {
    double worst = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, dist2(p, q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

}  // namespace abspread
