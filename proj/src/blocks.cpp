#include "abspread/blocks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

namespace abspread {

namespace {

std::int64_t floordiv(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void check_C0(std::int64_t C0) {
  if (C0 < 2) throw std::invalid_argument("C0 must be an integer >= 2");
}

bool is_integer_time(double v) { return std::floor(v) == v; }

HalfOpenBox bounding(const HalfOpenBox& a, const HalfOpenBox& b) {
  HalfOpenBox r = a;
  for (int s = 0; s < a.lo.dim; ++s) {
    r.lo[s] = std::min(a.lo[s], b.lo[s]);
    r.hi[s] = std::max(a.hi[s], b.hi[s]);
  }
  return r;
}

/// Every x with [x, x + edge)^d inside `box`, scan order; stops when f returns true.
template <typename F>
bool any_cube_in(const HalfOpenBox& box, std::int64_t edge, F&& f) {
  const int d = box.lo.dim;
  Box xs{box.lo, box.hi};
  for (int s = 0; s < d; ++s) xs.hi[s] = box.hi[s] - edge;
  if (xs.empty()) return false;
  bool hit = false;
  xs.for_each([&](const Site& x) {
    if (!hit && f(x)) hit = true;
  });
  return hit;
}

Occupancy occupancy_where(const FreeField& field, const HalfOpenBox& box) {
  Occupancy occ;
  for (const auto& p : field.particles) {
    if (box.contains(p.pos)) ++occ[p.pos];
  }
  return occ;
}

bool pedestal_bad(const Occupancy& occ, const BlockIndex& idx, const MultiscaleParams& mp) {
  const std::int64_t edge = ipow(mp.C0, idx.r);
  const double thr = mp.threshold(idx.r, idx.i.dim);
  return any_cube_in(enlarged_space(idx, mp.C0), edge,
                     [&](const Site& x) { return static_cast<double>(count_cube(occ, x, edge)) < thr; });
}

void check_block(const BlockIndex& b, const MultiscaleParams& mp) {
  check_C0(mp.C0);
  if (b.r < 1) throw std::invalid_argument("block scale must be >= 1");
  if (static_cast<std::size_t>(b.r) > mp.schedule.values.size()) {
    throw std::invalid_argument("gamma schedule does not reach scale " + std::to_string(b.r));
  }
}

}  // namespace

double GammaSchedule::at(int r) const {
  if (r < 1 || static_cast<std::size_t>(r) > values.size()) {
    throw std::out_of_range("gamma_" + std::to_string(r) + " is outside the schedule");
  }
  return values[static_cast<std::size_t>(r - 1)];
}

GammaSchedule gamma_schedule(double gamma0, std::int64_t C0, int r_max) {
  if (!(gamma0 > 0.0)) throw std::invalid_argument("gamma0 must be > 0");
  check_C0(C0);
  GammaSchedule g{gamma0, C0, {}};
  double prod = 1.0;
  for (int r = 1; r <= r_max; ++r) {
    g.values.push_back(gamma0 * prod);
    prod /= 1.0 - std::pow(static_cast<double>(C0), -r / 4.0);
  }
  return g;
}

bool ConstantsReport::all_ok() const {
  return density_ok && std::all_of(kernel_ok.begin(), kernel_ok.end(), [](bool b) { return b; }) &&
         std::all_of(scale_ok.begin(), scale_ok.end(), [](bool b) { return b; });
}

ConstantsReport validate_constants(double gamma0, std::int64_t C0, double mu, int d, int r_max, double C4) {
  check_C0(C0);
  ConstantsReport rep;
  // log prod = sum_j -log(1 - q^j), q = 2^{-1/4}; tail after J bounded by q^{J+1} / ((1-q)(1-q^{J+1}))
  const double q = std::pow(2.0, -0.25);
  constexpr int J = 400;
  double log_prod = 0.0;
  for (int j = 1; j <= J; ++j) log_prod -= std::log1p(-std::pow(q, j));
  const double qj = std::pow(q, J + 1);
  const double tail = qj / ((1.0 - q) * (1.0 - qj));
  rep.gamma_product = std::exp(log_prod);
  rep.gamma_product_upper = std::exp(log_prod + tail);
  rep.density_ok = gamma0 > 0.0 && gamma0 * rep.gamma_product_upper <= 0.5;

  const double c = static_cast<double>(C0);
  for (int r = 1; r <= r_max; ++r) {
    const double lhs = std::pow(c, -r / 2.0) - (1.0 - C4 * std::pow(r * std::log(c), d) / std::pow(c, r)) *
                                                   (-std::expm1(-std::pow(c, -r / 2.0))) /
                                                   (1.0 - std::pow(c, -r / 4.0));
    const double rhs = -0.5 * std::pow(c, -3.0 * r / 4.0);
    rep.kernel_lhs.push_back(lhs - rhs);
    rep.kernel_ok.push_back(lhs <= rhs);
    const double log_rho = (d + 1) * std::log(3.0) + 6.0 * (d + 1) * (r + 1) * std::log(c) -
                           0.5 * gamma0 * mu * std::pow(c, (d - 0.75) * r);
    rep.log_rho0.push_back(log_rho);
    rep.scale_ok.push_back(log_rho <= 0.0);
  }
  return rep;
}

std::int64_t ipow(std::int64_t base, int exp) {
  if (exp < 0) throw std::invalid_argument("ipow: negative exponent");
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > std::numeric_limits<std::int64_t>::max() / std::max<std::int64_t>(base, 1)) {
      throw std::overflow_error("ipow: " + std::to_string(base) + "^" + std::to_string(exp) + " overflows");
    }
    r *= base;
  }
  return r;
}

std::int64_t block_delta(std::int64_t C0, int r) {
  check_C0(C0);
  return ipow(C0, 6 * r);
}

std::string BlockIndex::to_string() const {
  return "r=" + std::to_string(r) + " i=(" + i.to_string() + ") k=" + std::to_string(k);
}

std::size_t BlockIndexHash::operator()(const BlockIndex& b) const noexcept {
  std::size_t h = SiteHash{}(b.i);
  h ^= std::hash<std::int64_t>{}(b.k) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= std::hash<int>{}(b.r) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

bool HalfOpenBox::contains(const Site& x) const {
  for (int s = 0; s < lo.dim; ++s) {
    if (x[s] < lo[s] || x[s] >= hi[s]) return false;
  }
  return true;
}

HalfOpenBox block_space(const BlockIndex& b, std::int64_t C0) {
  const auto delta = block_delta(C0, b.r);
  HalfOpenBox box{b.i, b.i};
  for (int s = 0; s < b.i.dim; ++s) {
    box.lo[s] = b.i[s] * delta;
    box.hi[s] = (b.i[s] + 1) * delta;
  }
  return box;
}

HalfOpenBox enlarged_space(const BlockIndex& b, std::int64_t C0) {
  const auto delta = block_delta(C0, b.r);
  HalfOpenBox box{b.i, b.i};
  for (int s = 0; s < b.i.dim; ++s) {
    box.lo[s] = (b.i[s] - 3) * delta;
    box.hi[s] = (b.i[s] + 4) * delta;
  }
  return box;
}

std::int64_t block_t0(const BlockIndex& b, std::int64_t C0) { return b.k * block_delta(C0, b.r); }
std::int64_t enlarged_t0(const BlockIndex& b, std::int64_t C0) { return (b.k - 1) * block_delta(C0, b.r); }
std::int64_t enlarged_t1(const BlockIndex& b, std::int64_t C0) { return (b.k + 1) * block_delta(C0, b.r); }

BlockIndex parent_of(const BlockIndex& b, std::int64_t C0) {
  const auto f = ipow(C0, 6);
  BlockIndex p{b.r + 1, b.i, floordiv(b.k, f)};
  for (int s = 0; s < b.i.dim; ++s) p.i[s] = floordiv(b.i[s], f);
  return p;
}

std::vector<BlockIndex> children_of(const BlockIndex& b, std::int64_t C0) {
  if (b.r < 2) throw std::invalid_argument("scale-1 blocks have no children");
  const auto f = ipow(C0, 6);
  std::vector<BlockIndex> out;
  Box space{b.i, b.i};
  for (int s = 0; s < b.i.dim; ++s) {
    space.lo[s] = b.i[s] * f;
    space.hi[s] = (b.i[s] + 1) * f - 1;
  }
  for (std::int64_t q = b.k * f; q < (b.k + 1) * f; ++q) {
    space.for_each([&](const Site& j) { out.push_back({b.r - 1, j, q}); });
  }
  return out;
}

BlockIndex block_containing(int r, const Site& x, double t, std::int64_t C0) {
  const auto delta = block_delta(C0, r);
  BlockIndex b{r, x, static_cast<std::int64_t>(std::floor(t / static_cast<double>(delta)))};
  for (int s = 0; s < x.dim; ++s) b.i[s] = floordiv(x[s], delta);
  return b;
}

std::uint64_t count_cube(const Occupancy& occ, const Site& x, std::int64_t edge) {
  if (edge <= 0) return 0;
  const HalfOpenBox cube = [&] {
    HalfOpenBox c{x, x};
    for (int s = 0; s < x.dim; ++s) c.hi[s] = x[s] + edge;
    return c;
  }();
  std::uint64_t cells = 1;
  for (int s = 0; s < x.dim; ++s) cells *= static_cast<std::uint64_t>(edge);
  std::uint64_t n = 0;
  if (cells <= occ.size()) {
    Box b{cube.lo, cube.hi};
    for (int s = 0; s < x.dim; ++s) b.hi[s] -= 1;
    b.for_each([&](const Site& y) {
      if (auto it = occ.find(y); it != occ.end()) n += it->second;
    });
  } else {
    for (const auto& [y, c] : occ) {
      if (cube.contains(y)) n += c;
    }
  }
  return n;
}

std::uint64_t count_U(const FreeField& field, const Site& x, std::int64_t v, int r, std::int64_t C0) {
  if (field.time != static_cast<double>(v)) {
    throw std::invalid_argument("count_U: field is at t = " + std::to_string(field.time) + ", not " + std::to_string(v));
  }
  const auto edge = ipow(C0, r);
  HalfOpenBox cube{x, x};
  for (int s = 0; s < x.dim; ++s) cube.hi[s] = x[s] + edge;
  std::uint64_t n = 0;
  for (const auto& p : field.particles) n += cube.contains(p.pos);
  return n;
}

std::uint64_t count_W(const FreeField& field, const Site& x, std::int64_t v, int r, std::int64_t C0,
                      const BlockIndex& parent) {
  if (parent.r != r + 1) throw std::invalid_argument("count_W: parent must be an (r+1)-block");
  const auto ped = enlarged_t0(parent, C0);
  if (field.start_time != static_cast<double>(ped)) {
    throw std::invalid_argument("count_W: no snapshot at the parent pedestal time " + std::to_string(ped));
  }
  if (v < ped) throw std::invalid_argument("count_W: time precedes the parent pedestal");
  if (field.time != static_cast<double>(v)) {
    throw std::invalid_argument("count_W: field is at t = " + std::to_string(field.time) + ", not " + std::to_string(v));
  }
  const auto region = enlarged_space(parent, C0);
  const auto edge = ipow(C0, r);
  HalfOpenBox cube{x, x};
  for (int s = 0; s < x.dim; ++s) cube.hi[s] = x[s] + edge;
  std::uint64_t n = 0;
  for (const auto& p : field.particles) n += cube.contains(p.pos) && region.contains(p.origin);
  return n;
}

double MultiscaleParams::threshold(int r, int d) const {
  return schedule.at(r) * mu * std::pow(static_cast<double>(C0), d * r);
}

Label classify_pedestal(const FreeField& field, const BlockIndex& idx, const MultiscaleParams& mp) {
  check_block(idx, mp);
  const auto t = enlarged_t0(idx, mp.C0);
  if (field.time != static_cast<double>(t)) {
    throw std::invalid_argument("classify_pedestal: field must sit at the pedestal time " + std::to_string(t));
  }
  return pedestal_bad(occupancy_where(field, enlarged_space(idx, mp.C0)), idx, mp) ? Label::bad : Label::good;
}

BlockLabel classify_block(const FreeField& field, const BlockIndex& idx, const MultiscaleParams& mp) {
  check_block(idx, mp);
  const auto t0 = enlarged_t0(idx, mp.C0);
  const auto t1 = enlarged_t1(idx, mp.C0);
  if (field.time > static_cast<double>(t0)) {
    throw std::invalid_argument("classify_block: field already past the pedestal time");
  }
  const BlockIndex parent = parent_of(idx, mp.C0);
  const bool want_inferior = field.start_time == static_cast<double>(enlarged_t0(parent, mp.C0));
  const auto parent_region = enlarged_space(parent, mp.C0);
  const auto region = enlarged_space(idx, mp.C0);
  const auto edge = ipow(mp.C0, idx.r);
  const double thr = mp.threshold(idx.r, idx.i.dim);

  BlockLabel out{idx, Label::good, std::nullopt, Label::good};
  bool bad = false, inferior = false;
  FreeField f = field;
  for (std::int64_t v = t0; v < t1; ++v) {
    evolve_free_system(f, static_cast<double>(v));
    const Occupancy occ = occupancy_where(f, region);
    if (v == t0) out.pedestal = pedestal_bad(occ, idx, mp) ? Label::bad : Label::good;
    if (!bad) {
      bad = any_cube_in(region, edge, [&](const Site& x) { return static_cast<double>(count_cube(occ, x, edge)) < thr; });
    }
    if (want_inferior && !inferior) {
      Occupancy occ_w;
      for (const auto& p : f.particles) {
        if (region.contains(p.pos) && parent_region.contains(p.origin)) ++occ_w[p.pos];
      }
      inferior =
          any_cube_in(region, edge, [&](const Site& x) { return static_cast<double>(count_cube(occ_w, x, edge)) < thr; });
    }
    if (bad && (!want_inferior || inferior)) break;
  }
  out.label = bad ? Label::bad : Label::good;
  if (want_inferior) out.inferior = inferior;
  return out;
}

namespace {

struct SweepBlock {
  BlockIndex idx;
  HalfOpenBox region;
  std::int64_t t0 = 0, t1 = 0;
  int parent = -1;  // index into parents, -1 when inferior is not computed
  bool started = false;
  bool bad = false;
  bool inferior = false;
  bool pedestal_bad = false;
  bool done() const { return bad && (parent < 0 || inferior); }
};

/// Dense array over a box of cube origins.
class OriginGrid {
 public:
  OriginGrid() = default;
  OriginGrid(const HalfOpenBox& box, std::int64_t edge) : box_(box), edge_(edge), d_(box.lo.dim) {
    std::int64_t vol = 1;
    for (int s = d_ - 1; s >= 0; --s) {
      stride_[static_cast<std::size_t>(s)] = vol;
      vol *= std::max<std::int64_t>(0, box.hi[s] - box.lo[s]);
    }
    val_.assign(static_cast<std::size_t>(vol), 0);
  }

  const HalfOpenBox& box() const { return box_; }
  std::size_t size() const { return val_.size(); }
  std::int32_t& at(std::size_t flat) { return val_[flat]; }
  std::int32_t at(std::size_t flat) const { return val_[flat]; }

  std::int64_t index(const Site& x) const {
    std::int64_t off = 0;
    for (int s = 0; s < d_; ++s) {
      if (x[s] < box_.lo[s] || x[s] >= box_.hi[s]) return -1;
      off += (x[s] - box_.lo[s]) * stride_[static_cast<std::size_t>(s)];
    }
    return off;
  }

  Site origin(std::size_t flat) const {
    Site x = box_.lo;
    auto rem = static_cast<std::int64_t>(flat);
    for (int s = 0; s < d_; ++s) {
      const auto st = stride_[static_cast<std::size_t>(s)];
      x[s] += rem / st;
      rem %= st;
    }
    return x;
  }

  /// f(flat) for every origin whose cube [x, x + edge)^d holds y.
  template <typename F>
  void for_cubes_holding(const Site& y, F&& f) const {
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    for (int s = 0; s < d_; ++s) {
      const auto su = static_cast<std::size_t>(s);
      lo[su] = std::max(box_.lo[s], y[s] - edge_ + 1);
      hi[su] = std::min(box_.hi[s], y[s] + 1);
      if (lo[su] >= hi[su]) return;
    }
    for_range(lo, hi, std::forward<F>(f));
  }

  /// f(flat) for every origin x with lo <= x < hi (clipped to the grid).
  template <typename F>
  void for_box(const HalfOpenBox& b, F&& f) const {
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    for (int s = 0; s < d_; ++s) {
      const auto su = static_cast<std::size_t>(s);
      lo[su] = std::max(box_.lo[s], b.lo[s]);
      hi[su] = std::min(box_.hi[s], b.hi[s]);
      if (lo[su] >= hi[su]) return;
    }
    for_range(lo, hi, std::forward<F>(f));
  }

 private:
  template <typename F>
  void for_range(const std::array<std::int64_t, kMaxDim>& lo, const std::array<std::int64_t, kMaxDim>& hi,
                 F&& f) const {
    std::array<std::int64_t, kMaxDim> x = lo;
    for (;;) {
      std::int64_t off = 0;
      for (int s = 0; s < d_; ++s) {
        const auto su = static_cast<std::size_t>(s);
        off += (x[su] - box_.lo[s]) * stride_[su];
      }
      f(static_cast<std::size_t>(off));
      int s = d_ - 1;
      for (; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        if (++x[su] < hi[su]) break;
        x[su] = lo[su];
      }
      if (s < 0) return;
    }
  }

  HalfOpenBox box_;
  std::int64_t edge_ = 1;
  int d_ = 1;
  std::array<std::int64_t, kMaxDim> stride_{};
  std::vector<std::int32_t> val_;
};

/// Origins of the cubes scanned for a block: [lo, hi - edge + 1).
HalfOpenBox origin_range(const HalfOpenBox& region, std::int64_t edge) {
  HalfOpenBox o = region;
  for (int s = 0; s < region.lo.dim; ++s) o.hi[s] = region.hi[s] - edge + 1;
  return o;
}

bool empty_box(const HalfOpenBox& b) {
  for (int s = 0; s < b.lo.dim; ++s) {
    if (b.lo[s] >= b.hi[s]) return true;
  }
  return false;
}

struct ScaleState {
  int r = 1;
  std::int64_t edge = 1;
  std::int64_t delta = 1;
  double thr = 0.0;
  OriginGrid U;
  std::vector<std::uint32_t> stamp;  // last step an origin was touched
  std::vector<std::uint32_t> touched;
  std::vector<int> parents;  // parents whose children live on this scale
};

struct ParentMask {
  BlockIndex idx;
  HalfOpenBox region;
  std::int64_t time = 0;
  int scale = 0;  // slot of the children's scale
  bool live = false;
  std::vector<std::uint8_t> flag;  // per particle slot
  HalfOpenBox origins;  // scan ranges of its children
  OriginGrid W;         // same layout as the scale's U grid
};

}  // namespace

std::vector<BlockLabel> classify_blocks(FreeField field, const std::vector<BlockIndex>& blocks,
                                        const MultiscaleParams& mp, SweepStats* stats) {
  SweepStats local;
  SweepStats& st = stats ? *stats : local;
  if (blocks.empty()) return {};
  if (!is_integer_time(field.time)) throw std::invalid_argument("classify_blocks: field time must be an integer");
  const int d = field.dim;
  const auto T0 = static_cast<std::int64_t>(field.time);

  std::vector<SweepBlock> sb;
  std::vector<ParentMask> parents;
  std::vector<ScaleState> scales;
  std::unordered_map<int, int> scale_slot;
  std::unordered_map<BlockIndex, int, BlockIndexHash> parent_slot;
  std::unordered_map<BlockIndex, std::vector<std::size_t>, BlockIndexHash> slots_of;
  std::vector<HalfOpenBox> scale_box, parent_box;
  sb.reserve(blocks.size());
  std::int64_t t_end = std::numeric_limits<std::int64_t>::min();
  for (const auto& b : blocks) {
    check_block(b, mp);
    if (b.i.dim != d) throw std::invalid_argument("block " + b.to_string() + " has wrong dimension");
    SweepBlock s{b, enlarged_space(b, mp.C0), enlarged_t0(b, mp.C0), enlarged_t1(b, mp.C0)};
    if (s.t0 < T0) throw std::invalid_argument("field starts after the pedestal of " + b.to_string());
    const auto edge = ipow(mp.C0, b.r);
    const auto origins = origin_range(s.region, edge);
    auto [sit, new_scale] = scale_slot.try_emplace(b.r, static_cast<int>(scales.size()));
    if (new_scale) {
      ScaleState sc;
      sc.r = b.r;
      sc.edge = edge;
      sc.delta = block_delta(mp.C0, b.r);
      sc.thr = mp.threshold(b.r, d);
      scales.push_back(std::move(sc));
      scale_box.push_back(origins);
    } else {
      scale_box[static_cast<std::size_t>(sit->second)] =
          bounding(scale_box[static_cast<std::size_t>(sit->second)], origins);
    }
    const BlockIndex p = parent_of(b, mp.C0);
    const auto pt = enlarged_t0(p, mp.C0);
    if (pt >= T0) {
      auto [it, fresh] = parent_slot.try_emplace(p, static_cast<int>(parents.size()));
      if (fresh) {
        ParentMask pm;
        pm.idx = p;
        pm.region = enlarged_space(p, mp.C0);
        pm.time = pt;
        pm.scale = sit->second;
        parents.push_back(std::move(pm));
        parent_box.push_back(origins);
        scales[static_cast<std::size_t>(sit->second)].parents.push_back(it->second);
      } else {
        parent_box[static_cast<std::size_t>(it->second)] =
            bounding(parent_box[static_cast<std::size_t>(it->second)], origins);
      }
      s.parent = it->second;
    }
    t_end = std::max(t_end, s.t1 - 1);
    slots_of[b].push_back(sb.size());
    sb.push_back(s);
  }
  st.t_end = t_end;

  const auto np = field.particles.size();
  for (std::size_t k = 0; k < scales.size(); ++k) {
    auto& sc = scales[k];
    sc.U = OriginGrid(scale_box[k], sc.edge);
    sc.stamp.assign(sc.U.size(), 0);
    for (const auto& p : field.particles) sc.U.for_cubes_holding(p.pos, [&](std::size_t f) { ++sc.U.at(f); });
  }
  for (std::size_t k = 0; k < parents.size(); ++k) {
    parents[k].origins = parent_box[k];
    parents[k].W = OriginGrid(scale_box[static_cast<std::size_t>(parents[k].scale)],
                              scales[static_cast<std::size_t>(parents[k].scale)].edge);
    parents[k].flag.assign(np, 0);
  }

  const auto charge = [&](std::uint64_t n) {
    st.cube_checks += n;
    if (st.cube_checks > mp.work_budget) {
      throw std::runtime_error("block classification exceeds the work budget of " + std::to_string(mp.work_budget) +
                               " cube evaluations");
    }
  };

  // jump buckets: bucket b holds clocks in (T0 + b - 1, T0 + b]
  const auto horizon = static_cast<std::size_t>(t_end - T0 + 1);
  std::vector<std::vector<std::uint32_t>> bucket(horizon);
  auto bucket_of = [&](double tau) -> std::int64_t {
    if (tau == kNever) return -1;
    return static_cast<std::int64_t>(std::ceil(tau - static_cast<double>(T0)));
  };
  auto place = [&](std::size_t j, std::int64_t min_bucket) {
    auto b = std::max(bucket_of(field.particles[j].next_jump), min_bucket);
    if (field.particles[j].next_jump == kNever || b >= static_cast<std::int64_t>(horizon)) return;
    bucket[static_cast<std::size_t>(b)].push_back(static_cast<std::uint32_t>(j));
  };
  for (std::size_t j = 0; j < np; ++j) place(j, 0);

  const auto basis = neighbor_offsets(d);
  std::vector<std::size_t> order(sb.size());
  for (std::size_t b = 0; b < sb.size(); ++b) order[b] = b;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sb[a].t0 < sb[b].t0; });
  std::size_t next_start = 0;
  std::vector<std::size_t> active;
  std::uint32_t step = 0;

  const auto touch = [&](ScaleState& sc, std::size_t f) {
    if (sc.stamp[f] != step) {
      sc.stamp[f] = step;
      sc.touched.push_back(static_cast<std::uint32_t>(f));
    }
  };

  for (std::int64_t v = T0; v <= t_end; ++v) {
    ++step;
    // jumps in (v-1, v]
    const auto bi = static_cast<std::size_t>(v - T0);
    if (v > T0) {
      auto list = std::move(bucket[bi]);
      bucket[bi].clear();
      for (std::uint32_t j : list) {
        auto& p = field.particles[j];
        const Site from = p.pos;
        while (p.next_jump <= static_cast<double>(v)) {
          p.pos = sample_jump_target(p.pos, basis, p.rng);
          p.next_jump = sample_jump_time(field.rate, p.next_jump, p.rng);
          ++st.jumps;
        }
        if (p.pos != from) {
          for (auto& sc : scales) {
            sc.U.for_cubes_holding(from, [&](std::size_t f) { --sc.U.at(f); touch(sc, f); });
            sc.U.for_cubes_holding(p.pos, [&](std::size_t f) { ++sc.U.at(f); touch(sc, f); });
          }
          for (auto& pm : parents) {
            if (!pm.live || !pm.flag[j]) continue;
            auto& sc = scales[static_cast<std::size_t>(pm.scale)];
            pm.W.for_cubes_holding(from, [&](std::size_t f) { --pm.W.at(f); touch(sc, f); });
            pm.W.for_cubes_holding(p.pos, [&](std::size_t f) { ++pm.W.at(f); touch(sc, f); });
          }
        }
        place(j, static_cast<std::int64_t>(bi) + 1);
      }
    }
    field.time = static_cast<double>(v);

    // parent pedestals: freeze the particle set, then a full W <= U pass
    for (auto& pm : parents) {
      if (pm.time != v) continue;
      pm.live = true;
      for (std::size_t j = 0; j < np; ++j) {
        if (!pm.region.contains(field.particles[j].pos)) continue;
        pm.flag[j] = 1;
        pm.W.for_cubes_holding(field.particles[j].pos, [&](std::size_t f) { ++pm.W.at(f); });
      }
      const auto& sc = scales[static_cast<std::size_t>(pm.scale)];
      std::uint64_t scanned = 0;
      pm.W.for_box(pm.origins, [&](std::size_t f) {
        ++scanned;
        if (pm.W.at(f) > sc.U.at(f)) ++st.w_exceeds_u;
      });
      st.w_checks += scanned;
      charge(scanned);
    }

    // newly started blocks: pedestal through the occupancy route, then a full scan
    const std::size_t first_new = active.size();
    while (next_start < order.size() && sb[order[next_start]].t0 == v) active.push_back(order[next_start++]);
    if (active.size() > first_new) {
      HalfOpenBox u = sb[active[first_new]].region;
      for (std::size_t a = first_new; a < active.size(); ++a) u = bounding(u, sb[active[a]].region);
      const Occupancy occ = occupancy_where(field, u);
      for (std::size_t a = first_new; a < active.size(); ++a) {
        auto& b = sb[active[a]];
        b.started = true;
        b.pedestal_bad = pedestal_bad(occ, b.idx, mp);
        const auto& sc = scales[static_cast<std::size_t>(scale_slot.at(b.idx.r))];
        const auto origins = origin_range(b.region, sc.edge);
        if (empty_box(origins)) continue;
        const ParentMask* pm = b.parent >= 0 ? &parents[static_cast<std::size_t>(b.parent)] : nullptr;
        std::uint64_t scanned = 0;
        sc.U.for_box(origins, [&](std::size_t f) {
          ++scanned;
          if (static_cast<double>(sc.U.at(f)) < sc.thr) b.bad = true;
        });
        charge(scanned);
        if (pm) {
          pm->W.for_box(origins, [&](std::size_t f) {
            if (static_cast<double>(pm->W.at(f)) < sc.thr) b.inferior = true;
          });
        }
      }
    }
    std::erase_if(active, [&](std::size_t a) { return sb[a].t1 <= v || sb[a].done(); });

    // cubes whose counts changed since the last integer time
    for (auto& sc : scales) {
      const bool open = std::any_of(active.begin(), active.end(), [&](std::size_t a) { return sb[a].idx.r == sc.r; });
      bool any_live = false;
      for (int pi : sc.parents) any_live = any_live || parents[static_cast<std::size_t>(pi)].live;
      if (!open && !any_live) {
        sc.touched.clear();
        continue;
      }
      charge(sc.touched.size());
      for (std::uint32_t f : sc.touched) {
        const auto u = sc.U.at(f);
        bool low_w = false;
        for (int pi : sc.parents) {
          const auto& pm = parents[static_cast<std::size_t>(pi)];
          if (!pm.live) continue;
          const auto w = pm.W.at(f);
          ++st.w_checks;
          if (w > u) ++st.w_exceeds_u;
          low_w = low_w || static_cast<double>(w) < sc.thr;
        }
        const bool low_u = static_cast<double>(u) < sc.thr;
        if (!open || (!low_u && !low_w)) continue;
        const Site x = sc.U.origin(f);
        // active blocks of this scale whose scan range holds x
        std::array<std::int64_t, kMaxDim> ilo{}, ihi{};
        for (int s = 0; s < d; ++s) {
          ilo[static_cast<std::size_t>(s)] = floordiv(x[s] + sc.edge + sc.delta - 1, sc.delta) - 4;
          ihi[static_cast<std::size_t>(s)] = floordiv(x[s], sc.delta) + 3;
        }
        const auto kc = floordiv(v, sc.delta);
        BlockIndex q{sc.r, Site(d), 0};
        std::array<std::int64_t, kMaxDim> i = ilo;
        for (;;) {
          for (int s = 0; s < d; ++s) q.i[s] = i[static_cast<std::size_t>(s)];
          for (std::int64_t k = kc; k <= kc + 1; ++k) {
            q.k = k;
            const auto it = slots_of.find(q);
            if (it == slots_of.end()) continue;
            for (auto a : it->second) {
              auto& b = sb[a];
              if (!b.started || b.t1 <= v) continue;
              if (low_u) b.bad = true;
              if (b.parent >= 0 && !b.inferior) {
                const auto& pm = parents[static_cast<std::size_t>(b.parent)];
                if (pm.live && static_cast<double>(pm.W.at(f)) < sc.thr) b.inferior = true;
              }
            }
          }
          int s = d - 1;
          for (; s >= 0; --s) {
            const auto su = static_cast<std::size_t>(s);
            if (++i[su] <= ihi[su]) break;
            i[su] = ilo[su];
          }
          if (s < 0) break;
        }
      }
      sc.touched.clear();
    }
    std::erase_if(active, [&](std::size_t a) { return sb[a].done(); });
    if (active.empty() && next_start == order.size()) break;
  }

  std::vector<BlockLabel> out;
  out.reserve(sb.size());
  for (const auto& s : sb) {
    BlockLabel l{s.idx, s.bad ? Label::bad : Label::good, std::nullopt, s.pedestal_bad ? Label::bad : Label::good};
    if (s.parent >= 0) l.inferior = s.inferior;
    out.push_back(l);
  }
  return out;
}

LabelSet::LabelSet(const std::vector<BlockLabel>& labels) {
  for (const auto& l : labels) add(l);
}

void LabelSet::add(const BlockLabel& l) { map_.insert_or_assign(l.idx, l); }

const BlockLabel& LabelSet::at(const BlockIndex& b) const {
  auto it = map_.find(b);
  if (it == map_.end()) throw std::out_of_range("no label for block " + b.to_string());
  return it->second;
}

std::vector<BlockIndex> blocks_on_path(const SpaceTimePath& path, int r, std::int64_t C0) {
  if (path.times.size() != path.xs.size() || path.times.empty()) {
    throw std::invalid_argument("path needs matching, nonempty times and positions");
  }
  const auto delta = static_cast<double>(block_delta(C0, r));
  std::vector<BlockIndex> out;
  std::unordered_map<BlockIndex, bool, BlockIndexHash> seen;
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    const double a = path.times[j];
    const double b = j + 1 < path.times.size() ? path.times[j + 1] : path.end;
    if (!(b > a)) continue;
    const BlockIndex first = block_containing(r, path.xs[j], a, C0);
    // the piece covers [a, b); the last block touched holds times just below b
    const auto k_last = static_cast<std::int64_t>(std::ceil(b / delta)) - 1;
    for (std::int64_t k = first.k; k <= k_last; ++k) {
      BlockIndex blk = first;
      blk.k = k;
      if (seen.emplace(blk, true).second) out.push_back(blk);
    }
  }
  return out;
}

std::uint64_t phi_along_path(const SpaceTimePath& path, const LabelSet& labels, int r, std::int64_t C0) {
  std::uint64_t n = 0;
  for (const auto& b : blocks_on_path(path, r, C0)) n += labels.at(b).label == Label::bad;
  return n;
}

std::uint64_t psi_along_path(const SpaceTimePath& path, const LabelSet& labels_r, const LabelSet& labels_r1, int r,
                             std::int64_t C0) {
  std::uint64_t n = 0;
  for (const auto& p : blocks_on_path(path, r + 1, C0)) {
    if (labels_r1.at(p).pedestal != Label::good) continue;
    const auto kids = children_of(p, C0);
    n += std::any_of(kids.begin(), kids.end(), [&](const BlockIndex& c) { return labels_r.at(c).label == Label::bad; });
  }
  return n;
}

RecursionCheck check_recursion(const SpaceTimePath& path, const LabelSet& labels_r, const LabelSet& labels_r1,
                               int r, std::int64_t C0, int d) {
  RecursionCheck rc;
  rc.phi_r = phi_along_path(path, labels_r, r, C0);
  rc.phi_r1 = phi_along_path(path, labels_r1, r + 1, C0);
  rc.psi_r1 = psi_along_path(path, labels_r, labels_r1, r, C0);
  rc.bound = static_cast<std::uint64_t>(ipow(C0, 6 * (d + 1))) * (rc.phi_r1 + rc.psi_r1);
  rc.holds = rc.phi_r <= rc.bound;
  return rc;
}

int scale_R(double t, double K4, std::int64_t C0, int d) {
  if (!(t > 1.0)) throw std::invalid_argument("scale_R: t must exceed 1");
  if (!(K4 > 0.0)) throw std::invalid_argument("scale_R: K4 must be > 0");
  check_C0(C0);
  const double target = std::pow(K4 * std::log(t), 1.0 / d);
  const double c = static_cast<double>(C0);
  constexpr double kRel = 1e-12;
  int R = static_cast<int>(std::ceil(std::log(target) / std::log(c)));
  while (std::pow(c, R) < target * (1.0 - kRel)) ++R;
  while (std::pow(c, R - 1) >= target * (1.0 - kRel)) --R;
  return R;
}

RhoBound rho_bound(int r, std::int64_t C0, const GammaSchedule& schedule, double mu, int d) {
  if (r < 1) throw std::invalid_argument("rho_bound: r must be >= 1");
  const double c = static_cast<double>(C0);
  const double log_v = (d + 1) * std::log(3.0) + 6.0 * (d + 1) * (r + 1) * std::log(c) -
                       0.5 * schedule.at(r) * mu * std::pow(c, (d - 0.75) * r);
  RhoBound b;
  b.value = std::exp(log_v);
  b.vacuous = b.value > 1.0;
  return b;
}

std::string blocks_csv(const std::vector<BlockLabel>& labels, int d) {
  std::ostringstream os;
  os << "r";
  for (int s = 0; s < d; ++s) os << ",i" << s + 1;
  os << ",k,label,inferior,pedestal_label\n";
  for (const auto& l : labels) {
    os << l.idx.r;
    for (int s = 0; s < d; ++s) os << ',' << l.idx.i[s];
    os << ',' << l.idx.k << ',' << (l.label == Label::bad ? "bad" : "good") << ','
       << (l.inferior ? (*l.inferior ? "1" : "0") : "") << ',' << (l.pedestal == Label::bad ? "bad" : "good") << '\n';
  }
  return os.str();
}

}  // namespace abspread
