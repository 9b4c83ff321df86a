#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "abspread/lattice.hpp"
#include "abspread/walk.hpp"

namespace abspread {

/// gamma_1 .. gamma_rmax; values[0] is gamma_1.
struct GammaSchedule {
  double gamma0 = 0.0;
  std::int64_t C0 = 2;
  std::vector<double> values;

  /// gamma_r for 1 <= r <= values.size().
  double at(int r) const;
};

GammaSchedule gamma_schedule(double gamma0, std::int64_t C0, int r_max);

struct ConstantsReport {
  double gamma_product = 0.0;        // prod_{j>=1} (1 - 2^{-j/4})^{-1}, truncated
  double gamma_product_upper = 0.0;  // rigorous upper bound including the tail
  bool density_ok = false;           // 0 < gamma0 * product <= 1/2
  std::vector<double> kernel_lhs;    // per r: left minus right side of the kernel constraint
  std::vector<bool> kernel_ok;
  std::vector<double> log_rho0;      // per r: log of the scale-separation left side
  std::vector<bool> scale_ok;
  bool all_ok() const;
};

/// Numeric evaluation of the density, kernel and scale-separation constraints
/// for r = 1..r_max. Failing sets are flagged, not rejected.
ConstantsReport validate_constants(double gamma0, std::int64_t C0, double mu, int d, int r_max, double C4 = 1.0);

/// Integer power with overflow check.
std::int64_t ipow(std::int64_t base, int exp);

/// Delta_r = C0^(6r).
std::int64_t block_delta(std::int64_t C0, int r);

struct BlockIndex {
  int r = 1;
  Site i;
  std::int64_t k = 0;

  bool operator==(const BlockIndex&) const = default;
  std::string to_string() const;
};

struct BlockIndexHash {
  std::size_t operator()(const BlockIndex& b) const noexcept;
};

/// Half-open spatial box [lo, hi) per coordinate.
struct HalfOpenBox {
  Site lo;
  Site hi;

  bool contains(const Site& x) const;
};

/// B_r(i, k): spatial part and time range [t0, t1).
HalfOpenBox block_space(const BlockIndex& b, std::int64_t C0);
/// V_r(i), the spatial part of the enlarged block and of the pedestal.
HalfOpenBox enlarged_space(const BlockIndex& b, std::int64_t C0);
std::int64_t block_t0(const BlockIndex& b, std::int64_t C0);      // k Delta
std::int64_t enlarged_t0(const BlockIndex& b, std::int64_t C0);   // (k-1) Delta, the pedestal time
std::int64_t enlarged_t1(const BlockIndex& b, std::int64_t C0);   // (k+1) Delta, exclusive
BlockIndex parent_of(const BlockIndex& b, std::int64_t C0);
std::vector<BlockIndex> children_of(const BlockIndex& b, std::int64_t C0);
/// The r-block containing the space-time point (x, t).
BlockIndex block_containing(int r, const Site& x, double t, std::int64_t C0);

using Occupancy = std::unordered_map<Site, std::uint32_t, SiteHash>;

/// Particles in the half-open cube [x, x + edge)^d.
std::uint64_t count_cube(const Occupancy& occ, const Site& x, std::int64_t edge);

/// U_r(x, v) on a field evolved to the integer time v.
std::uint64_t count_U(const FreeField& field, const Site& x, std::int64_t v, int r, std::int64_t C0);

/// W_r(x, v): only particles that sat in V_{r+1}(parent.i) at the parent's
/// pedestal time. The field must have been started at that time, so that
/// particle origins are the pedestal positions.
std::uint64_t count_W(const FreeField& field, const Site& x, std::int64_t v, int r, std::int64_t C0,
                      const BlockIndex& parent);

struct MultiscaleParams {
  std::int64_t C0 = 2;
  GammaSchedule schedule;
  double mu = 1.0;
  std::uint64_t work_budget = 20'000'000'000ULL;  // cube evaluations per sweep

  /// gamma_r mu C0^(dr).
  double threshold(int r, int d) const;
};

enum class Label : std::uint8_t { good, bad };

struct BlockLabel {
  BlockIndex idx;
  Label label = Label::good;
  std::optional<bool> inferior;  // unset when the parent pedestal precedes the field
  Label pedestal = Label::good;
};

/// Reference classifiers: brute-force scans of one block on a single field.

/// Pedestal scan on a field sitting at the pedestal time.
Label classify_pedestal(const FreeField& field, const BlockIndex& idx, const MultiscaleParams& mp);

/// Full scan of every integer time in the enlarged block. The field is copied
/// and evolved from its own time, which must not exceed the pedestal time.
/// Inferior is computed when the field starts at the parent's pedestal time.
BlockLabel classify_block(const FreeField& field, const BlockIndex& idx, const MultiscaleParams& mp);

struct SweepStats {
  std::uint64_t cube_checks = 0;
  std::uint64_t w_checks = 0;
  std::uint64_t w_exceeds_u = 0;  // must stay 0
  std::uint64_t jumps = 0;
  std::int64_t t_end = 0;
};

/// Classifies many blocks in one forward pass over the field. Counts are kept
/// on a dense grid updated jump by jump; each integer time is scanned with
/// sliding-cube sums, and a block stops being scanned once decided. Pedestals
/// are classified through the independent occupancy route at their times.
std::vector<BlockLabel> classify_blocks(FreeField field, const std::vector<BlockIndex>& blocks,
                                        const MultiscaleParams& mp, SweepStats* stats = nullptr);

/// Label lookup keyed by block index.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(const std::vector<BlockLabel>& labels);
  void add(const BlockLabel& l);
  const BlockLabel& at(const BlockIndex& b) const;  // throws std::out_of_range on gaps
  bool contains(const BlockIndex& b) const { return map_.count(b) != 0; }
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<BlockIndex, BlockLabel, BlockIndexHash> map_;
};

/// Step path: position xs[j] on [times[j], times[j+1]), the last piece
/// running up to `end`.
struct SpaceTimePath {
  std::vector<double> times;
  std::vector<Site> xs;
  double end = 0.0;
};

/// Distinct r-blocks met by the path.
std::vector<BlockIndex> blocks_on_path(const SpaceTimePath& path, int r, std::int64_t C0);

std::uint64_t phi_along_path(const SpaceTimePath& path, const LabelSet& labels, int r, std::int64_t C0);
/// (r+1)-blocks on the path with a good pedestal that contain a bad r-block.
std::uint64_t psi_along_path(const SpaceTimePath& path, const LabelSet& labels_r, const LabelSet& labels_r1,
                             int r, std::int64_t C0);

struct RecursionCheck {
  std::uint64_t phi_r = 0;
  std::uint64_t phi_r1 = 0;
  std::uint64_t psi_r1 = 0;
  std::uint64_t bound = 0;  // C0^(6(d+1)) (phi_{r+1} + psi_{r+1})
  bool holds = false;
};

RecursionCheck check_recursion(const SpaceTimePath& path, const LabelSet& labels_r, const LabelSet& labels_r1,
                               int r, std::int64_t C0, int d);

/// The integer R with C0^R >= (K4 log t)^(1/d) > C0^(R-1).
int scale_R(double t, double K4, std::int64_t C0, int d);

struct RhoBound {
  double value = 0.0;
  bool vacuous = false;  // value > 1
};

/// 3^(d+1) C0^(6(d+1)(r+1)) exp(-gamma_r mu C0^((d - 3/4) r) / 2).
RhoBound rho_bound(int r, std::int64_t C0, const GammaSchedule& schedule, double mu, int d);

/// CSV rows "r,i...,k,label,inferior,pedestal_label".
std::string blocks_csv(const std::vector<BlockLabel>& labels, int d);

}  // namespace abspread
