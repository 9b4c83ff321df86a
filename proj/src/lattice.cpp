#include "abspread/lattice.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace abspread {

namespace {

constexpr std::int64_t kCoordLimit = std::int64_t{1} << 62;

void check_dim(int d) {
  if (d < 1 || d > kMaxDim) {
    throw std::invalid_argument("dimension must be in [1, " + std::to_string(kMaxDim) +
                                "], got " + std::to_string(d));
  }
}

}  // namespace

Site::Site(int d) : dim(d) { check_dim(d); }

Site::Site(int d, std::initializer_list<std::int64_t> coords) : dim(d) {
  check_dim(d);
  if (static_cast<int>(coords.size()) != d) {
    throw std::invalid_argument("site needs exactly " + std::to_string(d) + " coordinates");
  }
  int i = 0;
  for (auto v : coords) c[static_cast<std::size_t>(i++)] = v;
}

Site Site::operator+(const Site& o) const {
  assert(dim == o.dim);
  Site r(*this);
  for (int i = 0; i < dim; ++i) {
    r[i] += o[i];
    assert(std::llabs(r[i]) < kCoordLimit);
  }
  return r;
}

Site Site::operator-(const Site& o) const {
  assert(dim == o.dim);
  Site r(*this);
  for (int i = 0; i < dim; ++i) {
    r[i] -= o[i];
    assert(std::llabs(r[i]) < kCoordLimit);
  }
  return r;
}

std::string Site::to_string() const {
  std::string out;
  for (int i = 0; i < dim; ++i) {
    if (i) out += ',';
    out += std::to_string(c[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::int64_t norm_inf(const Site& x) {
  std::int64_t m = 0;
  for (int i = 0; i < x.dim; ++i) m = std::max<std::int64_t>(m, std::llabs(x[i]));
  return m;
}

std::int64_t norm_l2_sq(const Site& x) {
  std::int64_t s = 0;
  for (int i = 0; i < x.dim; ++i) s += x[i] * x[i];
  return s;
}

double norm_l2(const Site& x) { return std::sqrt(static_cast<double>(norm_l2_sq(x))); }

bool cube_contains(const Cube& c, const Site& x) {
  for (int i = 0; i < x.dim; ++i) {
    const double v = static_cast<double>(x[i]);
    if (v < -c.radius || v > c.radius) return false;
  }
  return true;
}

NeighborBasis neighbor_offsets(int d) {
  if (d < 1) throw std::invalid_argument("neighbor_offsets: dimension must be >= 1");
  check_dim(d);
  NeighborBasis b;
  b.dim = d;
  b.offsets.reserve(static_cast<std::size_t>(2 * d));
  for (int i = 0; i < d; ++i) {
    Site e(d);
    e[i] = 1;
    b.offsets.push_back(e);
  }
  for (int i = 0; i < d; ++i) {
    Site e(d);
    e[i] = -1;
    b.offsets.push_back(e);
  }
  return b;
}

Box Box::cube(int d, std::int64_t radius) {
  Box b{Site(d), Site(d)};
  for (int i = 0; i < d; ++i) {
    b.lo[i] = -radius;
    b.hi[i] = radius;
  }
  return b;
}

bool Box::contains(const Site& x) const {
  for (int i = 0; i < dim(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

bool Box::empty() const {
  for (int i = 0; i < dim(); ++i) {
    if (hi[i] < lo[i]) return true;
  }
  return false;
}

std::uint64_t Box::volume() const {
  if (empty()) return 0;
  std::uint64_t v = 1;
  for (int i = 0; i < dim(); ++i) v *= static_cast<std::uint64_t>(hi[i] - lo[i] + 1);
  return v;
}

Site parse_site(const std::string& text, int d) {
  Site s(d);
  int axis = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (axis >= d) throw std::invalid_argument("site '" + text + "' has more than " + std::to_string(d) + " coordinates");
    std::int64_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{}) throw std::invalid_argument("malformed site '" + text + "'");
    s[axis++] = v;
    p = next;
    while (p < end && *p == ' ') ++p;
    if (p < end) {
      if (*p != ',') throw std::invalid_argument("malformed site '" + text + "'");
      ++p;
    }
  }
  if (axis != d) throw std::invalid_argument("site '" + text + "' needs " + std::to_string(d) + " coordinates");
  return s;
}

}  // namespace abspread
