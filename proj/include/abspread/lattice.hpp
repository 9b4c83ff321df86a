#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace abspread {

inline constexpr int kMaxDim = 3;

// Coordinates beyond the dimension are kept at zero so equality and hashing
// can look at the whole array.
struct Site {
  std::array<std::int64_t, kMaxDim> c{};
  int dim = 1;

  Site() = default;
  explicit Site(int d);
  Site(int d, std::initializer_list<std::int64_t> coords);

  static Site origin(int d) { return Site(d); }

  std::int64_t& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
  std::int64_t operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Site& a, const Site& b) { return a.dim == b.dim && a.c == b.c; }
  friend bool operator!=(const Site& a, const Site& b) { return !(a == b); }
  // Lexicographic; used for deterministic ordering of site sets.
  friend bool operator<(const Site& a, const Site& b) { return a.c < b.c; }

  Site operator+(const Site& o) const;
  Site operator-(const Site& o) const;

  std::string to_string() const;  // "x,y,z"
};

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto v : s.c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

std::int64_t norm_inf(const Site& x);
double norm_l2(const Site& x);
// Exact squared Euclidean norm; distance comparisons go through this.
std::int64_t norm_l2_sq(const Site& x);

// Closed cube C(r) = [-r, r]^d.
struct Cube {
  double radius = 0.0;
};

bool cube_contains(const Cube& c, const Site& x);

// Offsets e_1..e_d followed by e_{d+i} = -e_i.
struct NeighborBasis {
  int dim = 1;
  std::vector<Site> offsets;

  std::size_t size() const { return offsets.size(); }
  const Site& operator[](std::size_t i) const { return offsets[i]; }
};

NeighborBasis neighbor_offsets(int d);

// Inclusive integer box lo..hi per coordinate.
struct Box {
  Site lo;
  Site hi;

  static Box cube(int d, std::int64_t radius);
  int dim() const { return lo.dim; }
  bool contains(const Site& x) const;
  bool empty() const;
  std::uint64_t volume() const;
  // Calls f(site) over the box in scan order (first coordinate slowest).
  template <class F>
  void for_each(F&& f) const;
};

template <class F>
void Box::for_each(F&& f) const {
  if (empty()) return;
  const int d = dim();
  Site x = lo;
  while (true) {
    f(static_cast<const Site&>(x));
    int axis = d - 1;
    while (axis >= 0) {
      if (x[axis] < hi[axis]) {
        ++x[axis];
        break;
      }
      x[axis] = lo[axis];
      --axis;
    }
    if (axis < 0) return;
  }
}

// Parses "x,y,z" with the given dimension.
Site parse_site(const std::string& text, int d);

}  // namespace abspread
