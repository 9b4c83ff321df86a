#include "doctest.h"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "abspread/walk.hpp"

using namespace abspread;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("substreams are reproducible and distinct") {
  RngStream s{42, 3};
  auto a = s.substream(Domain::walk, 9);
  auto b = s.substream(Domain::walk, 9);
  auto c = s.substream(Domain::walk, 10);
  auto e = RngStream{42, 4}.substream(Domain::walk, 9);
  for (int i = 0; i < 100; ++i) {
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
    CHECK(va != e());
  }
}

TEST_CASE("sample_jump_time") {
  auto rng = RngStream{1, 0}.substream(Domain::aux);
  CHECK(sample_jump_time(0.0, 3.0, rng) == kNever);
  CHECK_THROWS_AS(sample_jump_time(-1.0, 0.0, rng), std::invalid_argument);

  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_jump_time(1.0, 0.0, rng);
  CHECK(std::abs(sum / n - 1.0) < 0.01);

  int over = 0;
  for (int i = 0; i < n; ++i) over += sample_jump_time(2.0, 5.0, rng) - 5.0 > 1.0;
  const double p = std::exp(-2.0);
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(over) / n - p) < 3 * sigma);
}

TEST_CASE("sample_jump_target is uniform over neighbours") {
  auto rng = RngStream{2, 0}.substream(Domain::aux);
  const int n = 1000000;
  {
    const auto basis = neighbor_offsets(1);
    int plus = 0;
    for (int i = 0; i < n; ++i) plus += sample_jump_target(Site(1), basis, rng)[0] == 1;
    CHECK(std::abs(plus / double(n) - 0.5) < 3 * std::sqrt(0.25 / n));
  }
  {
    const auto basis = neighbor_offsets(2);
    std::array<int, 4> hits{};
    for (int i = 0; i < n; ++i) {
      const Site y = sample_jump_target(Site(2, {5, -1}), basis, rng);
      const Site e = y - Site(2, {5, -1});
      CHECK(norm_l2_sq(e) == 1);
      for (std::size_t k = 0; k < 4; ++k) hits[k] += (e == basis[k]);
    }
    for (int h : hits) CHECK(std::abs(h / double(n) - 0.25) < 3 * std::sqrt(0.25 * 0.75 / n));
  }
}

TEST_CASE("initial field: sparse Poisson mean") {
  WalkParams params{1, 1.0, 1.0, 1e-4};
  const Box window{Site(1, {0}), Site(1, {9})};
  const int reps = 100000;
  double total = 0.0;
  int empty = 0;
  for (int r = 0; r < reps; ++r) {
    const auto f = sample_initial_field(window, params, RngStream{11, static_cast<std::uint32_t>(r)});
    total += static_cast<double>(f.size());
    empty += f.size() == 0;
  }
  const double mean = 10 * 1e-4;
  CHECK(std::abs(total / reps - mean) < 3 * std::sqrt(mean / reps));
  CHECK(empty / double(reps) > 0.995);
}

TEST_CASE("initial field: Poisson dispersion and determinism") {
  WalkParams params{1, 1.0, 1.0, 2.0};
  const Box window = Box::cube(1, 49999);
  const auto f = sample_initial_field(window, params, RngStream{5, 1});
  const auto occ = f.occupancy();
  double s1 = 0, s2 = 0;
  window.for_each([&](const Site& x) {
    auto it = occ.find(x);
    const double c = it == occ.end() ? 0.0 : it->second;
    s1 += c;
    s2 += c * c;
  });
  const double n = static_cast<double>(window.volume());
  const double mean = s1 / n;
  const double var = (s2 - n * mean * mean) / (n - 1);
  CHECK(std::abs(var / mean - 1.0) < 3 * std::sqrt(2.0 / (n - 1)));

  const auto g = sample_initial_field(window, params, RngStream{5, 1});
  REQUIRE(g.size() == f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f.particles[i].id == g.particles[i].id);
    CHECK(f.particles[i].pos == g.particles[i].pos);
  }
  // ids in scan order
  for (std::size_t i = 1; i < f.size(); ++i) {
    CHECK(f.particles[i].id == f.particles[i - 1].id + 1);
    CHECK_FALSE(f.particles[i].pos < f.particles[i - 1].pos);
  }
  CHECK_THROWS(sample_initial_field(Box{Site(1, {1}), Site(1, {0})}, params, RngStream{}));
}

TEST_CASE("evolve_free_system: identity, conservation, composition") {
  WalkParams params{2, 1.0, 1.0, 1.0};
  auto f = sample_initial_field(Box::cube(2, 10), params, RngStream{3, 0});
  const auto before = f.particles;
  evolve_free_system(f, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.particles[i].pos == before[i].pos);
  evolve_free_system(f, 1.5);
  evolve_free_system(f, 4.0);
  CHECK(f.size() == before.size());
  auto g = sample_initial_field(Box::cube(2, 10), params, RngStream{3, 0});
  evolve_free_system(g, 4.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f.particles[i].pos == g.particles[i].pos);
    CHECK(f.particles[i].origin == before[i].pos);
  }
  CHECK_THROWS_AS(evolve_free_system(f, 1.0), std::invalid_argument);
}

TEST_CASE("evolve_free_system: stationary Poisson(1) marginals at t = 5") {
  WalkParams params{1, 1.0, 1.0, 1.0};
  auto f = sample_initial_field(Box::cube(1, 2000), params, RngStream{8, 0});
  evolve_free_system(f, 5.0);
  const auto occ = f.occupancy();
  // bins 0..4 and >= 5
  std::array<double, 6> observed{};
  int n = 0;
  for (std::int64_t x = -1500; x <= 1500; ++x, ++n) {
    auto it = occ.find(Site(1, {x}));
    const std::uint32_t c = it == occ.end() ? 0 : it->second;
    observed[std::min<std::size_t>(c, 5)] += 1;
  }
  std::array<double, 6> prob{};
  double fact = 1, acc = 0;
  for (int k = 0; k < 5; ++k) {
    if (k > 0) fact *= k;
    prob[static_cast<std::size_t>(k)] = std::exp(-1.0) / fact;
    acc += prob[static_cast<std::size_t>(k)];
  }
  prob[5] = 1 - acc;
  double chi2 = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    const double e = n * prob[k];
    chi2 += (observed[k] - e) * (observed[k] - e) / e;
  }
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(5), chi2));
  CHECK(p > 0.01);
}

TEST_CASE("mean-square displacement grows like D t") {
  FreeField f;
  f.dim = 2;
  f.rate = 1.5;
  f.sampled = Box::cube(2, 0);
  const RngStream rng{99, 0};
  for (std::uint32_t i = 0; i < 100000; ++i) {
    FreeParticle p;
    p.id = i;
    p.pos = p.origin = Site(2);
    p.rng = rng.substream(Domain::walk, i);
    p.next_jump = sample_jump_time(f.rate, 0.0, p.rng);
    f.particles.push_back(p);
  }
  evolve_free_system(f, 2.0);
  double s = 0, s2 = 0;
  for (const auto& p : f.particles) {
    const double q = static_cast<double>(norm_l2_sq(p.pos));
    s += q;
    s2 += q * q;
  }
  const double n = static_cast<double>(f.size());
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 3.0) < 3 * se);
}
