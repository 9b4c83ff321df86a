#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "abspread/blocks.hpp"

using namespace abspread;

namespace {

FreeField static_field(int d, std::vector<Site> sites, double start_time = 0.0) {
  FreeField f;
  f.dim = d;
  f.rate = 0.0;
  f.start_time = start_time;
  f.time = start_time;
  f.sampled = Box{Site(d), Site(d)};
  std::uint32_t id = 0;
  for (auto& s : sites) {
    FreeParticle p{id, s, s, kNever, RngStream{1, 0}.substream(Domain::walk, id)};
    ++id;
    f.particles.push_back(p);
  }
  return f;
}

MultiscaleParams params(double gamma0, double mu, int r_max = 2) {
  MultiscaleParams mp;
  mp.C0 = 2;
  mp.schedule = gamma_schedule(gamma0, 2, r_max);
  mp.mu = mu;
  return mp;
}

// Every site of `box` (inclusive) once, minus `holes`.
std::vector<Site> packed(const Box& box, const std::vector<Site>& holes = {}) {
  std::vector<Site> out;
  box.for_each([&](const Site& x) {
    if (std::find(holes.begin(), holes.end(), x) == holes.end()) out.push_back(x);
  });
  return out;
}

SpaceTimePath step_path(std::vector<std::pair<double, std::int64_t>> pieces, double end) {
  SpaceTimePath p;
  for (auto [t, x] : pieces) {
    p.times.push_back(t);
    p.xs.push_back(Site(1, {x}));
  }
  p.end = end;
  return p;
}

}  // namespace

TEST_CASE("gamma schedule") {
  auto g = gamma_schedule(0.1, 16, 3);
  CHECK(g.at(1) == 0.1);
  CHECK(g.at(2) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(g.at(3) == doctest::Approx(0.1 / (0.5 * 0.75)).epsilon(1e-14));
  CHECK(g.at(3) == doctest::Approx(0.26667).epsilon(1e-4));
  auto h = gamma_schedule(1e-4, 2, 12);
  for (int r = 2; r <= 12; ++r) CHECK(h.at(r) > h.at(r - 1));
  CHECK_THROWS_AS(h.at(13), std::out_of_range);
  CHECK_THROWS_AS(gamma_schedule(0.0, 2, 3), std::invalid_argument);
}

TEST_CASE("constants validation") {
  double prod = 1.0;
  for (int j = 1; j < 20000; ++j) prod /= 1.0 - std::pow(2.0, -j / 4.0);
  auto rep = validate_constants(0.25, 2, 1.0, 1, 3);
  CHECK(rep.gamma_product == doctest::Approx(prod).epsilon(1e-10));
  CHECK(rep.gamma_product_upper >= rep.gamma_product);
  CHECK(rep.gamma_product > 2.0);
  CHECK_FALSE(rep.density_ok);

  CHECK(validate_constants(0.5 / prod * 0.999, 2, 1.0, 1, 1).density_ok);
  CHECK_FALSE(validate_constants(0.5 / prod * 1.001, 2, 1.0, 1, 1).density_ok);
  CHECK_FALSE(validate_constants(0.0, 2, 1.0, 1, 1).density_ok);
  CHECK_FALSE(validate_constants(-1.0, 2, 1.0, 1, 1).density_ok);

  auto small = validate_constants(0.1, 2, 1.0, 1, 1);
  REQUIRE(small.scale_ok.size() == 1);
  CHECK_FALSE(small.scale_ok[0]);
  CHECK(small.log_rho0[0] > 10.0);
  CHECK_FALSE(small.all_ok());

  // a huge C0 and dense field pass the scale constraint
  auto big = validate_constants(1e-4, 1 << 20, 1000.0, 3, 1);
  CHECK(big.scale_ok[0]);
}

TEST_CASE("scale R") {
  CHECK(scale_R(std::exp(8.0), 1.0, 2, 1) == 3);
  CHECK(scale_R(std::exp(1.0), 1.0, 2, 1) == 0);
  CHECK_THROWS_AS(scale_R(1.0, 1.0, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(scale_R(0.5, 1.0, 2, 1), std::invalid_argument);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> lt(0.1, 12.0), k4(0.1, 20.0);
  for (int n = 0; n < 500; ++n) {
    const double t = std::exp(lt(gen));
    const double k = k4(gen);
    const std::int64_t c = 2 + static_cast<std::int64_t>(gen() % 6);
    const int d = 1 + static_cast<int>(gen() % 3);
    const int R = scale_R(t, k, c, d);
    const double target = std::pow(k * std::log(t), 1.0 / d);
    CHECK(std::pow(double(c), R) >= target * (1 - 1e-12));
    CHECK(target > std::pow(double(c), R - 1));
  }
}

TEST_CASE("rho bound") {
  auto g = gamma_schedule(0.1, 2, 3);
  auto b = rho_bound(1, 2, g, 1.0, 1);
  CHECK(b.value == doctest::Approx(9.0 * 16777216.0 * std::exp(-0.05 * std::pow(2.0, 0.25))));
  CHECK(b.value == doctest::Approx(1.42278e8).epsilon(1e-5));
  CHECK(b.vacuous);
  double prev = b.value;
  for (double mu : {2.0, 10.0, 100.0, 1e4, 1e6}) {
    auto v = rho_bound(1, 2, g, mu, 1);
    CHECK(v.value < prev);
    prev = v.value;
  }
  CHECK(prev < 1e-100);
  CHECK_FALSE(rho_bound(1, 2, g, 1e6, 1).vacuous);
}

TEST_CASE("block geometry") {
  const BlockIndex b{1, Site(1, {2}), -1};
  CHECK(block_delta(2, 1) == 64);
  CHECK(block_delta(2, 2) == 4096);
  CHECK(block_space(b, 2).lo[0] == 128);
  CHECK(block_space(b, 2).hi[0] == 192);
  CHECK(enlarged_space(b, 2).lo[0] == -64);
  CHECK(enlarged_space(b, 2).hi[0] == 384);
  CHECK(enlarged_t0(b, 2) == -128);
  CHECK(enlarged_t1(b, 2) == 0);
  CHECK(parent_of(b, 2) == BlockIndex{2, Site(1, {0}), -1});
  CHECK(parent_of(BlockIndex{1, Site(1, {-1}), 64}, 2) == BlockIndex{2, Site(1, {-1}), 1});
  auto kids = children_of(BlockIndex{2, Site(2, {0, 1}), 0}, 2);
  CHECK(kids.size() == 64u * 64u * 64u);
  for (const auto& k : {kids.front(), kids.back()}) CHECK(parent_of(k, 2) == BlockIndex{2, Site(2, {0, 1}), 0});
  CHECK(block_containing(1, Site(1, {-1}), 63.9, 2) == BlockIndex{1, Site(1, {-1}), 0});
  CHECK(block_containing(1, Site(1, {64}), 64.0, 2) == BlockIndex{1, Site(1, {1}), 1});
  CHECK_THROWS_AS(ipow(2, 64), std::overflow_error);
}

TEST_CASE("U and W counts") {
  auto empty = static_field(1, {});
  CHECK(count_U(empty, Site(1, {0}), 0, 1, 2) == 0);

  auto one = static_field(2, {Site(2, {3, 3})});
  CHECK(count_U(one, Site(2, {3, 3}), 0, 1, 2) == 1);
  CHECK(count_U(one, Site(2, {1, 3}), 0, 1, 2) == 0);  // x + (C0^r, 0) boundary
  CHECK(count_U(one, Site(2, {2, 2}), 0, 1, 2) == 1);
  CHECK_THROWS_AS(count_U(one, Site(2, {3, 3}), 1, 1, 2), std::invalid_argument);

  // W at a child of the parent (0, k=1) whose pedestal is at t = 0
  const BlockIndex parent{2, Site(1, {0}), 1};
  auto f = static_field(1, {Site(1, {0}), Site(1, {1}), Site(1, {-12288}), Site(1, {-12289}), Site(1, {16384})});
  CHECK(count_W(f, Site(1, {0}), 0, 1, 2, parent) == 2);
  CHECK(count_U(f, Site(1, {-12290}), 0, 1, 2) == 1);
  CHECK(count_W(f, Site(1, {-12290}), 0, 1, 2, parent) == 0);
  CHECK(count_W(f, Site(1, {-12289}), 0, 1, 2, parent) == 1);
  CHECK(count_W(f, Site(1, {16383}), 0, 1, 2, parent) == 0);
  CHECK_THROWS_AS(count_W(f, Site(1, {0}), 0, 1, 2, BlockIndex{2, Site(1, {0}), 0}), std::invalid_argument);
  CHECK_THROWS_AS(count_W(f, Site(1, {0}), 0, 2, 2, parent), std::invalid_argument);

  // W <= U on a moving field
  WalkParams wp{1, 0.3, 0.3, 2.0};
  auto g = sample_initial_field(Box{Site(1, {-12350}), Site(1, {-12200})}, wp, RngStream{4, 0});
  evolve_free_system(g, 30.0);
  for (std::int64_t x = -12360; x < -12190; ++x) {
    const auto u = count_U(g, Site(1, {x}), 30, 1, 2);
    const auto w = count_W(g, Site(1, {x}), 30, 1, 2, parent);
    CHECK(w <= u);
    if (x > -12250) CHECK(w == u);
  }
}

TEST_CASE("mean of U is the cube volume times mu") {
  constexpr int kReps = 2000;
  double s = 0, s2 = 0;
  const WalkParams wp{2, 1.0, 1.0, 1.0};
  for (int n = 0; n < kReps; ++n) {
    auto f = sample_initial_field(Box{Site(2, {-2, -2}), Site(2, {6, 6})}, wp, RngStream{99, static_cast<std::uint32_t>(n)});
    const double u = static_cast<double>(count_U(f, Site(2, {0, 0}), 0, 1, 4));
    s += u;
    s2 += u * u;
  }
  const double mean = s / kReps;
  const double se = std::sqrt((s2 / kReps - mean * mean) / kReps);
  CHECK(std::abs(mean - 16.0) <= 3 * se);
}

TEST_CASE("empty and packed fields") {
  const auto mp = params(1e-4, 1.0);
  const BlockIndex b{1, Site(1, {0}), 1};
  auto empty = static_field(1, {});
  CHECK(classify_pedestal(empty, b, mp) == Label::bad);
  auto lab = classify_block(empty, b, mp);
  CHECK(lab.label == Label::bad);
  CHECK(lab.pedestal == Label::bad);

  // one particle per site: every cube holds 2 >= threshold
  auto full = static_field(1, packed(Box{Site(1, {-192}), Site(1, {255})}));
  CHECK(classify_pedestal(full, b, mp) == Label::good);
  CHECK(classify_block(full, b, mp).label == Label::good);
  auto sweep = classify_blocks(full, {b}, mp);
  CHECK(sweep[0].label == Label::good);
  CHECK(sweep[0].pedestal == Label::good);
  CHECK_FALSE(sweep[0].inferior.has_value());
}

TEST_CASE("good pedestal with a bad block") {
  // one walker per site at the pedestal, then sites empty out
  const auto mp = params(1e-4, 1.0);
  const BlockIndex b{1, Site(1, {0}), 1};
  auto f = static_field(1, packed(Box{Site(1, {-250}), Site(1, {320})}));
  f.rate = 1.0;
  for (auto& p : f.particles) p.next_jump = sample_jump_time(1.0, 0.0, p.rng);
  CHECK(classify_pedestal(f, b, mp) == Label::good);
  auto lab = classify_block(f, b, mp);
  CHECK(lab.pedestal == Label::good);
  CHECK(lab.label == Label::bad);
  auto sw = classify_blocks(f, {b}, mp);
  CHECK(sw[0].label == Label::bad);
  CHECK(sw[0].pedestal == Label::good);
}

TEST_CASE("holes at the enlarged-block boundary, d = 2") {
  // threshold 4 on 2x2 cubes: one missing site inside the scan region makes the block bad
  const auto mp = params(1.0, 1.0);
  const BlockIndex b{1, Site(2, {0, 0}), 1};
  const Box area{Site(2, {-194, -194}), Site(2, {257, 257})};
  struct Case {
    Site hole;
    Label want;
  };
  const Case cases[] = {{Site(2, {-192, 100}), Label::bad}, {Site(2, {255, 255}), Label::bad},
                        {Site(2, {-193, 0}), Label::good},  {Site(2, {256, 10}), Label::good},
                        {Site(2, {10, 256}), Label::good},  {Site(2, {0, -193}), Label::good}};
  for (const auto& c : cases) {
    auto f = static_field(2, packed(area, {c.hole}), -4096.0);
    SweepStats st;
    auto lab = classify_blocks(f, {b}, mp, &st);
    CHECK(lab[0].label == c.want);
    CHECK(lab[0].pedestal == c.want);
    REQUIRE(lab[0].inferior.has_value());
    CHECK(*lab[0].inferior == (c.want == Label::bad));
    CHECK(st.w_exceeds_u == 0);
    CHECK(st.w_checks > 0);
  }
}

TEST_CASE("sweep agrees with the brute-force classifier") {
  int bad = 0, good = 0, inferior_only = 0;
  for (double mu : {6.0, 8.0}) {
    const auto mp = params(0.1, mu);
    WalkParams wp{1, 0.05, 0.05, mu};
    // parent (0, 0) has its pedestal at -4096; the field starts there
    auto f = sample_initial_field(Box{Site(1, {-300}), Site(1, {620})}, wp, RngStream{31, static_cast<std::uint32_t>(mu)},
                                  -4096.0);
    std::vector<BlockIndex> blocks;
    for (std::int64_t q = 0; q < 3; ++q) {
      for (std::int64_t j = 0; j < 4; ++j) blocks.push_back({1, Site(1, {j}), q});
    }
    SweepStats st;
    auto sweep = classify_blocks(f, blocks, mp, &st);
    CHECK(st.w_exceeds_u == 0);
    for (std::size_t n = 0; n < blocks.size(); ++n) {
      const auto ref = classify_block(f, blocks[n], mp);
      CHECK(sweep[n].label == ref.label);
      CHECK(sweep[n].pedestal == ref.pedestal);
      REQUIRE(ref.inferior.has_value());
      REQUIRE(sweep[n].inferior.has_value());
      CHECK(*sweep[n].inferior == *ref.inferior);
      if (ref.label == Label::bad) {
        ++bad;
        CHECK(*ref.inferior);
      } else {
        ++good;
        CHECK(ref.pedestal == Label::good);
        inferior_only += *ref.inferior;
      }
    }
  }
  CHECK(bad > 0);
  CHECK(good > 0);
  MESSAGE("good blocks that are inferior: " << inferior_only);
}

TEST_CASE("sweep enforces the work budget and field time") {
  auto mp = params(1e-4, 1.0);
  mp.work_budget = 10;
  auto full = static_field(1, packed(Box{Site(1, {-192}), Site(1, {255})}));
  CHECK_THROWS_AS(classify_blocks(full, {BlockIndex{1, Site(1, {0}), 1}}, mp), std::runtime_error);
  mp.work_budget = 1'000'000;
  CHECK_THROWS_AS(classify_blocks(full, {BlockIndex{1, Site(1, {0}), 0}}, mp), std::invalid_argument);
}

TEST_CASE("phi and psi on constructed labelings") {
  const std::int64_t C0 = 2;
  const BlockIndex parent{2, Site(1, {0}), 0};
  const auto kids = children_of(parent, C0);
  auto make_labels = [&](Label kid, Label ped) {
    LabelSet r1, r2;
    for (const auto& k : kids) r1.add({k, kid, true, Label::good});
    r2.add({parent, Label::good, std::nullopt, ped});
    return std::pair{r1, r2};
  };

  const auto inside = step_path({{0.0, 10}}, 64.0);
  {
    auto [r1, r2] = make_labels(Label::good, Label::good);
    CHECK(phi_along_path(inside, r1, 1, C0) == 0);
    CHECK(psi_along_path(inside, r1, r2, 1, C0) == 0);
    auto rc = check_recursion(inside, r1, r2, 1, C0, 1);
    CHECK(rc.holds);
    CHECK(rc.bound == 0);
  }
  {
    LabelSet r1;
    for (const auto& k : kids) r1.add({k, Label::good, true, Label::good});
    r1.add({BlockIndex{1, Site(1, {0}), 0}, Label::bad, true, Label::good});
    CHECK(phi_along_path(inside, r1, 1, C0) == 1);
    // leaves block 0, crosses block 1, re-enters block 0
    r1.add({BlockIndex{1, Site(1, {1}), 0}, Label::bad, true, Label::good});
    const auto reentry = step_path({{0.0, 10}, {10.0, 70}, {20.0, 5}, {30.0, 66}}, 40.0);
    CHECK(blocks_on_path(reentry, 1, C0).size() == 2);
    CHECK(phi_along_path(reentry, r1, 1, C0) == 2);

    LabelSet r2;
    r2.add({parent, Label::good, std::nullopt, Label::bad});
    CHECK(psi_along_path(inside, r1, r2, 1, C0) == 0);
    r2.add({parent, Label::good, std::nullopt, Label::good});
    CHECK(psi_along_path(inside, r1, r2, 1, C0) == 1);
    CHECK(check_recursion(reentry, r1, r2, 1, C0, 1).holds);
  }
  {
    // all 4096 children bad and the path visits every one of them: equality
    auto [r1, r2] = make_labels(Label::bad, Label::good);
    SpaceTimePath sweep;
    for (std::int64_t q = 0; q < 64; ++q) {
      for (std::int64_t j = 0; j < 64; ++j) {
        sweep.times.push_back(64.0 * static_cast<double>(q) + static_cast<double>(j));
        sweep.xs.push_back(Site(1, {64 * j}));
      }
    }
    sweep.end = 4096.0;
    auto rc = check_recursion(sweep, r1, r2, 1, C0, 1);
    CHECK(rc.phi_r == 4096);
    CHECK(rc.phi_r1 == 0);
    CHECK(rc.psi_r1 == 1);
    CHECK(rc.bound == 4096);
    CHECK(rc.holds);
  }
  {
    LabelSet r1, r2;
    CHECK_THROWS_AS(phi_along_path(inside, r1, 1, C0), std::out_of_range);
  }
}

TEST_CASE("blocks csv") {
  std::vector<BlockLabel> ls{{BlockIndex{1, Site(2, {0, -1}), 3}, Label::bad, true, Label::good},
                             {BlockIndex{2, Site(2, {1, 1}), 0}, Label::good, std::nullopt, Label::good}};
  CHECK(blocks_csv(ls, 2) == "r,i1,i2,k,label,inferior,pedestal_label\n1,0,-1,3,bad,1,good\n2,1,1,0,good,,good\n");
}
