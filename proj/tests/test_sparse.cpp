#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixedweak/scenario.hpp"
#include "mixedweak/sparse.hpp"
#include "mixedweak/weights.hpp"

using namespace mixedweak;

namespace {

std::vector<DyadicCube> left_spine(const GridSpec& g, int depth) {
  std::vector<DyadicCube> cubes;
  for (int l = 0; l <= depth; ++l) cubes.push_back(DyadicCube{0, l, {0, 0}});
  return cubes;
}

}  // namespace

TEST_CASE("verify_sparseness on hand-built selections") {
  GridSpec g(1, 4);
  // disjoint cubes with E_Q = Q: eta = 1
  SparseFamily disj;
  disj.cubes = {DyadicCube{0, 1, {0, 0}}, DyadicCube{0, 1, {1, 0}}};
  for (const DyadicCube& q : disj.cubes)
    disj.selection.push_back(CellSet::from_rect(g, cube_cells(g, q)));
  const auto rep = verify_sparseness(g, disj, 1.0);
  CHECK(rep.ok);
  CHECK(rep.achieved_eta == doctest::Approx(1.0));

  // nested chain with E_Qi = Qi \ Qi+1: eta = 1/2
  SparseFamily chain;
  chain.cubes = left_spine(g, 2);
  for (std::size_t i = 0; i < chain.cubes.size(); ++i) {
    CellSet e = CellSet::from_rect(g, cube_cells(g, chain.cubes[i]));
    if (i + 1 < chain.cubes.size())
      e -= CellSet::from_rect(g, cube_cells(g, chain.cubes[i + 1]));
    chain.selection.push_back(e);
  }
  const auto rep2 = verify_sparseness(g, chain, 0.5);
  CHECK(rep2.ok);
  CHECK(rep2.achieved_eta == doctest::Approx(0.5));

  // overlapping selections are rejected
  SparseFamily bad = disj;
  bad.selection[1] = bad.selection[0];
  bad.cubes[1] = bad.cubes[0];
  CHECK_FALSE(verify_sparseness(g, bad, 0.1).disjoint);
}

TEST_CASE("default selection: antichain, chain, full tree") {
  GridSpec g(1, 4);
  SparseFamily anti = with_default_selection(
      g, 0, {DyadicCube{0, 2, {0, 0}}, DyadicCube{0, 2, {3, 0}}});
  CHECK(anti.eta == doctest::Approx(1.0));

  SparseFamily chain = with_default_selection(g, 0, left_spine(g, 3));
  CHECK(chain.eta == doctest::Approx(0.5));

  // packing the full tree to depth 2 starves the parents completely
  std::vector<DyadicCube> full;
  for (int l = 0; l <= 2; ++l)
    for (const DyadicCube& q : subcubes(g, base_cube(g), l)) full.push_back(q);
  SparseFamily packed = with_default_selection(g, 0, std::move(full));
  CHECK(packed.eta == doctest::Approx(0.0));
}

TEST_CASE("stopping family: constants, spine, sparseness") {
  GridSpec g(1, 6);
  CHECK_THROWS(cz_stopping_family(GridFunction(g, 1.0), base_cube(g), 1.0));
  // flat input: no cube reaches a times the average
  SparseFamily flat = cz_stopping_family(GridFunction(g, 1.0), base_cube(g), 2.0);
  CHECK(flat.cubes.size() == 1);
  CHECK(flat.cubes[0] == base_cube(g));

  // f = chi_{[0, 2^-3)}, a = 2: the left spine down to level 3
  GridFunction chi = sample_midpoints(
      g, [](const std::array<double, 2>& x) { return x[0] < 0.125 ? 1.0 : 0.0; });
  SparseFamily spine = cz_stopping_family(chi, base_cube(g), 2.0);
  REQUIRE(spine.cubes.size() == 4);
  for (int l = 0; l <= 3; ++l) {
    CHECK(spine.cubes[static_cast<std::size_t>(l)].level == l);
    CHECK(spine.cubes[static_cast<std::size_t>(l)].index[0] == 0);
  }
  CHECK(spine.eta == doctest::Approx(0.5));

  Rng rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    GridFunction f = random_nonneg(g, rng);
    if (!(integrate(f) > 0.0)) continue;
    const double a = rng.uniform(1.5, 4.0);
    SparseFamily s = cz_stopping_family(f, base_cube(g), a);
    const auto v = verify_sparseness(g, s, 1.0 - 1.0 / a);
    CHECK(v.ok);
  }
}

TEST_CASE("sparse operator: single cube, disjoint pieces, brute force") {
  GridSpec g(1, 6);
  GridFunction f = sample_midpoints(g, [](const std::array<double, 2>& x) { return x[0]; });

  SparseFamily single = with_default_selection(g, 0, {base_cube(g)});
  GridFunction a1 = sparse_operator(g, single, f);
  const double favg = integrate(f);
  for (double v : a1.values) CHECK(v == doctest::Approx(favg).epsilon(1e-12));

  SparseFamily two = with_default_selection(
      g, 0, {DyadicCube{0, 1, {0, 0}}, DyadicCube{0, 1, {1, 0}}});
  GridFunction a2 = sparse_operator(g, two, f);
  const double lavg = average(f, two.cubes[0]), ravg = average(f, two.cubes[1]);
  CHECK(a2.values.front() == doctest::Approx(lavg).epsilon(1e-12));
  CHECK(a2.values.back() == doctest::Approx(ravg).epsilon(1e-12));

  // chain family against a direct double loop
  SparseFamily chain = with_default_selection(g, 0, left_spine(g, 5));
  GridFunction got = sparse_operator(g, chain, f);
  for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
    double brute = 0.0;
    for (const DyadicCube& q : chain.cubes) {
      const CellRect r = cube_cells(g, q);
      if (cell < r.lo[0] || cell >= r.hi[0]) continue;
      double acc = 0.0;
      for (std::int64_t c2 = r.lo[0]; c2 < r.hi[0]; ++c2)
        acc += f.values[static_cast<std::size_t>(c2)];
      brute += acc / static_cast<double>(r.hi[0] - r.lo[0]);
    }
    CHECK(got.values[static_cast<std::size_t>(cell)] ==
          doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("sparse operator linear and monotone") {
  GridSpec g(1, 5);
  Rng rng(103);
  SparseFamily s = random_sparse_family(g, rng);
  GridFunction f = random_nonneg(g, rng);
  GridFunction h = random_nonneg(g, rng);
  GridFunction sf = sparse_operator(g, s, f);
  GridFunction sh = sparse_operator(g, s, h);

  std::vector<double> sum(f.values.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = f.values[i] + 2.0 * h.values[i];
  GridFunction ssum = sparse_operator(g, s, GridFunction(g, std::move(sum), true));
  for (std::size_t i = 0; i < ssum.values.size(); ++i) {
    CHECK(ssum.values[i] ==
          doctest::Approx(sf.values[i] + 2.0 * sh.values[i]).epsilon(1e-12));
    CHECK(sparse_operator(g, s, product(f, GridFunction(g, 1.0))).values[i] >= 0.0);
  }
  // monotone: f <= f + h pointwise
  std::vector<double> bigger(f.values.size());
  for (std::size_t i = 0; i < bigger.size(); ++i) bigger[i] = f.values[i] + h.values[i];
  GridFunction sbig = sparse_operator(g, s, GridFunction(g, std::move(bigger), true));
  for (std::size_t i = 0; i < sbig.values.size(); ++i)
    CHECK(sbig.values[i] >= sf.values[i] * (1.0 - 1e-12));
}

TEST_CASE("commutator sparse operator") {
  GridSpec g(1, 4);
  SparseFamily single = with_default_selection(g, 0, {base_cube(g)});

  // constant symbol kills every m >= 1 term
  GridFunction ones(g, 1.0);
  GridFunction zero = commutator_sparse(g, single, GridFunction(g, 2.0), ones, 1, 0);
  for (double v : zero.values) CHECK(v == 0.0);

  // m = h = 0 is the plain sparse operator
  Rng rng(107);
  GridFunction f = random_nonneg(g, rng);
  GridFunction b = random_signed(g, rng);
  SparseFamily s = random_sparse_family(g, rng);
  GridFunction c00 = commutator_sparse(g, s, b, f, 0, 0);
  GridFunction plain = sparse_operator(g, s, f);
  for (std::size_t i = 0; i < c00.values.size(); ++i)
    CHECK(c00.values[i] == doctest::Approx(plain.values[i]).epsilon(1e-12));

  // b = chi_left, f = 1, m = 1, h = 0 on the unit cube: |b - 1/2| = 1/2
  GridFunction chi = sample_midpoints(
      g, [](const std::array<double, 2>& x) { return x[0] < 0.5 ? 1.0 : 0.0; });
  GridFunction half = commutator_sparse(g, single, chi, ones, 1, 0);
  for (double v : half.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS(commutator_sparse(g, single, chi, ones, 1, 2));
}

TEST_CASE("rough bilinear form") {
  GridSpec g(1, 5);
  SparseFamily single = with_default_selection(g, 0, {base_cube(g)});
  GridFunction one(g, 1.0);
  CHECK(rough_bilinear(g, single, one, one, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(rough_bilinear(g, single, one, one, 1.0));

  // indicator: the g-factor is (|E|/|Q|)^{1/r}
  GridFunction chi = sample_midpoints(
      g, [](const std::array<double, 2>& x) { return x[0] < 0.25 ? 1.0 : 0.0; });
  CHECK(rough_bilinear(g, single, one, chi, 3.0) ==
        doctest::Approx(std::pow(0.25, 1.0 / 3.0)).epsilon(1e-12));

  // triple-loop oracle on random data
  Rng rng(109);
  SparseFamily s = random_sparse_family(g, rng);
  GridFunction f = random_signed(g, rng);
  GridFunction h = random_signed(g, rng);
  const double r = 2.5;
  double brute = 0.0;
  for (const DyadicCube& q : s.cubes) {
    const CellRect rc = cube_cells(g, q);
    double af = 0.0, ag = 0.0;
    for (std::int64_t c = rc.lo[0]; c < rc.hi[0]; ++c) {
      af += std::abs(f.values[static_cast<std::size_t>(c)]);
      ag += std::pow(std::abs(h.values[static_cast<std::size_t>(c)]), r);
    }
    const double cells = static_cast<double>(rc.hi[0] - rc.lo[0]);
    brute += (af / cells) * std::pow(ag / cells, 1.0 / r) * cells * g.cell_volume();
  }
  CHECK(rough_bilinear(g, s, f, h, r) == doctest::Approx(brute).epsilon(1e-12));

  // r -> value nondecreasing (power mean monotonicity)
  double prev = 0.0;
  for (double rr : {1.5, 2.0, 3.0, 6.0}) {
    const double cur = rough_bilinear(g, s, f, h, rr);
    CHECK(cur >= prev * (1.0 - 1e-12));
    prev = cur;
  }
}

TEST_CASE("dyadic binning and stratification") {
  CHECK(dyadic_bin(0.6) == 0);
  CHECK(dyadic_bin(1.0) == 0);
  CHECK(dyadic_bin(0.25) == 2);  // boundary goes to the upper-closed bin
  CHECK(dyadic_bin(0.5) == 1);
  CHECK(dyadic_bin(0.26) == 1);
  CHECK_THROWS(dyadic_bin(0.0));
  CHECK_THROWS(dyadic_bin(1.5));

  GridSpec g(1, 5);
  Rng rng(113);
  SparseFamily s = random_sparse_family(g, rng);
  GridFunction f = random_nonneg(g, rng);
  GridFunction w = random_weight(g, rng);
  auto f1 = [&](const DyadicCube& q) {
    return std::min(1.0, weighted_average(f, w, q) + 1e-6);
  };
  auto f2 = [&](const DyadicCube& q) { return 1.0 / (1.0 + q.level); };
  const Stratification st = stratify(s, f1, f2);
  std::size_t total = 0;
  for (const auto& [kj, members] : st.bins) {
    total += members.size();
    for (std::size_t i : members) {
      const double v1 = f1(s.cubes[i]);
      const double v2 = f2(s.cubes[i]);
      CHECK(v1 > std::ldexp(1.0, -kj.second - 1));
      CHECK(v1 <= std::ldexp(1.0, -kj.second));
      CHECK(v2 > std::ldexp(1.0, -kj.first - 1));
      CHECK(v2 <= std::ldexp(1.0, -kj.first));
    }
  }
  CHECK(total == s.cubes.size());
}

TEST_CASE("layer decomposition") {
  GridSpec g(1, 4);
  SparseFamily anti = with_default_selection(
      g, 0, {DyadicCube{0, 2, {0, 0}}, DyadicCube{0, 2, {2, 0}}});
  CHECK(layer_decompose(g, anti).layers.size() == 1);

  SparseFamily chain = with_default_selection(g, 0, left_spine(g, 3));
  const auto lc = layer_decompose(g, chain);
  REQUIRE(lc.layers.size() == 4);
  for (const auto& layer : lc.layers) CHECK(layer.size() == 1);

  std::vector<DyadicCube> full;
  for (int l = 0; l <= 2; ++l)
    for (const DyadicCube& q : subcubes(g, base_cube(g), l)) full.push_back(q);
  SparseFamily tree = with_default_selection(g, 0, std::move(full));
  CHECK(layer_decompose(g, tree).layers.size() == 3);
}

TEST_CASE("disjointify: antichain and chain counting") {
  GridSpec g(1, 6);
  GridFunction w(g, 1.0);
  const YoungFunction a = YoungFunction::power(1.0);

  // constant input puts every cube of a family in the same stratum
  GridFunction f(g, 0.4);  // bin j = 1

  SparseFamily anti;
  anti.cubes = subcubes(g, base_cube(g), 2);
  for (int nu : {1, 2, 4}) {
    const auto res = disjointify(g, anti, f, a, w, 1, nu);
    CHECK(res.max_overlap == 1);
    CHECK(res.all_hold);
    for (const auto& pc : res.per_cube) CHECK(pc.mass_decay_ok);  // J_nu empty
  }

  SparseFamily chain;
  chain.cubes = left_spine(g, 4);  // 5 cubes, one layer each
  const auto res2 = disjointify(g, chain, f, a, w, 1, 2);
  CHECK(res2.max_overlap == 2);
  // deepest cells lie in exactly the last two tilde sets
  const std::int64_t deepest = 0;
  int count = 0;
  for (const CellSet& t : res2.tilde) count += t.test(deepest) ? 1 : 0;
  CHECK(count == 2);

  CHECK_THROWS(disjointify(g, chain, f, a, w, 3, 2));  // wrong stratum index
}

TEST_CASE("disjointify: mass-decay threshold tracks the weight's spread") {
  GridSpec g(1, 10);
  const YoungFunction a = YoungFunction::llogl(0.5);
  GridFunction f(g, 0.4);
  SparseFamily chain;
  chain.cubes = left_spine(g, 9);

  auto minimal_nu = [&](const GridFunction& w) {
    for (int nu = 1; nu <= 9; ++nu) {
      const auto res = disjointify(g, chain, f, a, w, 1, nu);
      bool all = true;
      for (const auto& pc : res.per_cube) all = all && pc.mass_decay_ok;
      if (all) return nu;
    }
    return 10;
  };

  GridFunction flat(g, 1.0);
  WeightRecipe pr;
  pr.kind = WeightRecipe::Kind::Power;
  pr.exponent = -0.6;
  GridFunction spiky = make_weight(g, pr);  // mass piles up at the deep end
  const int nu_flat = minimal_nu(flat);
  const int nu_spiky = minimal_nu(spiky);
  CHECK(nu_spiky >= nu_flat);
  CHECK(ainf_fujii(spiky, base_family(g)).value >=
        ainf_fujii(flat, base_family(g)).value);
}

TEST_CASE("union mass bound") {
  GridSpec g(1, 6);
  GridFunction unit(g, 1.0);

  SparseFamily anti = with_default_selection(
      g, 0, {DyadicCube{0, 1, {0, 0}}, DyadicCube{0, 1, {1, 0}}});
  const auto rep = union_mass_check(g, anti, unit);
  CHECK(rep.holds);
  CHECK(rep.lhs == doctest::Approx(1.0).epsilon(1e-12));

  // chain of depth d with eta = 1/2 and flat weight: geometric series under 2
  SparseFamily chain = with_default_selection(g, 0, left_spine(g, 5));
  const auto rep2 = union_mass_check(g, chain, unit);
  CHECK(rep2.eta_used == doctest::Approx(0.5));
  CHECK(rep2.lhs == doctest::Approx(2.0 - std::ldexp(1.0, -5)).epsilon(1e-12));
  CHECK(rep2.rhs >= 2.0 - 1e-12);
  CHECK(rep2.holds);

  Rng rng(127);
  for (int rep3 = 0; rep3 < 50; ++rep3) {
    SparseFamily s = random_sparse_family(g, rng);
    GridFunction w = random_weight(g, rng);
    CHECK(union_mass_check(g, s, w).holds);
  }
}

TEST_CASE("orlicz maximal weak type") {
  GridSpec g(1, 5);
  GridFunction unit(g, 1.0);
  GridFunction chi(g, 1.0);  // chi_{Q0}
  const auto rep = orlicz_maximal_weaktype_check(chi, YoungFunction::power(1.0), unit, {0}, 0.5);
  CHECK(rep.lhs == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.rhs == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rep.holds);

  const auto zero =
      orlicz_maximal_weaktype_check(GridFunction(g, 0.0), YoungFunction::power(1.0), unit, {0}, 1.0);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.holds);

  // multi-lattice: union over the shifted grids with the splitting factor
  Rng rng(131);
  std::vector<int> lats = shifted_lattices(g);
  for (int rep2 = 0; rep2 < 10; ++rep2) {
    GridFunction f = random_nonneg(g, rng);
    GridFunction w = random_weight(g, rng);
    GridFunction m = orlicz_maximal(f, YoungFunction::llogl(0.5), w, all_lattices_family(g));
    double mmax = 0.0;
    for (double v : m.values) mmax = std::max(mmax, v);
    if (!(mmax > 0.0)) continue;
    std::vector<int> ids = {0};
    ids.insert(ids.end(), lats.begin(), lats.end());
    const double t = mmax * rng.uniform(0.05, 0.9);
    CHECK(orlicz_maximal_weaktype_check(f, YoungFunction::llogl(0.5), w, ids, t).holds);
  }
  CHECK_THROWS(orlicz_maximal_weaktype_check(chi, YoungFunction::explr(1.0), unit, {0, 1}, 1.0));
}

TEST_CASE("disjointify overlap bound is structural") {
  // any family, any weight, any nu: a constant input makes the whole family
  // one stratum, and the overlap stays below nu by chain counting alone
  GridSpec g(1, 6);
  Rng rng(137);
  GridFunction f(g, 0.3);  // bin j = 1
  const YoungFunction a = YoungFunction::power(1.0);
  for (int rep = 0; rep < 30; ++rep) {
    SparseFamily s = random_sparse_family(g, rng);
    GridFunction w = random_weight(g, rng);
    const int nu = static_cast<int>(rng.uniform_int(1, 5));
    const auto res = disjointify(g, s, f, a, w, 1, nu);
    CHECK(res.max_overlap <= nu);
  }
}

TEST_CASE("maximal dominates the function when cells are scanned") {
  GridSpec g(2, 3);
  Rng rng(139);
  for (int rep = 0; rep < 10; ++rep) {
    GridFunction f = random_nonneg(g, rng);
    GridFunction m = dyadic_maximal(f, base_family(g));
    for (std::size_t i = 0; i < f.values.size(); ++i)
      CHECK(m.values[i] >= f.values[i] * (1.0 - 1e-12));
  }
}

TEST_CASE("sparse family serializes to json") {
  GridSpec g(1, 3);
  SparseFamily s = with_default_selection(g, 0, left_spine(g, 2));
  const std::string j = s.to_json(g, true);
  CHECK(j.find("\"lattice\":0") != std::string::npos);
  CHECK(j.find("\"eta\":0.5") != std::string::npos);
  CHECK(j.find("\"selection\"") != std::string::npos);
}
