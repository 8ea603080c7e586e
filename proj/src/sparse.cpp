#include "mixedweak/sparse.hpp"

#include "mixedweak/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mixedweak {

std::string SparseFamily::to_json(const GridSpec& g, bool with_selection) const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", eta);
  os << "{\"lattice\":" << lattice << ",\"eta\":" << buf << ",\"cubes\":[";
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    if (i) os << ",";
    os << "{\"level\":" << cubes[i].level << ",\"index\":[" << cubes[i].index[0];
    if (g.dim > 1) os << "," << cubes[i].index[1];
    os << "]}";
  }
  os << "]";
  if (with_selection && selection.size() == cubes.size()) {
    os << ",\"selection\":[";
    for (std::size_t i = 0; i < selection.size(); ++i) {
      if (i) os << ",";
      os << "[";
      const auto runs = selection[i].runs();
      for (std::size_t k = 0; k < runs.size(); ++k) {
        if (k) os << ",";
        os << "[" << runs[k][0] << "," << runs[k][1] << "]";
      }
      os << "]";
    }
    os << "]";
  }
  os << "}";
  return os.str();
}

namespace {

bool rect_proper_subset(int dim, const CellRect& a, const CellRect& b) {
  // a proper subset of b, as cell sets
  if (a.empty(dim)) return !b.empty(dim);
  if (!b.contains(dim, a)) return false;
  return a.cell_count(dim) < b.cell_count(dim);
}

}  // namespace

SparsenessReport verify_sparseness(const GridSpec& g, const SparseFamily& s, double eta_claim) {
  if (s.selection.size() != s.cubes.size())
    throw std::invalid_argument("verify_sparseness: selection missing");
  SparsenessReport rep;
  rep.disjoint = true;
  rep.contained = true;
  rep.achieved_eta = 1.0;
  CellSet seen(g);
  for (std::size_t i = 0; i < s.cubes.size(); ++i) {
    const CellRect r = cube_cells(g, s.cubes[i]);
    const CellSet qset = CellSet::from_rect(g, r);
    if (!s.selection[i].subset_of(qset)) rep.contained = false;
    if (!s.selection[i].disjoint_with(seen)) rep.disjoint = false;
    seen |= s.selection[i];
    const double frac = static_cast<double>(s.selection[i].count()) /
                        static_cast<double>(r.cell_count(g.dim));
    if (frac < rep.achieved_eta) {
      rep.achieved_eta = frac;
      rep.worst = s.cubes[i];
    }
  }
  if (s.cubes.empty()) rep.achieved_eta = 0.0;
  rep.ok = rep.disjoint && rep.contained &&
           rep.achieved_eta >= eta_claim * (1.0 - 1e-12);
  return rep;
}

std::vector<CellSet> default_selection(const GridSpec& g, const std::vector<DyadicCube>& cubes) {
  std::vector<CellRect> rects(cubes.size());
  for (std::size_t i = 0; i < cubes.size(); ++i) rects[i] = cube_cells(g, cubes[i]);
  std::vector<CellSet> sel;
  sel.reserve(cubes.size());
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    CellSet e = CellSet::from_rect(g, rects[i]);
    for (std::size_t k = 0; k < cubes.size(); ++k) {
      if (k == i) continue;
      if (rect_proper_subset(g.dim, rects[k], rects[i])) e -= CellSet::from_rect(g, rects[k]);
    }
    sel.push_back(std::move(e));
  }
  return sel;
}

SparseFamily with_default_selection(const GridSpec& g, int lattice,
                                    std::vector<DyadicCube> cubes) {
  SparseFamily s;
  s.lattice = lattice;
  s.cubes = std::move(cubes);
  s.selection = default_selection(g, s.cubes);
  double eta = s.cubes.empty() ? 0.0 : 1.0;
  for (std::size_t i = 0; i < s.cubes.size(); ++i) {
    const double frac = static_cast<double>(s.selection[i].count()) /
                        static_cast<double>(cube_cells(g, s.cubes[i]).cell_count(g.dim));
    eta = std::min(eta, frac);
  }
  s.eta = eta;
  return s;
}

SparseFamily cz_stopping_family(const GridFunction& f, const DyadicCube& root, double a) {
  if (!(a > 1.0)) throw std::invalid_argument("cz_stopping_family: ratio must exceed 1");
  if (!f.nonneg)
    for (double v : f.values)
      if (v < 0.0) throw std::invalid_argument("cz_stopping_family: f must be nonnegative");
  const GridSpec& g = f.grid;
  PrefixSums sf(f);
  auto cube_avg = [&](const DyadicCube& q) {
    const CellRect r = cube_cells(g, q);
    return sf.rect_sum(r) / static_cast<double>(r.cell_count(g.dim));
  };
  if (!(cube_avg(root) > 0.0))
    throw std::invalid_argument("cz_stopping_family: f vanishes on the root");

  std::vector<DyadicCube> out;
  // Walks the subtree below `stop`, collecting maximal cubes whose average
  // reaches the threshold; those recurse as new stopping cubes.
  std::function<void(const DyadicCube&)> process = [&](const DyadicCube& stop) {
    out.push_back(stop);
    const double threshold = a * cube_avg(stop);
    std::vector<DyadicCube> walk{stop};
    while (!walk.empty()) {
      const DyadicCube q = walk.back();
      walk.pop_back();
      if (q.level >= g.level) continue;
      for (const DyadicCube& c : children(g, q)) {
        const CellRect r = cube_cells(g, c);
        if (r.empty(g.dim)) continue;
        if (cube_avg(c) >= threshold)
          process(c);
        else
          walk.push_back(c);
      }
    }
  };
  process(root);
  std::sort(out.begin(), out.end(), cube_less);
  return with_default_selection(g, root.lattice, std::move(out));
}

GridFunction sparse_operator(const GridSpec& g, const SparseFamily& s, const GridFunction& f) {
  if (!(f.grid == g)) throw std::invalid_argument("sparse_operator: grid mismatch");
  PrefixSums sf(f);
  std::vector<double> out(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (const DyadicCube& q : s.cubes) {
    const CellRect r = cube_cells(g, q);
    if (r.empty(g.dim)) continue;
    const double avg = sf.rect_sum(r) / static_cast<double>(r.cell_count(g.dim));
    for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
      for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x)
        out[static_cast<std::size_t>(g.cell_index(x, y))] += avg;
  }
  return GridFunction(g, std::move(out), f.nonneg);
}

GridFunction commutator_sparse(const GridSpec& g, const SparseFamily& s, const GridFunction& b,
                               const GridFunction& f, int m, int h) {
  if (h < 0 || m < 0 || h > m) throw std::invalid_argument("commutator_sparse: need 0 <= h <= m");
  if (!(f.grid == g) || !(b.grid == g))
    throw std::invalid_argument("commutator_sparse: grid mismatch");
  std::vector<double> out(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (const DyadicCube& q : s.cubes) {
    const CellRect r = cube_cells(g, q);
    if (r.empty(g.dim)) continue;
    const double bq = average(b, q);
    double inner = 0.0;
    for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
      for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
        const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
        inner += std::pow(std::abs(b.values[i] - bq), h) * f.values[i];
      }
    inner /= static_cast<double>(r.cell_count(g.dim));
    for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
      for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
        const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
        out[i] += std::pow(std::abs(b.values[i] - bq), m - h) * inner;
      }
  }
  return GridFunction(g, std::move(out), true);
}

double rough_bilinear(const GridSpec& g, const SparseFamily& s, const GridFunction& f,
                      const GridFunction& gg, double r) {
  if (!(r > 1.0)) throw std::invalid_argument("rough_bilinear: r must exceed 1");
  if (!(f.grid == g) || !(gg.grid == g)) throw std::invalid_argument("rough_bilinear: grid mismatch");
  std::vector<double> absf(f.values.size()), gr(gg.values.size());
  for (std::size_t i = 0; i < absf.size(); ++i) absf[i] = std::abs(f.values[i]);
  for (std::size_t i = 0; i < gr.size(); ++i) gr[i] = std::pow(std::abs(gg.values[i]), r);
  PrefixSums sf(GridFunction(g, std::move(absf), true));
  PrefixSums sg(GridFunction(g, std::move(gr), true));
  double total = 0.0;
  for (const DyadicCube& q : s.cubes) {
    const CellRect rc = cube_cells(g, q);
    if (rc.empty(g.dim)) continue;
    const double cells = static_cast<double>(rc.cell_count(g.dim));
    const double vol = cells * g.cell_volume();
    const double af = sf.rect_sum(rc) / cells;
    const double ag = std::pow(sg.rect_sum(rc) / cells, 1.0 / r);
    total += af * ag * vol;
  }
  return total;
}

int dyadic_bin(double value) {
  if (!(value > 0.0) || value > 1.0 + 1e-12)
    throw std::invalid_argument("dyadic_bin: functional value outside (0,1] (pre-reduce missing)");
  if (value > 1.0) value = 1.0;
  int j = 0;
  // upper-closed bins: value exactly 2^-j lands in bin j
  while (value <= std::ldexp(1.0, -j - 1)) {
    ++j;
    if (j > 4096) throw std::invalid_argument("dyadic_bin: value too small");
  }
  return j;
}

Stratification stratify(const SparseFamily& s,
                        const std::function<double(const DyadicCube&)>& f1,
                        const std::function<double(const DyadicCube&)>& f2,
                        const std::string& f1_name, const std::string& f2_name) {
  Stratification out;
  out.f1_name = f1_name;
  out.f2_name = f2_name;
  for (std::size_t i = 0; i < s.cubes.size(); ++i) {
    const int j = dyadic_bin(f1(s.cubes[i]));
    const int k = dyadic_bin(f2(s.cubes[i]));
    out.bins[{k, j}].push_back(i);
  }
  return out;
}

LayerDecomposition layer_decompose(const GridSpec& g, const SparseFamily& s) {
  const std::size_t n = s.cubes.size();
  std::vector<CellRect> rects(n);
  for (std::size_t i = 0; i < n; ++i) rects[i] = cube_cells(g, s.cubes[i]);
  LayerDecomposition out;
  out.layer_of.assign(n, -1);
  std::size_t assigned = 0;
  int layer = 0;
  while (assigned < n) {
    std::vector<std::size_t> cur;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.layer_of[i] >= 0) continue;
      bool maximal = true;
      for (std::size_t k = 0; k < n && maximal; ++k) {
        if (k == i || out.layer_of[k] >= 0) continue;
        if (rect_proper_subset(g.dim, rects[i], rects[k])) maximal = false;
      }
      if (maximal) cur.push_back(i);
    }
    if (cur.empty()) throw std::logic_error("layer_decompose: no maximal cube found");
    for (std::size_t i : cur) out.layer_of[i] = layer;
    assigned += cur.size();
    out.layers.push_back(std::move(cur));
    ++layer;
  }
  return out;
}

DisjointifyResult disjointify(const GridSpec& g, const SparseFamily& stratum_in,
                              const GridFunction& f, const YoungFunction& a,
                              const GridFunction& w, int j, int nu) {
  if (nu < 1) throw std::invalid_argument("disjointify: nu must be >= 1");
  // The family is a set of cubes of the truncated model: clipped cubes with
  // identical cell extents collapse to one member.
  SparseFamily stratum;
  stratum.lattice = stratum_in.lattice;
  for (const DyadicCube& q : stratum_in.cubes) {
    const CellRect r = cube_cells(g, q);
    bool dup = false;
    for (const DyadicCube& p : stratum.cubes) {
      const CellRect rp = cube_cells(g, p);
      if (rp.contains(g.dim, r) && r.contains(g.dim, rp)) dup = true;
    }
    if (!dup) stratum.cubes.push_back(q);
  }
  const double hi = std::ldexp(1.0, -j);
  const double lo = 0.5 * hi;
  std::vector<double> norms(stratum.cubes.size());
  for (std::size_t i = 0; i < stratum.cubes.size(); ++i) {
    norms[i] = luxemburg_norm(f, a, w, stratum.cubes[i]);
    if (!(norms[i] > lo * (1.0 - 1e-9)) || norms[i] > hi * (1.0 + 1e-9))
      throw std::invalid_argument("disjointify: stratum precondition violated");
  }
  const LayerDecomposition layers = layer_decompose(g, stratum);
  DisjointifyResult out;
  out.tilde.reserve(stratum.cubes.size());
  std::vector<CellRect> rects(stratum.cubes.size());
  for (std::size_t i = 0; i < stratum.cubes.size(); ++i)
    rects[i] = cube_cells(g, stratum.cubes[i]);

  const double a8 = a(8.0);
  const double a2j2 = a(std::ldexp(1.0, j + 2));
  std::vector<double> overlap(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (std::size_t i = 0; i < stratum.cubes.size(); ++i) {
    const int li = layers.layer_of[i];
    CellSet tilde = CellSet::from_rect(g, rects[i]);
    CellSet jnu(g);
    if (static_cast<std::size_t>(li + nu) < layers.layers.size()) {
      for (std::size_t k : layers.layers[static_cast<std::size_t>(li + nu)])
        if (rects[i].contains(g.dim, rects[k])) jnu |= CellSet::from_rect(g, rects[k]);
    }
    tilde -= jnu;
    for (std::int64_t c : tilde.cells()) overlap[static_cast<std::size_t>(c)] += 1.0;

    DisjointifyCubeReport rep;
    rep.cube_index = i;
    const double wq = integrate(w, rects[i]);
    const double wj = integrate(w, jnu);
    rep.mass_decay_ok = wj <= wq / a8 * (1.0 + 1e-12);
    rep.lhs = wq * norms[i];
    // int_{E~_Q} A(|f|) w
    double mass = 0.0;
    for (std::int64_t c : tilde.cells()) {
      const std::size_t ci = static_cast<std::size_t>(c);
      mass += a(std::abs(f.values[ci])) * w.values[ci];
    }
    mass *= g.cell_volume();
    rep.rhs = 4.0 * (a2j2 / std::ldexp(1.0, j + 2)) * mass;
    rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-9);
    if (rep.mass_decay_ok && !rep.holds) out.all_hold = false;
    out.per_cube.push_back(rep);
    out.tilde.push_back(std::move(tilde));
  }
  double m = 0.0;
  for (double v : overlap) m = std::max(m, v);
  out.max_overlap = static_cast<int>(m);
  return out;
}

UnionMassReport union_mass_check(const GridSpec& g, const SparseFamily& s,
                                 const GridFunction& w) {
  SparseFamily fam = s;
  if (fam.selection.size() != fam.cubes.size()) {
    fam.selection = default_selection(g, fam.cubes);
  }
  SparsenessReport sp = verify_sparseness(g, fam, 0.0);
  if (!(sp.achieved_eta > 0.0))
    throw std::invalid_argument("union_mass_check: family has achieved eta = 0");
  UnionMassReport rep;
  rep.eta_used = sp.achieved_eta;
  // the chain needs the family's own lattice scanned: its maximal cubes enter
  // the per-cube functional and its subcubes feed the inner maximal operator
  rep.fw_constant = ainf_fujii(w, lattice_family(g, fam.lattice)).value;
  CellSet cover(g);
  double lhs = 0.0;
  for (const DyadicCube& q : fam.cubes) {
    const CellRect r = cube_cells(g, q);
    lhs += integrate(w, r);
    cover |= CellSet::from_rect(g, r);
  }
  rep.lhs = lhs;
  rep.rhs = (1.0 / rep.eta_used) * rep.fw_constant * integrate(w, cover);
  rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-9);
  return rep;
}

WeakTypeReport orlicz_maximal_weaktype_check(const GridFunction& f, const YoungFunction& a,
                                             const GridFunction& w,
                                             const std::vector<int>& lattice_ids, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("weaktype check: t must be positive");
  if (lattice_ids.empty()) throw std::invalid_argument("weaktype check: no lattices");
  const GridSpec& g = f.grid;
  WeakTypeReport rep;
  rep.lattice_count = static_cast<int>(lattice_ids.size());
  std::vector<double> m(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (int lat : lattice_ids) {
    GridFunction ml = orlicz_maximal(f, a, w, lattice_family(g, lat));
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], ml.values[i]);
  }
  double lhs = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] > t) lhs += w.values[i];
  rep.lhs = lhs * g.cell_volume();

  double modular = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    modular += a(std::abs(f.values[i]) / t) * w.values[i];
  modular *= g.cell_volume();

  if (rep.lattice_count == 1) {
    rep.rhs = modular;
    rep.kappa_used = 1.0;
  } else {
    const auto kap = a.kappa();
    if (!kap) throw std::invalid_argument("weaktype check: non-submultiplicative Young function");
    rep.kappa_used = *kap;
    const double count = static_cast<double>(rep.lattice_count);
    rep.rhs = count * rep.kappa_used * a(count) * modular;
  }
  rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-9);
  return rep;
}

}  // namespace mixedweak
