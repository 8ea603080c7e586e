#include "mixedweak/weights.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mixedweak {

std::string ConstantReport::to_json() const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  os << "{\"kind\":\"" << kind << "\",\"value\":" << buf << ",\"cube\":{\"lattice\":"
     << argmax.lattice << ",\"level\":" << argmax.level << ",\"index\":[" << argmax.index[0]
     << "," << argmax.index[1] << "]},\"family\":\"" << family << "\"}";
  return os.str();
}

namespace {

void check_positive(const GridFunction& w, const char* what) {
  for (double v : w.values)
    if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + ": weight must be strictly positive");
}

struct CellMax {
  std::vector<double> value;
  std::vector<DyadicCube> witness;
};

// Scatter-max of per-cube scores over the cells each cube covers.
// Family scanned in its stored order; strictly-greater updates keep the
// earliest (smallest) witness under the canonical ordering.
CellMax scatter_max(const GridSpec& g, const CubeFamily& family,
                    const std::function<double(const DyadicCube&, const CellRect&)>& score) {
  if (family.cubes.empty()) throw std::invalid_argument("empty cube family");
  CellMax out;
  out.value.assign(static_cast<std::size_t>(g.cell_count()), 0.0);
  out.witness.assign(static_cast<std::size_t>(g.cell_count()), DyadicCube{});
  for (const DyadicCube& q : family.cubes) {
    const CellRect r = cube_cells(g, q);
    if (r.empty(g.dim)) continue;
    const double s = score(q, r);
    for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
      for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
        const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
        if (s > out.value[i]) {
          out.value[i] = s;
          out.witness[i] = q;
        }
      }
  }
  return out;
}

}  // namespace

GridFunction dyadic_maximal(const GridFunction& f, const CubeFamily& family,
                            const GridFunction* w) {
  const GridSpec& g = f.grid;
  if (w && !(w->grid == g)) throw std::invalid_argument("dyadic_maximal: grid mismatch");
  PrefixSums sf(w ? product(f, *w) : f);
  std::optional<PrefixSums> sw;
  if (w) sw.emplace(*w);
  CellMax m = scatter_max(g, family, [&](const DyadicCube&, const CellRect& r) {
    const double num = sf.rect_sum(r);
    const double den = w ? sw->rect_sum(r) : static_cast<double>(r.cell_count(g.dim));
    if (!(den > 0.0)) throw std::invalid_argument("dyadic_maximal: zero weight mass on cube");
    return num / den;
  });
  return GridFunction(g, std::move(m.value), f.nonneg);
}

ConstantReport a1_constant(const GridFunction& w, const CubeFamily& family) {
  check_positive(w, "a1_constant");
  const GridSpec& g = w.grid;
  PrefixSums sw(w);
  CellMax m = scatter_max(g, family, [&](const DyadicCube&, const CellRect& r) {
    return sw.rect_sum(r) / static_cast<double>(r.cell_count(g.dim));
  });
  ConstantReport rep{"A1", 0.0, DyadicCube{}, family.name};
  for (std::size_t i = 0; i < m.value.size(); ++i) {
    const double ratio = m.value[i] / w.values[i];
    if (ratio > rep.value) {
      rep.value = ratio;
      rep.argmax = m.witness[i];
    }
  }
  return rep;
}

ConstantReport a1_relative(const GridFunction& v, const GridFunction& u,
                           const CubeFamily& family) {
  check_positive(v, "a1_relative");
  check_positive(u, "a1_relative");
  if (!(v.grid == u.grid)) throw std::invalid_argument("a1_relative: grid mismatch");
  const GridSpec& g = v.grid;
  PrefixSums svu(product(v, u));
  PrefixSums su(u);
  CellMax m = scatter_max(g, family, [&](const DyadicCube&, const CellRect& r) {
    return svu.rect_sum(r) / su.rect_sum(r);
  });
  ConstantReport rep{"A1(v)", 0.0, DyadicCube{}, family.name};
  for (std::size_t i = 0; i < m.value.size(); ++i) {
    const double ratio = m.value[i] / v.values[i];
    if (ratio > rep.value) {
      rep.value = ratio;
      rep.argmax = m.witness[i];
    }
  }
  return rep;
}

ConstantReport ap_relative(const GridFunction& v, const GridFunction& u, double p,
                           const CubeFamily& family) {
  if (p <= 1.0) return a1_relative(v, u, family);
  check_positive(v, "ap_relative");
  check_positive(u, "ap_relative");
  if (!(v.grid == u.grid)) throw std::invalid_argument("ap_relative: grid mismatch");
  PrefixSums svu(product(v, u));
  PrefixSums su(u);
  PrefixSums sdual(product(cellwise_pow(v, -1.0 / (p - 1.0)), u));
  const GridSpec& g = v.grid;
  ConstantReport rep{"Ap(u)", 0.0, DyadicCube{}, family.name};
  if (family.cubes.empty()) throw std::invalid_argument("empty cube family");
  for (const DyadicCube& q : family.cubes) {
    const CellRect r = cube_cells(g, q);
    if (r.empty(g.dim)) continue;
    const double uq = su.rect_sum(r);
    const double val = (svu.rect_sum(r) / uq) * std::pow(sdual.rect_sum(r) / uq, p - 1.0);
    if (val > rep.value) {
      rep.value = val;
      rep.argmax = q;
    }
  }
  return rep;
}

ConstantReport ap_constant(const GridFunction& v, double p, const CubeFamily& family) {
  GridFunction unit(v.grid, 1.0);
  ConstantReport rep = ap_relative(v, unit, p, family);
  rep.kind = p <= 1.0 ? "A1" : "Ap";
  return rep;
}

ConstantReport ainf_fujii(const GridFunction& w, const CubeFamily& family) {
  check_positive(w, "ainf_fujii");
  const GridSpec& g = w.grid;
  if (family.cubes.empty()) throw std::invalid_argument("empty cube family");
  PrefixSums sw(w);
  ConstantReport rep{"AinfFW", 0.0, DyadicCube{}, family.name};
  // Per outer cube Q: integrate over Q the family maximal of chi_Q * w.
  // Only cubes P meeting Q contribute, and only their cells inside Q matter.
  std::vector<double> m(static_cast<std::size_t>(g.cell_count()));
  for (const DyadicCube& q : family.cubes) {
    const CellRect rq = cube_cells(g, q);
    if (rq.empty(g.dim)) continue;
    for (std::int64_t y = rq.lo[1]; y < rq.hi[1]; ++y)
      for (std::int64_t x = rq.lo[0]; x < rq.hi[0]; ++x)
        m[static_cast<std::size_t>(g.cell_index(x, y))] = 0.0;
    for (const DyadicCube& pc : family.cubes) {
      const CellRect rp = cube_cells(g, pc);
      if (rp.empty(g.dim)) continue;
      CellRect ri;  // P cap Q
      bool empty = false;
      for (int i = 0; i < g.dim; ++i) {
        ri.lo[i] = std::max(rp.lo[i], rq.lo[i]);
        ri.hi[i] = std::min(rp.hi[i], rq.hi[i]);
        if (ri.hi[i] <= ri.lo[i]) empty = true;
      }
      if (g.dim < 2) {
        ri.lo[1] = 0;
        ri.hi[1] = 1;
      }
      if (empty) continue;
      const double avg = sw.rect_sum(ri) / static_cast<double>(rp.cell_count(g.dim));
      for (std::int64_t y = ri.lo[1]; y < ri.hi[1]; ++y)
        for (std::int64_t x = ri.lo[0]; x < ri.hi[0]; ++x) {
          const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
          if (avg > m[i]) m[i] = avg;
        }
    }
    double itg = 0.0;
    for (std::int64_t y = rq.lo[1]; y < rq.hi[1]; ++y)
      for (std::int64_t x = rq.lo[0]; x < rq.hi[0]; ++x)
        itg += m[static_cast<std::size_t>(g.cell_index(x, y))];
    const double val = itg / sw.rect_sum(rq);
    if (val > rep.value) {
      rep.value = val;
      rep.argmax = q;
    }
  }
  return rep;
}

namespace {

struct RhScan {
  bool holds;
  DyadicCube worst;
  double worst_ratio;
};

RhScan rh_scan(const GridFunction& w, const CubeFamily& family, double r) {
  const GridSpec& g = w.grid;
  PrefixSums sw(w);
  PrefixSums swr(cellwise_pow(w, r));
  RhScan out{true, DyadicCube{}, 0.0};
  for (const DyadicCube& q : family.cubes) {
    const CellRect rc = cube_cells(g, q);
    if (rc.empty(g.dim)) continue;
    const double cells = static_cast<double>(rc.cell_count(g.dim));
    const double lhs = std::pow(swr.rect_sum(rc) / cells, 1.0 / r);
    const double rhs = 2.0 * sw.rect_sum(rc) / cells;
    const double ratio = lhs / rhs;
    if (ratio > out.worst_ratio) {
      out.worst_ratio = ratio;
      out.worst = q;
    }
    if (lhs > rhs * (1.0 + 1e-12)) out.holds = false;
  }
  return out;
}

}  // namespace

ReverseHolderReport reverse_holder_probe(const GridFunction& w, double tau,
                                         const CubeFamily& family) {
  if (!(tau > 0.0)) throw std::invalid_argument("reverse_holder_probe: tau must be positive");
  check_positive(w, "reverse_holder_probe");
  const double ainf = ainf_fujii(w, family).value;
  ReverseHolderReport rep;
  rep.r_w = 1.0 + 1.0 / (tau * ainf);
  RhScan at_tau = rh_scan(w, family, rep.r_w);
  rep.holds = at_tau.holds;
  rep.worst = at_tau.worst;
  rep.worst_ratio = at_tau.worst_ratio;

  // Larger tau means smaller exponent, so feasibility is monotone in tau.
  const double tau_lo_bound = 1e-2, tau_hi_bound = 1e6;
  auto feasible = [&](double t) { return rh_scan(w, family, 1.0 + 1.0 / (t * ainf)).holds; };
  if (feasible(tau_lo_bound)) {
    rep.minimal_tau = tau_lo_bound;
    rep.tau_at_lower_bound = true;
    return rep;
  }
  if (!feasible(tau_hi_bound)) {
    rep.minimal_tau = tau_hi_bound;
    rep.tau_at_upper_bound = true;
    return rep;
  }
  double lo = tau_lo_bound, hi = tau_hi_bound;
  while (hi - lo > 1e-3 * hi) {
    const double mid = std::sqrt(lo * hi);
    if (feasible(mid))
      hi = mid;
    else
      lo = mid;
  }
  rep.minimal_tau = hi;
  return rep;
}

}  // namespace mixedweak
