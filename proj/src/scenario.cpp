#include "mixedweak/scenario.hpp"

#include "mixedweak/orlicz.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mixedweak {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<std::string> split_colon(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ':') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<double> split_commas(const std::string& s) {
  std::vector<double> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::stod(cur));
  return out;
}

}  // namespace

WeightRecipe WeightRecipe::parse_spec(const std::string& spec) {
  const auto tok = split_colon(spec);
  WeightRecipe r;
  const std::string& kind = tok[0];
  auto need = [&](std::size_t n) {
    if (tok.size() != n + 1)
      throw std::invalid_argument("weight spec '" + spec + "': expected " + std::to_string(n) +
                                  " parameters");
  };
  if (kind == "const") {
    need(1);
    r.kind = Kind::Constant;
    r.value = std::stod(tok[1]);
  } else if (kind == "power") {
    need(1);
    r.kind = Kind::Power;
    r.exponent = std::stod(tok[1]);
  } else if (kind == "step") {
    need(2);
    r.kind = Kind::Step;
    r.levels = std::stoi(tok[1]);
    r.step_values = split_commas(tok[2]);
  } else if (kind == "martingale") {
    need(3);
    r.kind = Kind::Martingale;
    r.seed = std::stoull(tok[1]);
    r.levels = std::stoi(tok[2]);
    r.jump = std::stod(tok[3]);
  } else if (kind == "uniform") {
    need(3);
    r.kind = Kind::Uniform;
    r.seed = std::stoull(tok[1]);
    r.lo = std::stod(tok[2]);
    r.hi = std::stod(tok[3]);
  } else if (kind == "indicator") {
    need(4);
    r.kind = Kind::Indicator;
    r.ind_level = std::stoi(tok[1]);
    r.ind_index[0] = std::stoll(tok[2]);
    r.height = std::stod(tok[3]);
    r.background = std::stod(tok[4]);
  } else {
    throw std::invalid_argument("weight spec '" + spec + "': unknown kind '" + kind + "'");
  }
  return r;
}

std::string WeightRecipe::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Constant:
      os << "const:" << value;
      break;
    case Kind::Power:
      os << "power:" << exponent;
      break;
    case Kind::Step: {
      os << "step:" << levels << ":";
      for (std::size_t i = 0; i < step_values.size(); ++i)
        os << (i ? "," : "") << step_values[i];
      break;
    }
    case Kind::Martingale:
      os << "martingale:" << seed << ":" << levels << ":" << jump;
      break;
    case Kind::Uniform:
      os << "uniform:" << seed << ":" << lo << ":" << hi;
      break;
    case Kind::Indicator:
      os << "indicator:" << ind_level << ":" << ind_index[0] << ":" << height << ":"
         << background;
      break;
  }
  return os.str();
}

namespace {

GridFunction realize(const GridSpec& g, const WeightRecipe& r) {
  using K = WeightRecipe::Kind;
  switch (r.kind) {
    case K::Constant:
      return GridFunction(g, r.value, r.value >= 0.0);
    case K::Power: {
      if (!(r.exponent > -g.dim + 1e-3) || r.exponent > 0.0)
        throw std::invalid_argument("power weight exponent outside (-n + 1e-3, 0]");
      const double eps = r.eps_scale * std::ldexp(1.0, -2 * g.level);
      return sample_midpoints(
          g,
          [&](const std::array<double, 2>& x) {
            double norm2 = 0.0;
            for (int i = 0; i < g.dim; ++i) norm2 += x[i] * x[i];
            return std::pow(std::sqrt(norm2), r.exponent);
          },
          eps);
    }
    case K::Step: {
      const std::int64_t per = std::int64_t{1} << r.levels;
      const std::int64_t want = std::int64_t{1} << (g.dim * r.levels);
      if (r.levels < 0 || r.levels > g.level)
        throw std::invalid_argument("step weight: levels out of range");
      if (static_cast<std::int64_t>(r.step_values.size()) != want)
        throw std::invalid_argument("step weight: expected 2^(n*levels) values");
      std::vector<double> vals(static_cast<std::size_t>(g.cell_count()));
      const int shift = g.level - r.levels;
      for (std::int64_t c = 0; c < g.cell_count(); ++c) {
        const auto xy = g.cell_coords(c);
        const std::int64_t sx = xy[0] >> shift;
        const std::int64_t sy = g.dim > 1 ? (xy[1] >> shift) : 0;
        vals[static_cast<std::size_t>(c)] =
            r.step_values[static_cast<std::size_t>(sx + sy * per)];
      }
      return GridFunction(g, std::move(vals));
    }
    case K::Martingale: {
      if (r.jump < 0.0 || r.jump >= 1.0)
        throw std::invalid_argument("martingale weight: jump must be in [0,1)");
      if (r.levels < 0 || r.levels > g.level)
        throw std::invalid_argument("martingale weight: levels out of range");
      Rng rng(r.seed);
      // multiplicative cascade: each split multiplies children by mean-one
      // factors (1 +- delta) per axis, drawn per node
      std::vector<double> cur{1.0};
      for (int l = 0; l < r.levels; ++l) {
        const std::int64_t per = std::int64_t{1} << l;
        const std::int64_t pern = std::int64_t{1} << (l + 1);
        std::vector<double> next(static_cast<std::size_t>(
            std::int64_t{1} << (g.dim * (l + 1))));
        for (std::int64_t cy = 0; cy < (g.dim > 1 ? per : 1); ++cy)
          for (std::int64_t cx = 0; cx < per; ++cx) {
            const double base =
                cur[static_cast<std::size_t>(cx + cy * per)];
            double d0 = r.jump * (2.0 * rng.uniform01() - 1.0);
            double d1 = g.dim > 1 ? r.jump * (2.0 * rng.uniform01() - 1.0) : 0.0;
            for (int b = 0; b < (1 << g.dim); ++b) {
              const std::int64_t nx = 2 * cx + (b & 1);
              const std::int64_t ny = g.dim > 1 ? 2 * cy + ((b >> 1) & 1) : 0;
              double mult = (b & 1) ? 1.0 + d0 : 1.0 - d0;
              if (g.dim > 1) mult *= ((b >> 1) & 1) ? 1.0 + d1 : 1.0 - d1;
              next[static_cast<std::size_t>(nx + ny * pern)] = base * mult;
            }
          }
        cur = std::move(next);
      }
      // extend piecewise-constant down to the finest level
      std::vector<double> vals(static_cast<std::size_t>(g.cell_count()));
      const int shift = g.level - r.levels;
      const std::int64_t per = std::int64_t{1} << r.levels;
      for (std::int64_t c = 0; c < g.cell_count(); ++c) {
        const auto xy = g.cell_coords(c);
        const std::int64_t sx = xy[0] >> shift;
        const std::int64_t sy = g.dim > 1 ? (xy[1] >> shift) : 0;
        vals[static_cast<std::size_t>(c)] = cur[static_cast<std::size_t>(sx + sy * per)];
      }
      return GridFunction(g, std::move(vals), true);
    }
    case K::Uniform: {
      Rng rng(r.seed);
      std::vector<double> vals(static_cast<std::size_t>(g.cell_count()));
      for (auto& v : vals) v = rng.uniform(r.lo, r.hi);
      return GridFunction(g, std::move(vals), r.lo >= 0.0);
    }
    case K::Indicator: {
      DyadicCube q{0, r.ind_level, r.ind_index};
      const CellRect rect = cube_cells(g, q);
      std::vector<double> vals(static_cast<std::size_t>(g.cell_count()), r.background);
      for (std::int64_t y = rect.lo[1]; y < rect.hi[1]; ++y)
        for (std::int64_t x = rect.lo[0]; x < rect.hi[0]; ++x)
          vals[static_cast<std::size_t>(g.cell_index(x, y))] = r.height;
      return GridFunction(g, std::move(vals));
    }
  }
  throw std::logic_error("realize: unreachable");
}

}  // namespace

GridFunction make_weight(const GridSpec& g, const WeightRecipe& r) {
  GridFunction w = realize(g, r);
  for (double v : w.values)
    if (!(v > 0.0)) throw std::invalid_argument("weight recipe produced a nonpositive value");
  w.nonneg = true;
  return w;
}

GridFunction make_symbol(const GridSpec& g, const WeightRecipe& r) { return realize(g, r); }

GridFunction make_input(const GridSpec& g, const WeightRecipe& r) {
  GridFunction f = realize(g, r);
  for (double v : f.values)
    if (v < 0.0) throw std::invalid_argument("input recipe produced a negative value");
  f.nonneg = true;
  return f;
}

CellSet good_set(const GridFunction& tout, const GridFunction& v, const GridFunction& mtilde,
                 double t) {
  if (!(tout.grid == v.grid) || !(tout.grid == mtilde.grid))
    throw std::invalid_argument("good_set: grid mismatch");
  if (!(t > 0.0)) throw std::invalid_argument("good_set: t must be positive");
  CellSet out(tout.grid);
  for (std::int64_t c = 0; c < tout.grid.cell_count(); ++c) {
    const std::size_t i = static_cast<std::size_t>(c);
    if (!(v.values[i] > 0.0)) throw std::invalid_argument("good_set: v must be positive");
    if (tout.values[i] / v.values[i] > t && mtilde.values[i] <= 0.5 * t) out.set(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// shared endpoint machinery

namespace {

struct Context {
  GridSpec g;
  GridFunction u, v, uv, f;
  double fnorm = 0.0;  // ||f||_{L^1(uv)}
  ScenarioConstants consts;
  bool eps_floor_sensitive = false;
};

// Moving the singular-weight floor between 2^{-L}, 2^{-2L}, 2^{-3L} should
// leave the sampled weight untouched on the admissible exponent range.
bool floor_sensitive(const GridSpec& g, const WeightRecipe& r) {
  if (r.kind != WeightRecipe::Kind::Power) return false;
  const GridFunction base = make_weight(g, r);
  for (double scale : {std::ldexp(1.0, g.level), std::ldexp(1.0, -g.level)}) {
    WeightRecipe moved = r;
    moved.eps_scale = r.eps_scale * scale;
    const GridFunction other = make_weight(g, moved);
    for (std::size_t i = 0; i < base.values.size(); ++i)
      if (base.values[i] != other.values[i]) return true;
  }
  return false;
}

ScenarioConstants measure_constants(const GridFunction& u,
                                    const GridFunction& v, const GridFunction& uv, double p,
                                    const CubeFamily& fam) {
  ScenarioConstants c;
  c.a1_u = a1_constant(u, fam).value;
  c.a1_v = a1_constant(v, fam).value;
  c.ainf_uv = ainf_fujii(uv, fam).value;
  c.ainf_u = ainf_fujii(u, fam).value;
  c.ainf_v = ainf_fujii(v, fam).value;
  c.ap_v_u = ap_relative(v, u, p, fam).value;
  c.a1_u_v = a1_relative(u, v, fam).value;
  return c;
}

Context build_context(const Scenario& sc, const CubeFamily& fam) {
  Context ctx;
  ctx.g = sc.grid;
  ctx.u = make_weight(ctx.g, sc.u);
  ctx.v = make_weight(ctx.g, sc.v);
  ctx.uv = product(ctx.u, ctx.v);
  ctx.f = make_input(ctx.g, sc.f);
  ctx.fnorm = integrate(product(ctx.f, ctx.uv));
  if (!(ctx.fnorm > 0.0)) throw std::invalid_argument("scenario: f vanishes identically");
  ctx.consts = measure_constants(ctx.u, ctx.v, ctx.uv, sc.op.p, fam);
  ctx.eps_floor_sensitive = floor_sensitive(ctx.g, sc.u) || floor_sensitive(ctx.g, sc.v);
  return ctx;
}

BoundInputs bound_inputs(const Scenario& sc, const ScenarioConstants& c) {
  BoundInputs b;
  b.a1_u = c.a1_u;
  b.a1_v = c.a1_v;
  b.ainf_uv = c.ainf_uv;
  b.ainf_u = c.ainf_u;
  b.ainf_v = c.ainf_v;
  b.ap_v_u = c.ap_v_u;
  b.a1_u_v = c.a1_u_v;
  b.p = sc.op.p;
  b.m = sc.op.m;
  b.r = sc.op.r;
  return b;
}

std::vector<double> tgrid_values(const TGridSpec& tg, double natural) {
  std::vector<double> ts(static_cast<std::size_t>(tg.count));
  for (int i = 0; i < tg.count; ++i) {
    const double frac = tg.count > 1 ? static_cast<double>(i) / (tg.count - 1) : 0.0;
    ts[static_cast<std::size_t>(i)] =
        natural * tg.tmin * std::pow(tg.tmax / tg.tmin, frac);
  }
  return ts;
}

// uv-mass of { tout / v > t } (or >= t with equality allowed)
double level_set_mass(const GridFunction& tout, const GridFunction& v, const GridFunction& uv,
                      double t, bool closed = false) {
  double acc = 0.0;
  for (std::size_t i = 0; i < tout.values.size(); ++i) {
    const double lhs = tout.values[i];
    const double rhs = t * v.values[i];
    if (closed ? lhs >= rhs : lhs > rhs) acc += uv.values[i];
  }
  return acc * tout.grid.cell_volume();
}

// sup_t of score(t, uv({tout/v > t})). Between breakpoints of the ratio the
// level-set mass is constant and every score used here increases in t, so the
// sup is the left limit at a breakpoint: score(val, uv({ratio >= val})).
// Grid points are scanned as well and the argmax t is reported.
struct WeakSup {
  double value = 0.0;
  double t_star = 1.0;
};
WeakSup weak_sup(const GridFunction& tout, const GridFunction& v, const GridFunction& uv,
                 const std::vector<double>& grid_ts,
                 const std::function<double(double t, double mass)>& score) {
  WeakSup out;
  if (!grid_ts.empty()) out.t_star = grid_ts.front();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double t : grid_ts) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    const double val = score(t, level_set_mass(tout, v, uv, t));
    if (val > out.value) {
      out.value = val;
      out.t_star = t;
    }
  }
  std::vector<double> breaks(tout.values.size());
  for (std::size_t i = 0; i < breaks.size(); ++i) breaks[i] = tout.values[i] / v.values[i];
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  for (double t : breaks) {
    if (!(t > 0.0) || t < lo || t > hi) continue;
    const double val = score(t, level_set_mass(tout, v, uv, t, /*closed=*/true));
    if (val > out.value) {
      out.value = val;
      out.t_star = t;
    }
  }
  return out;
}

GridFunction indicator_of(const GridSpec& g, const CellSet& s) {
  std::vector<double> vals(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (std::int64_t c : s.cells()) vals[static_cast<std::size_t>(c)] = 1.0;
  return GridFunction(g, std::move(vals), true);
}

// The good set {tout/v > t, m <= t/2} is built at the level t carrying the
// most uv-mass. On the truncated cube the t = 1 normalization of the
// unbounded-domain argument is degenerate (the maximal side sits above 1/2
// everywhere once uv(Q0) is order one); by homogeneity, splitting at level t
// is the same reduction applied to f/t.
double pick_split_t(const GridFunction& tout, const GridFunction& v, const GridFunction& m,
                    const GridFunction& uv, const std::vector<double>& grid_ts) {
  std::vector<double> cand = grid_ts;
  for (std::size_t i = 0; i < tout.values.size(); ++i) {
    cand.push_back(tout.values[i] / v.values[i]);
    cand.push_back(2.0 * m.values[i]);
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < cand.size(); ++i)
    mids.push_back(0.5 * (cand[i] + cand[i + 1]));
  cand.insert(cand.end(), mids.begin(), mids.end());
  std::sort(cand.begin(), cand.end());
  double best_t = 1.0, best_mass = 0.0;
  for (double t : cand) {
    if (!(t > 0.0)) continue;
    double mass = 0.0;
    for (std::size_t i = 0; i < tout.values.size(); ++i)
      if (tout.values[i] > t * v.values[i] && m.values[i] <= 0.5 * t) mass += uv.values[i];
    mass *= tout.grid.cell_volume();
    if (mass > best_mass) {
      best_mass = mass;
      best_t = t;
    }
  }
  return best_t;
}

SparseFamily build_family(const Context& ctx, const Scenario& sc) {
  if (sc.family.kind == FamilyRecipe::Kind::Explicit)
    return with_default_selection(ctx.g, 0, sc.family.cubes);
  const GridFunction fv = product(ctx.f, ctx.v);
  return cz_stopping_family(fv, base_cube(ctx.g), sc.family.a);
}

}  // namespace

StratumTable stratum_estimates(const GridSpec& g, const GridFunction& uv,
                               const SparseFamily& fam, const StratumSpec& spec,
                               double uv_g, int h) {
  if (!(uv.grid == g)) throw std::invalid_argument("stratum_estimates: grid mismatch");
  StratumTable table;
  table.h = h;
  table.uv_g = uv_g;
  // keep cubes where both functionals are positive; zero terms drop out
  SparseFamily kept;
  kept.lattice = fam.lattice;
  std::vector<double> f1v, f2v;
  double direct = 0.0;
  for (const DyadicCube& q : fam.cubes) {
    const double a = spec.f1(q);
    const double b = spec.f2(q);
    if (!(a > 0.0) || !(b > 0.0)) continue;
    kept.cubes.push_back(q);
    f1v.push_back(a);
    f2v.push_back(b);
    direct += spec.summand_from(a, b) * integrate(uv, q);
  }
  table.direct_total = direct;
  if (!kept.cubes.empty()) {
    Stratification st;
    for (std::size_t i = 0; i < kept.cubes.size(); ++i) {
      const int j = dyadic_bin(f1v[i]);
      const int k = dyadic_bin(f2v[i]);
      st.bins[{k, j}].push_back(i);
    }
    double binned = 0.0;
    for (const auto& [kj, idxs] : st.bins) {
      StratumRow row;
      row.k = kj.first;
      row.j = kj.second;
      for (std::size_t i : idxs)
        row.s_kj += spec.summand_from(f1v[i], f2v[i]) * integrate(uv, kept.cubes[i]);
      row.top = spec.top(row.k, row.j);
      row.bottom = spec.bottom(row.k, row.j);
      binned += row.s_kj;
      table.rows.push_back(row);
    }
    table.binned_total = binned;
  }
  const double scale = std::max(std::abs(table.direct_total), 1e-300);
  table.consistent = std::abs(table.binned_total - table.direct_total) <= 1e-9 * scale;
  return table;
}

// ---------------------------------------------------------------------------
// endpoint: Calderon-Zygmund sparse case

BoundReport endpoint_ratio_cz(const Scenario& sc) {
  BoundReport rep;
  rep.scenario_id = sc.id;
  rep.family_id = sc.family_id;
  rep.calibrate = sc.calibrate;
  const CubeFamily fam = base_family(sc.grid);
  Context ctx = build_context(sc, fam);
  rep.constants = ctx.consts;
  rep.eps_floor_sensitive = ctx.eps_floor_sensitive;

  SparseFamily S = build_family(ctx, sc);
  const GridFunction fv = product(ctx.f, ctx.v);
  const GridFunction tout = sparse_operator(ctx.g, S, fv);

  // measured endpoint: sup_t t * uv({A_S(fv)/v > t}) / ||f||_{L1(uv)}
  const double natural = ctx.fnorm / integrate(ctx.uv);
  const WeakSup ws =
      weak_sup(tout, ctx.v, ctx.uv, tgrid_values(sc.tgrid, natural),
               [&](double t, double mass) { return t * mass / ctx.fnorm; });
  rep.measured = ws.value;
  rep.t_star = ws.t_star;

  BoundInputs b = bound_inputs(sc, ctx.consts);
  rep.raw_bound = sc.op.theorem == 1 ? thm1_cz_bound(b) : thm2_cz_bound(b);

  // stratification with ||f||_{L1(uv)} = 1 at the fattest split level
  const GridFunction fn = scaled(ctx.f, 1.0 / ctx.fnorm);
  const GridFunction tn = scaled(tout, 1.0 / ctx.fnorm);
  const GridFunction& split_w = sc.op.theorem == 1 ? ctx.uv : ctx.v;
  const GridFunction mtilde = dyadic_maximal(fn, fam, &split_w);
  const double ts = pick_split_t(tn, ctx.v, mtilde, ctx.uv, tgrid_values(sc.tgrid, natural));
  const CellSet G = good_set(tn, ctx.v, mtilde, ts);
  const GridFunction gfun = indicator_of(ctx.g, G);
  const double uv_g = integrate(ctx.uv, G);

  StratumSpec spec;
  if (sc.op.theorem == 1) {
    spec.f1 = [&](const DyadicCube& q) { return weighted_average(fn, ctx.uv, q) / ts; };
    spec.f2 = [&](const DyadicCube& q) { return weighted_average(gfun, ctx.u, q); };
    spec.top = [&](int k, int) { return std::ldexp(1.0, -k) * ctx.consts.ainf_uv; };
    spec.bottom = [&](int k, int j) {
      return ctx.consts.ainf_uv * ctx.consts.ap_v_u * std::ldexp(1.0, -j) *
             std::exp2(k * (sc.op.p - 1.0)) * uv_g;
    };
  } else {
    spec.f1 = [&](const DyadicCube& q) { return weighted_average(fn, ctx.v, q) / ts; };
    spec.f2 = [&](const DyadicCube& q) { return weighted_average(gfun, ctx.uv, q); };
    spec.top = [&](int k, int) {
      return std::ldexp(1.0, -k) * ctx.consts.a1_u_v * ctx.consts.ainf_v;
    };
    spec.bottom = [&](int k, int j) {
      return ctx.consts.ainf_uv * std::ldexp(1.0, -j) * std::ldexp(1.0, -k) * uv_g;
    };
  }
  spec.summand_from = [](double a, double bb) { return a * bb; };
  rep.strata.push_back(stratum_estimates(ctx.g, ctx.uv, S, spec, uv_g, -1));
  rep.strata.back().t_split = ts;
  rep.strat_consistent = rep.strata.back().consistent;

  rep.union_mass_ok = union_mass_check(ctx.g, S, ctx.uv).holds;
  rep.reduction_ok = reduction_budget_check(rep.raw_bound, 1.0 / ts, uv_g).ok;

  apply_constant(rep, 1.0);
  return rep;
}

// ---------------------------------------------------------------------------
// endpoint: commutator modular case

BoundReport endpoint_modular_commutator(const Scenario& sc) {
  if (sc.op.m < 0) throw std::invalid_argument("commutator: m must be >= 0");
  if (!(sc.op.r > 1.0)) throw std::invalid_argument("commutator: r must exceed 1");
  BoundReport rep;
  rep.scenario_id = sc.id;
  rep.family_id = sc.family_id;
  rep.calibrate = sc.calibrate;
  const CubeFamily fam = base_family(sc.grid);
  Context ctx = build_context(sc, fam);
  rep.constants = ctx.consts;
  rep.eps_floor_sensitive = ctx.eps_floor_sensitive;

  SparseFamily S = build_family(ctx, sc);
  const GridFunction b = make_symbol(ctx.g, sc.op.b);
  GridFunction unit(ctx.g, 1.0);
  const double osc = osc_norm(b, sc.op.r, unit);

  const GridFunction fv = product(ctx.f, ctx.v);
  // T = sum_h A_S^{m,h}(b, fv)
  GridFunction tsum(ctx.g, 0.0);
  for (int h = 0; h <= sc.op.m; ++h) {
    const GridFunction part = commutator_sparse(ctx.g, S, b, fv, sc.op.m, h);
    for (std::size_t i = 0; i < tsum.values.size(); ++i) tsum.values[i] += part.values[i];
  }

  BoundInputs bi = bound_inputs(sc, ctx.consts);
  rep.raw_bound = sc.op.theorem == 1 ? thm1_comm_gamma(bi) : thm2_comm_gamma(bi);

  if (osc == 0.0) {
    // constant symbol: operator vanishes identically
    rep.measured = 0.0;
    rep.t_star = 1.0;
    apply_constant(rep, 1.0);
    return rep;
  }

  // measured: sup_t uv({T/v > t}) / int Phi_{m/r}(|f| ||b||^m / t) uv
  const double rho = static_cast<double>(sc.op.m) / sc.op.r;
  const double bm = std::pow(osc, sc.op.m);
  const double natural = ctx.fnorm / integrate(ctx.uv);
  const WeakSup ws = weak_sup(
      tsum, ctx.v, ctx.uv, tgrid_values(sc.tgrid, natural), [&](double t, double mass) {
        double denom = 0.0;
        for (std::size_t i = 0; i < ctx.f.values.size(); ++i)
          denom += phi_rho(ctx.f.values[i] * bm / t, rho) * ctx.uv.values[i];
        denom *= ctx.g.cell_volume();
        return denom > 0.0 ? mass / denom : 0.0;
      });
  rep.measured = ws.value;
  rep.t_star = ws.t_star;

  // per-h stratification tables at the normalized scale (||b||_osc = 1,
  // ||f||_{L1(uv)} = 1)
  const GridFunction fn = scaled(ctx.f, 1.0 / ctx.fnorm);
  const GridFunction bn = scaled(b, 1.0 / osc);
  for (int h = 0; h <= sc.op.m; ++h) {
    const double rho_f = static_cast<double>(h) / sc.op.r;
    const double rho_g = static_cast<double>(sc.op.m - h) / sc.op.r;
    const YoungFunction yf = YoungFunction::llogl(rho_f);
    const YoungFunction yg = YoungFunction::llogl(rho_g);
    const GridFunction& fweight = sc.op.theorem == 1 ? ctx.uv : ctx.v;
    const GridFunction& gweight = sc.op.theorem == 1 ? ctx.u : ctx.uv;

    const GridFunction part = commutator_sparse(ctx.g, S, bn, product(fn, ctx.v), sc.op.m, h);
    const GridFunction mtilde = orlicz_maximal(fn, yf, fweight, fam);
    const double ts =
        pick_split_t(part, ctx.v, mtilde, ctx.uv, tgrid_values(sc.tgrid, natural));
    const CellSet G = good_set(part, ctx.v, mtilde, ts);
    const GridFunction gfun = indicator_of(ctx.g, G);
    const double uv_g = integrate(ctx.uv, G);
    double modphi = 0.0;
    for (std::size_t i = 0; i < fn.values.size(); ++i)
      modphi += phi_rho(fn.values[i] / ts, rho_f) * ctx.uv.values[i];
    modphi *= ctx.g.cell_volume();

    StratumSpec spec;
    spec.f1 = [&](const DyadicCube& q) { return luxemburg_norm(fn, yf, fweight, q) / ts; };
    spec.f2 = [&](const DyadicCube& q) {
      return integrate(ctx.uv, q) > 0.0 && weighted_average(gfun, gweight, q) > 0.0
                 ? luxemburg_norm(gfun, yg, gweight, q)
                 : 0.0;
    };
    if (sc.op.theorem == 1) {
      spec.top = [&, modphi](int k, int j) {
        return ctx.consts.ainf_uv * std::ldexp(1.0, -k) *
               std::pow(static_cast<double>(j), rho_f) * modphi;
      };
      spec.bottom = [&, uv_g](int k, int j) {
        return ctx.consts.ainf_uv * ctx.consts.ap_v_u * std::ldexp(1.0, -j) *
               std::exp2(k * (sc.op.p - 1.0)) *
               std::pow(static_cast<double>(k), rho_g * sc.op.p) * uv_g;
      };
    } else {
      spec.top = [&, modphi](int k, int j) {
        return ctx.consts.a1_u_v * ctx.consts.ainf_v * std::ldexp(1.0, -k) *
               std::pow(static_cast<double>(j), rho_f) * modphi;
      };
      spec.bottom = [&, uv_g](int k, int j) {
        return ctx.consts.ainf_uv * std::ldexp(1.0, -j) * std::exp2(k * (sc.op.p - 1.0)) *
               std::pow(static_cast<double>(k), rho_g * sc.op.p) * uv_g;
      };
    }
    spec.summand_from = [](double a, double bb) { return a * bb; };
    rep.strata.push_back(stratum_estimates(ctx.g, ctx.uv, S, spec, uv_g, h));
    rep.strata.back().t_split = ts;
    rep.strat_consistent = rep.strat_consistent && rep.strata.back().consistent;
  }

  rep.union_mass_ok = union_mass_check(ctx.g, S, ctx.uv).holds;
  const double t0 = rep.strata.empty() ? 1.0 : rep.strata.front().t_split;
  double modphi_m = 0.0;
  for (std::size_t i = 0; i < fn.values.size(); ++i)
    modphi_m += phi_rho(fn.values[i] / t0, rho) * ctx.uv.values[i];
  modphi_m *= ctx.g.cell_volume();
  rep.reduction_ok =
      reduction_budget_check(rep.raw_bound, modphi_m,
                             rep.strata.empty() ? 0.0 : rep.strata.front().uv_g)
          .ok;

  apply_constant(rep, 1.0);
  return rep;
}

// ---------------------------------------------------------------------------
// endpoint: rough bilinear chain

BoundReport endpoint_ratio_rough(const Scenario& sc) {
  if (!(sc.op.r > 1.0)) throw std::invalid_argument("rough: r must exceed 1");
  BoundReport rep;
  rep.scenario_id = sc.id;
  rep.family_id = sc.family_id;
  rep.calibrate = sc.calibrate;
  const CubeFamily fam = all_lattices_family(sc.grid);
  Context ctx = build_context(sc, fam);
  rep.constants = ctx.consts;
  rep.eps_floor_sensitive = ctx.eps_floor_sensitive;

  // s policy: reverse Holder exponent of the driving weight
  const GridFunction& W = sc.op.theorem == 1 ? ctx.u : ctx.uv;
  const double ainf_w = sc.op.theorem == 1 ? ctx.consts.ainf_u : ctx.consts.ainf_uv;
  double s = sc.op.s_policy.s;
  if (sc.op.s_policy.kind != SPolicy::Kind::FixedS) {
    double tau = sc.op.s_policy.tau;
    if (sc.op.s_policy.kind == SPolicy::Kind::Auto)
      tau = reverse_holder_probe(W, 8.0, fam).minimal_tau;
    s = 1.0 + 1.0 / (2.0 * tau * ainf_w);
  }
  s = std::min(s, 2.0);
  const double sprime = s / (s - 1.0);

  // per-lattice stopping families of fv inside the shifted lattices
  const GridFunction fv = product(ctx.f, ctx.v);
  std::vector<SparseFamily> families;
  for (int lat : shifted_lattices(ctx.g))
    families.push_back(cz_stopping_family(fv, DyadicCube{lat, 0, {0, 0}}, sc.family.a));

  const GridFunction fn = scaled(ctx.f, 1.0 / ctx.fnorm);
  const GridFunction fnv = product(fn, ctx.v);
  const GridFunction& split_w = sc.op.theorem == 1 ? ctx.uv : ctx.v;

  // M over the union of the shifted lattices
  std::vector<double> mcells(static_cast<std::size_t>(ctx.g.cell_count()), 0.0);
  for (int lat : shifted_lattices(ctx.g)) {
    const GridFunction ml = dyadic_maximal(fn, lattice_family(ctx.g, lat), &split_w);
    for (std::size_t i = 0; i < mcells.size(); ++i)
      mcells[i] = std::max(mcells[i], ml.values[i]);
  }
  const GridFunction mtilde(ctx.g, std::move(mcells), true);

  GridFunction tproxy(ctx.g, 0.0);
  for (const SparseFamily& S : families) {
    const GridFunction part = sparse_operator(ctx.g, S, fnv);
    for (std::size_t i = 0; i < tproxy.values.size(); ++i)
      tproxy.values[i] += part.values[i];
  }
  const double natural = 1.0 / integrate(ctx.uv);  // fn already has norm one
  const double ts =
      pick_split_t(tproxy, ctx.v, mtilde, ctx.uv, tgrid_values(sc.tgrid, natural));
  const CellSet G = good_set(tproxy, ctx.v, mtilde, ts);
  const GridFunction gfun = indicator_of(ctx.g, G);
  const double uv_g = integrate(ctx.uv, G);

  // chain value and per-cube link checks
  PrefixSums sum_fnv(fnv);
  PrefixSums sum_us(cellwise_pow(ctx.u, s));
  PrefixSums sum_gus(product(gfun, cellwise_pow(ctx.u, s)));
  PrefixSums sum_u(ctx.u);
  PrefixSums sum_gu(product(gfun, ctx.u));
  PrefixSums sum_ws(cellwise_pow(W, s));
  PrefixSums sum_gws(product(gfun, cellwise_pow(W, s)));
  PrefixSums sum_w(W);
  PrefixSums sum_gw(product(gfun, W));
  PrefixSums sum_v(ctx.v);

  double chain = 0.0;
  bool factor_ok = true, links_ok = true;
  for (const SparseFamily& S : families) {
    for (const DyadicCube& q : S.cubes) {
      const CellRect r = cube_cells(ctx.g, q);
      const double cells = static_cast<double>(r.cell_count(ctx.g.dim));
      const double vol = cells * ctx.g.cell_volume();
      const double avg_fnv = sum_fnv.rect_sum(r) / cells;
      const double gus = sum_gus.rect_sum(r);
      const double us = sum_us.rect_sum(r);
      const double term = std::pow(gus / cells, 1.0 / s);  // <chi_G u>_{Q,s}
      chain += avg_fnv * term * vol;

      // factorization identity <chi_G u>_{Q,s} = <chi_G>_{Q,s}^{u^s} <u>_{Q,s}
      if (gus > 0.0) {
        const double lhs = term;
        const double rhs = std::pow(gus / us, 1.0 / s) * std::pow(us / cells, 1.0 / s);
        if (std::abs(lhs - rhs) > 1e-12 * std::max(lhs, rhs)) factor_ok = false;
      }

      // absorption: theorem 1 switches u-averages to values via [u]_A1;
      // theorem 2 switches v(Q)/|Q| the same way
      double minw = std::numeric_limits<double>::infinity();
      const GridFunction& absorb_w = sc.op.theorem == 1 ? ctx.u : ctx.v;
      for (std::int64_t yy = r.lo[1]; yy < r.hi[1]; ++yy)
        for (std::int64_t xx = r.lo[0]; xx < r.hi[0]; ++xx)
          minw = std::min(minw,
                          absorb_w.values[static_cast<std::size_t>(ctx.g.cell_index(xx, yy))]);
      if (sc.op.theorem == 1) {
        const double lhs = std::pow(us / cells, 1.0 / s);
        if (lhs > 2.0 * ctx.consts.a1_u * minw * (1.0 + 1e-9)) links_ok = false;
      } else {
        const double lhs = sum_v.rect_sum(r) / cells;
        if (lhs > ctx.consts.a1_v * minw * (1.0 + 1e-9)) links_ok = false;
      }

      // reverse Holder step: W^s(G cap Q)/W^s(Q) <= 2^{s-1/2} (W(G cap Q)/W(Q))^{1/2}
      const double gws = sum_gws.rect_sum(r);
      const double ws = sum_ws.rect_sum(r);
      const double gw = sum_gw.rect_sum(r);
      const double w_all = sum_w.rect_sum(r);
      const double rh_lhs = gws / ws;
      const double rh_rhs = std::exp2(s - 0.5) * std::sqrt(gw / w_all);
      if (rh_lhs > rh_rhs * (1.0 + 1e-9)) links_ok = false;
    }
  }
  rep.factorization_ok = factor_ok;
  rep.links_ok = links_ok;
  // both sides of the split-level reduction scaled by ts to keep the report
  // homogeneity-stable: chain(f/ts) <= c raw / ts + uv(G)/2
  rep.measured = sprime * chain;
  rep.absorption = 0.5 * ts * uv_g;
  rep.t_star = ts;

  BoundInputs bi = bound_inputs(sc, ctx.consts);
  rep.raw_bound = sc.op.theorem == 1 ? thm1_rough_bound(bi) : thm2_rough_bound(bi);

  // stratification of the post-absorption summand
  for (const SparseFamily& S : families) {
    StratumSpec spec;
    if (sc.op.theorem == 1) {
      spec.f1 = [&](const DyadicCube& q) { return weighted_average(fn, ctx.uv, q) / ts; };
      spec.f2 = [&](const DyadicCube& q) { return p_average(gfun, q, 2.0 * s, &ctx.u); };
      spec.top = [&](int k, int) { return std::ldexp(1.0, -k) * ctx.consts.ainf_uv; };
      spec.bottom = [&, uv_g](int k, int j) {
        return ctx.consts.ainf_uv * ctx.consts.ap_v_u * std::ldexp(1.0, -j) *
               std::exp2((2.0 * sc.op.p * s - 1.0) * k) * uv_g;
      };
      spec.summand_from = [](double a, double bb) { return a * bb; };
    } else {
      spec.f1 = [&](const DyadicCube& q) { return weighted_average(fn, ctx.v, q) / ts; };
      spec.f2 = [&](const DyadicCube& q) { return weighted_average(gfun, ctx.uv, q); };
      spec.top = [&](int k, int) {
        return std::ldexp(1.0, -k) * ctx.consts.a1_u_v * ctx.consts.ainf_v;
      };
      spec.bottom = [&, uv_g](int k, int j) {
        return ctx.consts.ainf_uv * std::ldexp(1.0, -j) * std::exp2(k) * uv_g;
      };
      spec.summand_from = [](double a, double bb) { return a * std::sqrt(bb); };
    }
    rep.strata.push_back(stratum_estimates(ctx.g, ctx.uv, S, spec, uv_g, -1));
    rep.strata.back().t_split = ts;
    rep.strat_consistent = rep.strat_consistent && rep.strata.back().consistent;
    rep.union_mass_ok = rep.union_mass_ok && union_mass_check(ctx.g, S, ctx.uv).holds;
  }

  rep.reduction_ok = reduction_budget_check(rep.raw_bound, 1.0 / ts, uv_g).ok;
  apply_constant(rep, 1.0);
  return rep;
}

BoundReport run_scenario(const Scenario& sc) {
  switch (sc.op.kind) {
    case OperatorSpec::Kind::CzSparse:
      return endpoint_ratio_cz(sc);
    case OperatorSpec::Kind::Commutator:
      return endpoint_modular_commutator(sc);
    case OperatorSpec::Kind::Rough:
      return endpoint_ratio_rough(sc);
  }
  throw std::logic_error("run_scenario: unreachable");
}

void apply_constant(BoundReport& rep, double c) {
  rep.c_used = c;
  rep.theoretical = c * rep.raw_bound + rep.absorption;
  const bool finite = std::isfinite(rep.measured) && std::isfinite(rep.theoretical);
  const bool ineq = rep.measured <= rep.theoretical * (1.0 + 1e-9);
  rep.pass = finite && ineq && rep.union_mass_ok && rep.strat_consistent &&
             rep.factorization_ok && rep.links_ok && rep.reduction_ok;
}

// ---------------------------------------------------------------------------
// random instances

GridFunction random_weight(const GridSpec& g, Rng& rng) {
  const int mode = static_cast<int>(rng.uniform_int(0, 3));
  WeightRecipe r;
  switch (mode) {
    case 0:
      r.kind = WeightRecipe::Kind::Power;
      r.exponent = rng.uniform(-0.7, 0.0);
      break;
    case 1: {
      r.kind = WeightRecipe::Kind::Step;
      r.levels = static_cast<int>(rng.uniform_int(1, std::min(3, g.level)));
      const std::int64_t want = std::int64_t{1} << (g.dim * r.levels);
      for (std::int64_t i = 0; i < want; ++i)
        r.step_values.push_back(std::exp(rng.uniform(-1.5, 1.5)));
      break;
    }
    case 2:
      r.kind = WeightRecipe::Kind::Martingale;
      r.seed = rng.eng();
      r.levels = static_cast<int>(rng.uniform_int(1, std::min(4, g.level)));
      r.jump = rng.uniform(0.1, 0.8);
      break;
    default:
      r.kind = WeightRecipe::Kind::Uniform;
      r.seed = rng.eng();
      r.lo = rng.uniform(0.2, 0.8);
      r.hi = r.lo + rng.uniform(0.5, 3.0);
      break;
  }
  return make_weight(g, r);
}

GridFunction random_nonneg(const GridSpec& g, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(g.cell_count()), 0.0);
  const int mode = static_cast<int>(rng.uniform_int(0, 2));
  if (mode == 0) {
    for (auto& v : vals) v = rng.uniform01();
  } else if (mode == 1) {
    // spiky: a few tall plateaus over a small background
    for (auto& v : vals) v = 0.05 * rng.uniform01();
    const int spikes = static_cast<int>(rng.uniform_int(1, 4));
    for (int s = 0; s < spikes; ++s) {
      const std::int64_t at = rng.uniform_int(0, g.cell_count() - 1);
      const std::int64_t len = rng.uniform_int(1, std::max<std::int64_t>(1, g.cell_count() / 8));
      const double height = std::exp(rng.uniform(0.0, 3.0));
      for (std::int64_t c = at; c < std::min(g.cell_count(), at + len); ++c)
        vals[static_cast<std::size_t>(c)] = height;
    }
  } else {
    // with zero patches
    for (auto& v : vals) v = rng.uniform01() < 0.4 ? 0.0 : std::exp(rng.uniform(-1.0, 2.0));
  }
  return GridFunction(g, std::move(vals), true);
}

GridFunction random_signed(const GridSpec& g, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(g.cell_count()));
  for (auto& v : vals) v = rng.uniform(-1.0, 1.0);
  return GridFunction(g, std::move(vals), false);
}

SparseFamily random_sparse_family(const GridSpec& g, Rng& rng) {
  if (g.level == 0) return with_default_selection(g, 0, {base_cube(g)});
  const int mode = static_cast<int>(rng.uniform_int(0, 3));
  if (mode == 0) {
    // stopping family of a random input; eta >= 1 - 1/a
    GridFunction f = random_nonneg(g, rng);
    if (!(integrate(f) > 0.0)) f = GridFunction(g, 1.0);
    const double a = rng.uniform(1.5, 4.0);
    return cz_stopping_family(f, base_cube(g), a);
  }
  if (mode == 1) {
    // chain: descend one child at a time
    std::vector<DyadicCube> cubes;
    DyadicCube q = base_cube(g);
    cubes.push_back(q);
    const int depth = static_cast<int>(rng.uniform_int(1, g.level));
    for (int l = 0; l < depth; ++l) {
      const auto kids = children(g, q);
      q = kids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(kids.size()) - 1))];
      cubes.push_back(q);
    }
    return with_default_selection(g, 0, std::move(cubes));
  }
  if (mode == 2) {
    // antichain at a random level
    const int l = static_cast<int>(rng.uniform_int(1, g.level));
    std::vector<DyadicCube> cubes;
    for (const DyadicCube& q : subcubes(g, base_cube(g), l))
      if (rng.uniform01() < 0.4) cubes.push_back(q);
    if (cubes.empty()) cubes.push_back(base_cube(g));
    return with_default_selection(g, 0, std::move(cubes));
  }
  // pruned random tree: recursing into at most 2^n - 1 children keeps every
  // selected cube at least a 2^-n fraction free, so achieved eta > 0
  std::vector<DyadicCube> cubes;
  std::function<void(const DyadicCube&)> walk = [&](const DyadicCube& q) {
    cubes.push_back(q);
    if (q.level >= g.level) return;
    auto kids = children(g, q);
    // drop one child, recurse into a random subset of the rest
    const std::size_t drop = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(kids.size()) - 1));
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (i == drop) continue;
      if (rng.uniform01() < 0.55) walk(kids[i]);
    }
  };
  walk(base_cube(g));
  return with_default_selection(g, 0, std::move(cubes));
}

// ---------------------------------------------------------------------------
// lemma battery

BatteryResult lemma_battery(std::uint64_t seed, int level) {
  BatteryResult out;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    out.results.push_back({name, pass, detail});
    out.all_pass = out.all_pass && pass;
  };
  const GridSpec g(1, level);

  {  // union mass bound
    Rng rng(seed * 7919 + 1);
    bool ok = true;
    int n = 0;
    for (int i = 0; i < 25 && ok; ++i) {
      SparseFamily S = random_sparse_family(g, rng);
      GridFunction w = random_weight(g, rng);
      ok = union_mass_check(g, S, w).holds;
      ++n;
    }
    add("union-mass", ok, std::to_string(n) + " random (family, weight) pairs");
  }
  {  // dyadic Orlicz maximal weak type, single lattice
    Rng rng(seed * 7919 + 2);
    bool ok = true;
    const std::vector<YoungFunction> as = {YoungFunction::power(1.0),
                                           YoungFunction::llogl(0.5)};
    for (int i = 0; i < 10 && ok; ++i) {
      GridFunction f = random_nonneg(g, rng);
      GridFunction w = random_weight(g, rng);
      const YoungFunction& a = as[static_cast<std::size_t>(i % 2)];
      GridFunction m = orlicz_maximal(f, a, w, base_family(g));
      double mmax = 0.0;
      for (double v : m.values) mmax = std::max(mmax, v);
      if (mmax <= 0.0) continue;
      for (int k = 0; k < 20 && ok; ++k) {
        const double t = mmax * std::pow(10.0, rng.uniform(-3.0, 0.1));
        ok = orlicz_maximal_weaktype_check(f, a, w, {0}, t).holds;
      }
    }
    add("orlicz-maximal-weak-type", ok, "10 instances x 20 thresholds");
  }
  {  // generalized Holder with factor 2, and KR equivalence
    Rng rng(seed * 7919 + 3);
    bool holder_ok = true, kr_ok = true;
    for (int i = 0; i < 50 && (holder_ok || kr_ok); ++i) {
      GridFunction f = random_signed(g, rng);
      GridFunction h = random_signed(g, rng);
      GridFunction w = random_weight(g, rng);
      const int l = static_cast<int>(rng.uniform_int(0, g.level));
      const std::int64_t ix = rng.uniform_int(0, (std::int64_t{1} << l) - 1);
      const DyadicCube q{0, l, {ix, 0}};
      YoungFunction a = YoungFunction::power(1.0), ab = YoungFunction::power(1.0);
      if (i % 2 == 0) {
        const double p = rng.uniform(1.3, 4.0);
        a = YoungFunction::power(p);
        ab = YoungFunction::power(p / (p - 1.0));
      } else {
        const double r = rng.uniform(1.2, 3.0);
        a = YoungFunction::llogl(1.0 / r);
        ab = YoungFunction::explr(r);
      }
      holder_ok = holder_ok && holder_check(f, h, a, ab, w, q).holds;
      const double lux = luxemburg_norm(f, a, w, q);
      const double kr = kr_norm(f, a, w, q);
      kr_ok = kr_ok && lux <= kr * (1.0 + 1e-9) && kr <= 2.0 * lux * (1.0 + 1e-9);
    }
    add("generalized-holder", holder_ok, "50 random instances, factor 2");
    add("kr-equivalence", kr_ok, "50 random instances, [1,2] bracket");
  }
  {  // average-change inequality
    Rng rng(seed * 7919 + 4);
    const GridSpec gc(1, std::min(level, 5));
    GridFunction u = random_weight(gc, rng);
    GridFunction v = random_weight(gc, rng);
    GridFunction f = random_nonneg(gc, rng);
    const double p = 2.0;
    const double apvu = ap_relative(v, u, p, base_family(gc)).value;
    bool ok = true;
    for (const DyadicCube& q : base_family(gc).cubes)
      ok = ok && cont_avg_check(f, YoungFunction::power(1.0), p, u, v, q, apvu).holds;
    add("average-change", ok, "all cubes, power(1), p=2");
  }
  {  // reverse Holder probe
    Rng rng(seed * 7919 + 5);
    GridFunction w = make_weight(g, WeightRecipe::parse_spec("power:-0.5"));
    const auto rep = reverse_holder_probe(w, 8.0, base_family(g));
    add("reverse-holder", !rep.tau_at_upper_bound && rep.minimal_tau > 0.0,
        "minimal feasible tau " + fmt(rep.minimal_tau));
    (void)rng;
  }
  {  // layered disjointification on a stratum
    Rng rng(seed * 7919 + 6);
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      GridFunction f = random_nonneg(g, rng);
      if (!(integrate(f) > 0.0)) continue;
      GridFunction w = random_weight(g, rng);
      SparseFamily S = cz_stopping_family(f, base_cube(g), 2.0);
      const YoungFunction a = YoungFunction::llogl(0.5);
      // group family cubes into strata of the Luxemburg functional
      std::map<int, SparseFamily> strata;
      for (const DyadicCube& q : S.cubes) {
        const double norm = luxemburg_norm(f, a, w, q);
        if (!(norm > 0.0)) continue;
        strata[dyadic_bin(std::min(norm, 1.0))].cubes.push_back(q);
      }
      for (auto& [j, stratum] : strata) {
        const double hi = std::ldexp(1.0, -j);
        bool in_range = true;
        for (const DyadicCube& q : stratum.cubes) {
          const double norm = luxemburg_norm(f, a, w, q);
          in_range = in_range && norm > 0.5 * hi && norm <= hi * (1.0 + 1e-12);
        }
        if (!in_range) continue;
        for (int nu : {1, 2, 4}) {
          const auto res = disjointify(g, stratum, f, a, w, j, nu);
          ok = ok && res.max_overlap <= nu && res.all_hold;
        }
      }
    }
    add("disjointification", ok, "stopping-family strata, nu in {1,2,4}");
  }
  {  // arithmetic double sum
    Rng rng(seed * 7919 + 7);
    bool ok = true;
    for (int i = 0; i < 30 && ok; ++i) {
      DoubleSumParams p;
      p.gamma1 = std::exp2(rng.uniform(0.1, 8.0));
      p.gamma2 = std::exp2(rng.uniform(0.1, 12.0));
      p.beta = rng.uniform(0.0, 4.0);
      p.delta = rng.uniform(0.0, 3.0);
      p.rho1 = rng.uniform(0.0, 2.0);
      p.rho2 = rng.uniform(0.0, 2.0);
      p.gamma = rng.uniform(1.0, 9.0);
      const auto res = double_sum(p);
      ok = res.tail <= res.tail_budget;
    }
    add("double-sum-tail", ok, "30 random parameter sets");
  }
  return out;
}

// ---------------------------------------------------------------------------
// reports and run orchestration

std::string BoundReport::csv_header() {
  return "scenario_id,t_star,measured,theoretical,c_used,a1_u,ainf_uv,ainf_u,ainf_v,a1_v,"
         "ap_v_u,a1_u_v,pass";
}

std::string BoundReport::csv_row() const {
  std::ostringstream os;
  os << scenario_id << "," << fmt(t_star) << "," << fmt(measured) << "," << fmt(theoretical)
     << "," << fmt(c_used) << "," << fmt(constants.a1_u) << "," << fmt(constants.ainf_uv) << ","
     << fmt(constants.ainf_u) << "," << fmt(constants.ainf_v) << "," << fmt(constants.a1_v)
     << "," << fmt(constants.ap_v_u) << "," << fmt(constants.a1_u_v) << ","
     << (pass ? 1 : 0);
  return os.str();
}

std::string BoundReport::to_json() const {
  json j;
  j["scenario_id"] = scenario_id;
  j["family_id"] = family_id;
  j["calibrate"] = calibrate;
  j["measured"] = measured;
  j["raw_bound"] = raw_bound;
  j["absorption"] = absorption;
  j["theoretical"] = theoretical;
  j["c_used"] = c_used;
  j["t_star"] = t_star;
  j["constants"] = {{"a1_u", constants.a1_u},     {"ainf_uv", constants.ainf_uv},
                    {"ainf_u", constants.ainf_u}, {"ainf_v", constants.ainf_v},
                    {"a1_v", constants.a1_v},     {"ap_v_u", constants.ap_v_u},
                    {"a1_u_v", constants.a1_u_v}};
  j["checks"] = {{"union_mass", union_mass_ok},
                 {"strat_consistent", strat_consistent},
                 {"factorization", factorization_ok},
                 {"links", links_ok},
                 {"reduction", reduction_ok}};
  j["eps_floor"] = {{"default_exponent", -2}, {"probe_exponents", {-1, -3}},
                    {"sensitive", eps_floor_sensitive}};
  j["pass"] = pass;
  json tables = json::array();
  for (const StratumTable& t : strata) {
    json jt;
    jt["h"] = t.h;
    jt["t_split"] = t.t_split;
    jt["uv_g"] = t.uv_g;
    jt["direct_total"] = t.direct_total;
    jt["binned_total"] = t.binned_total;
    jt["consistent"] = t.consistent;
    json rows = json::array();
    for (const StratumRow& r : t.rows)
      rows.push_back({{"k", r.k},
                      {"j", r.j},
                      {"s_kj", r.s_kj},
                      {"top", r.top},
                      {"bottom", r.bottom},
                      {"active", r.active()}});
    jt["rows"] = rows;
    tables.push_back(jt);
  }
  j["strata"] = tables;
  return j.dump(2);
}

namespace {

WeightRecipe recipe_from_json(const json& j) {
  if (j.is_string()) return WeightRecipe::parse_spec(j.get<std::string>());
  WeightRecipe r;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "const") {
    r.kind = WeightRecipe::Kind::Constant;
    r.value = j.value("value", 1.0);
  } else if (kind == "power") {
    r.kind = WeightRecipe::Kind::Power;
    r.exponent = j.at("a").get<double>();
    r.eps_scale = j.value("eps_scale", 1.0);
  } else if (kind == "step") {
    r.kind = WeightRecipe::Kind::Step;
    r.levels = j.at("levels").get<int>();
    r.step_values = j.at("values").get<std::vector<double>>();
  } else if (kind == "martingale") {
    r.kind = WeightRecipe::Kind::Martingale;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.levels = j.at("levels").get<int>();
    r.jump = j.value("jump", 0.5);
  } else if (kind == "uniform") {
    r.kind = WeightRecipe::Kind::Uniform;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.lo = j.value("lo", 0.5);
    r.hi = j.value("hi", 2.0);
  } else if (kind == "indicator") {
    r.kind = WeightRecipe::Kind::Indicator;
    r.ind_level = j.at("level").get<int>();
    r.ind_index[0] = j.at("index").is_array() ? j.at("index")[0].get<std::int64_t>()
                                              : j.at("index").get<std::int64_t>();
    if (j.at("index").is_array() && j.at("index").size() > 1)
      r.ind_index[1] = j.at("index")[1].get<std::int64_t>();
    r.height = j.value("height", 1.0);
    r.background = j.value("background", 0.0);
  } else {
    throw std::invalid_argument("recipe: unknown kind '" + kind + "'");
  }
  return r;
}

Scenario scenario_from_json(const json& j, const GridSpec& default_grid) {
  Scenario sc;
  sc.grid = default_grid;
  if (j.contains("grid")) sc.grid = GridSpec(j["grid"].at("n").get<int>(), j["grid"].at("L").get<int>());
  sc.id = j.at("id").get<std::string>();
  sc.family_id = j.value("family_id", std::string("default"));
  sc.calibrate = j.value("role", std::string("holdout")) == "calibrate";
  sc.u = recipe_from_json(j.at("u"));
  sc.v = recipe_from_json(j.at("v"));
  sc.f = recipe_from_json(j.at("f"));
  const json& op = j.at("operator");
  const std::string kind = op.at("kind").get<std::string>();
  if (kind == "cz-sparse")
    sc.op.kind = OperatorSpec::Kind::CzSparse;
  else if (kind == "commutator")
    sc.op.kind = OperatorSpec::Kind::Commutator;
  else if (kind == "rough")
    sc.op.kind = OperatorSpec::Kind::Rough;
  else
    throw std::invalid_argument("operator: unknown kind '" + kind + "'");
  sc.op.theorem = op.value("theorem", 1);
  if (sc.op.theorem != 1 && sc.op.theorem != 2)
    throw std::invalid_argument("operator: theorem must be 1 or 2");
  sc.op.p = op.value("p", 2.0);
  sc.op.m = op.value("m", 1);
  sc.op.r = op.value("r", 2.0);
  if (op.contains("b")) sc.op.b = recipe_from_json(op["b"]);
  if (op.contains("s_policy")) {
    const json& sp = op["s_policy"];
    const std::string sk = sp.value("kind", std::string("auto"));
    if (sk == "auto")
      sc.op.s_policy.kind = SPolicy::Kind::Auto;
    else if (sk == "fixed-tau") {
      sc.op.s_policy.kind = SPolicy::Kind::FixedTau;
      sc.op.s_policy.tau = sp.at("tau").get<double>();
    } else if (sk == "fixed-s") {
      sc.op.s_policy.kind = SPolicy::Kind::FixedS;
      sc.op.s_policy.s = sp.at("s").get<double>();
    } else {
      throw std::invalid_argument("s_policy: unknown kind '" + sk + "'");
    }
  }
  if (j.contains("family")) {
    const json& fj = j["family"];
    const std::string fk = fj.value("kind", std::string("stopping"));
    if (fk == "stopping") {
      sc.family.kind = FamilyRecipe::Kind::Stopping;
      sc.family.a = fj.value("a", 2.0);
    } else if (fk == "explicit") {
      sc.family.kind = FamilyRecipe::Kind::Explicit;
      for (const json& cj : fj.at("cubes")) {
        DyadicCube q;
        q.level = cj.at("level").get<int>();
        q.index[0] = cj.at("index")[0].get<std::int64_t>();
        if (cj.at("index").size() > 1) q.index[1] = cj.at("index")[1].get<std::int64_t>();
        sc.family.cubes.push_back(q);
      }
    } else {
      throw std::invalid_argument("family: unknown kind '" + fk + "'");
    }
  }
  if (j.contains("tgrid")) {
    const json& tj = j["tgrid"];
    sc.tgrid.count = tj.value("count", 40);
    sc.tgrid.tmin = tj.value("min", 1e-4);
    sc.tgrid.tmax = tj.value("max", 1e4);
    if (sc.tgrid.count < 1 || !(sc.tgrid.tmin > 0.0) || !(sc.tgrid.tmax >= sc.tgrid.tmin))
      throw std::invalid_argument("tgrid: need count >= 1 and 0 < min <= max");
  }
  return sc;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  return scenario_from_json(json::parse(text), GridSpec(1, 6));
}

RunResult run_config(const std::string& config_json_text) {
  json cfg;
  try {
    cfg = json::parse(config_json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  GridSpec default_grid(1, 6);
  if (cfg.contains("grid"))
    default_grid = GridSpec(cfg["grid"].at("n").get<int>(), cfg["grid"].at("L").get<int>());
  std::vector<Scenario> scenarios;
  double fixed_c = -1.0;
  if (cfg.contains("cpolicy")) {
    const json& cp = cfg["cpolicy"];
    if (cp.value("kind", std::string("fit")) == "fixed") fixed_c = cp.at("c").get<double>();
  }
  if (cfg.contains("scenarios"))
    for (const json& sj : cfg["scenarios"]) scenarios.push_back(scenario_from_json(sj, default_grid));

  // evaluate scenarios (independent; THREADS controls the worker count)
  int threads = 1;
  if (const char* env = std::getenv("THREADS")) threads = std::max(1, std::atoi(env));
  std::vector<BoundReport> reports(scenarios.size());
  if (threads <= 1 || scenarios.size() <= 1) {
    for (std::size_t i = 0; i < scenarios.size(); ++i) reports[i] = run_scenario(scenarios[i]);
  } else {
    std::size_t next = 0;
    while (next < scenarios.size()) {
      std::vector<std::future<BoundReport>> batch;
      const std::size_t hi = std::min(scenarios.size(), next + static_cast<std::size_t>(threads));
      for (std::size_t i = next; i < hi; ++i)
        batch.push_back(std::async(std::launch::async,
                                   [&scenarios, i] { return run_scenario(scenarios[i]); }));
      for (std::size_t i = next; i < hi; ++i) reports[i] = batch[i - next].get();
      next = hi;
    }
  }

  // fit the free constant once per scenario family over its calibrate subset
  std::map<std::string, double> fit;
  for (const BoundReport& r : reports) {
    if (!r.calibrate) continue;
    const double need =
        r.raw_bound > 0.0 ? std::max(0.0, (r.measured - r.absorption) / r.raw_bound) : 0.0;
    auto [it, fresh] = fit.emplace(r.family_id, need);
    if (!fresh) it->second = std::max(it->second, need);
  }
  RunResult out;
  out.reports = std::move(reports);
  std::ostringstream csv;
  csv << BoundReport::csv_header() << "\n";
  for (BoundReport& r : out.reports) {
    double c = 1.0;
    if (fixed_c > 0.0)
      c = fixed_c;
    else if (auto it = fit.find(r.family_id); it != fit.end())
      c = std::max(it->second, 1e-12);
    apply_constant(r, c);
    out.all_pass = out.all_pass && r.pass;
    csv << r.csv_row() << "\n";
  }
  out.csv = csv.str();
  return out;
}

}  // namespace mixedweak
