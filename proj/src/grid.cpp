#include "mixedweak/grid.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mixedweak {

GridSpec::GridSpec(int n, int L) : dim(n), level(L) {
  if (n < 1 || n > 2) throw std::invalid_argument("GridSpec: desk-scale dimension is 1 or 2");
  if (L < 0) throw std::invalid_argument("GridSpec: level must be >= 0");
  if (n * L > 24) throw std::invalid_argument("GridSpec: n*L exceeds desk-scale cap 24");
}

double GridSpec::cell_volume() const { return std::ldexp(1.0, -dim * level); }

std::int64_t GridSpec::cell_index(std::int64_t cx, std::int64_t cy) const {
  return cx + (dim > 1 ? (cy << level) : 0);
}

std::array<std::int64_t, 2> GridSpec::cell_coords(std::int64_t cell) const {
  const std::int64_t mask = cells_per_axis() - 1;
  if (dim == 1) return {cell, 0};
  return {cell & mask, cell >> level};
}

std::array<double, 2> GridSpec::cell_midpoint(std::int64_t cell) const {
  const auto c = cell_coords(cell);
  const double h = std::ldexp(1.0, -level);
  return {(static_cast<double>(c[0]) + 0.5) * h, (static_cast<double>(c[1]) + 0.5) * h};
}

bool CellRect::empty(int dim) const {
  for (int i = 0; i < dim; ++i)
    if (hi[i] <= lo[i]) return true;
  return false;
}

std::int64_t CellRect::cell_count(int dim) const {
  if (empty(dim)) return 0;
  std::int64_t c = 1;
  for (int i = 0; i < dim; ++i) c *= hi[i] - lo[i];
  return c;
}

bool CellRect::contains(int dim, const CellRect& other) const {
  if (other.empty(dim)) return true;
  for (int i = 0; i < dim; ++i)
    if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
  return true;
}

CellRect CellRect::clipped(const GridSpec& g) const {
  CellRect r = *this;
  const std::int64_t m = g.cells_per_axis();
  for (int i = 0; i < g.dim; ++i) {
    r.lo[i] = std::max<std::int64_t>(r.lo[i], 0);
    r.hi[i] = std::min<std::int64_t>(r.hi[i], m);
    if (r.hi[i] < r.lo[i]) r.hi[i] = r.lo[i];
  }
  if (g.dim < 2) {
    r.lo[1] = 0;
    r.hi[1] = 1;
  }
  return r;
}

bool cube_less(const DyadicCube& a, const DyadicCube& b) {
  if (a.lattice != b.lattice) return a.lattice < b.lattice;
  if (a.level != b.level) return a.level < b.level;
  if (a.index[1] != b.index[1]) return a.index[1] < b.index[1];
  return a.index[0] < b.index[0];
}

std::string cube_to_string(const GridSpec& g, const DyadicCube& q) {
  std::ostringstream os;
  os << "D" << q.lattice << ":l" << q.level << ":(" << q.index[0];
  if (g.dim > 1) os << "," << q.index[1];
  os << ")";
  return os.str();
}

namespace {

// Anchor of the width-3 top tile of a shifted lattice, per axis.
// Digit 0 -> phase 0 (anchor 0), 1 -> phase +1/3 (anchor -2), 2 -> -1/3 (anchor -1).
std::array<std::int64_t, 2> lattice_anchor(const GridSpec& g, int lattice) {
  std::array<std::int64_t, 2> a{0, 0};
  int code = lattice - 1;
  for (int i = 0; i < g.dim; ++i) {
    const int digit = code % 3;
    code /= 3;
    a[i] = digit == 0 ? 0 : (digit == 1 ? -2 : -1);
  }
  return a;
}

void check_cube(const GridSpec& g, const DyadicCube& q) {
  if (q.level < 0 || q.level > g.level)
    throw std::invalid_argument("cube level out of range [0, L]");
  const int nlat = shifted_lattice_count(g);
  if (q.lattice < 0 || q.lattice > nlat)
    throw std::invalid_argument("cube lattice id out of range");
  const std::int64_t per = std::int64_t{1} << q.level;
  for (int i = 0; i < g.dim; ++i)
    if (q.index[i] < 0 || q.index[i] >= per)
      throw std::invalid_argument("cube index out of range at its level");
}

}  // namespace

CellRect cube_cells(const GridSpec& g, const DyadicCube& q) {
  check_cube(g, q);
  CellRect r;
  if (q.lattice == 0) {
    const std::int64_t w = std::int64_t{1} << (g.level - q.level);
    for (int i = 0; i < g.dim; ++i) {
      r.lo[i] = q.index[i] * w;
      r.hi[i] = r.lo[i] + w;
    }
  } else {
    const auto a = lattice_anchor(g, q.lattice);
    const std::int64_t w = std::int64_t{3} << (g.level - q.level);
    const std::int64_t scale = std::int64_t{1} << g.level;
    for (int i = 0; i < g.dim; ++i) {
      r.lo[i] = a[i] * scale + q.index[i] * w;
      r.hi[i] = r.lo[i] + w;
    }
  }
  if (g.dim < 2) {
    r.lo[1] = 0;
    r.hi[1] = 1;
  }
  return r.clipped(g);
}

double cube_volume(const GridSpec& g, const DyadicCube& q) {
  return static_cast<double>(cube_cells(g, q).cell_count(g.dim)) * g.cell_volume();
}

DyadicCube base_cube(const GridSpec&) { return DyadicCube{0, 0, {0, 0}}; }

std::vector<DyadicCube> children(const GridSpec& g, const DyadicCube& q) {
  if (q.level >= g.level) throw std::invalid_argument("children: cube already at finest level");
  std::vector<DyadicCube> out;
  const int kids = 1 << g.dim;
  out.reserve(static_cast<std::size_t>(kids));
  for (int b = 0; b < kids; ++b) {
    DyadicCube c = q;
    c.level = q.level + 1;
    for (int i = 0; i < g.dim; ++i) c.index[i] = 2 * q.index[i] + ((b >> i) & 1);
    out.push_back(c);
  }
  return out;
}

DyadicCube parent(const GridSpec& g, const DyadicCube& q) {
  check_cube(g, q);
  if (q.level == 0) throw std::invalid_argument("parent: cube is at the top level");
  DyadicCube p = q;
  p.level = q.level - 1;
  for (int i = 0; i < g.dim; ++i) p.index[i] = q.index[i] >> 1;
  return p;
}

DyadicCube cube_at(const GridSpec& g, const std::array<double, 2>& x, int level) {
  if (level < 0 || level > g.level) throw std::invalid_argument("cube_at: level out of range");
  DyadicCube q{0, level, {0, 0}};
  const double scale = std::ldexp(1.0, level);
  for (int i = 0; i < g.dim; ++i) {
    if (x[i] < 0.0 || x[i] >= 1.0) throw std::invalid_argument("cube_at: point outside base cube");
    q.index[i] = static_cast<std::int64_t>(std::floor(x[i] * scale));
  }
  return q;
}

std::vector<DyadicCube> subcubes(const GridSpec& g, const DyadicCube& q, int level) {
  check_cube(g, q);
  if (q.lattice != 0) throw std::invalid_argument("subcubes: base-lattice cubes only");
  if (level < q.level || level > g.level)
    throw std::invalid_argument("subcubes: target level out of range");
  std::vector<DyadicCube> out;
  const std::int64_t w = std::int64_t{1} << (level - q.level);
  const std::int64_t ny = g.dim > 1 ? w : 1;
  for (std::int64_t y = 0; y < ny; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      out.push_back(DyadicCube{0, level, {q.index[0] * w + x, q.index[1] * w + y}});
  return out;
}

int shifted_lattice_count(const GridSpec& g) {
  int c = 1;
  for (int i = 0; i < g.dim; ++i) c *= 3;
  return c;
}

std::vector<int> shifted_lattices(const GridSpec& g) {
  std::vector<int> ids;
  const int n = shifted_lattice_count(g);
  ids.reserve(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) ids.push_back(j);
  return ids;
}

TripledParent tripled_parent(const GridSpec& g, int lattice, const DyadicCube& q) {
  check_cube(g, q);
  if (q.lattice != 0) throw std::invalid_argument("tripled_parent: base cube expected");
  if (lattice < 1 || lattice > shifted_lattice_count(g))
    throw std::invalid_argument("tripled_parent: shifted lattice id expected");
  const auto a = lattice_anchor(g, lattice);
  TripledParent tp;
  tp.cube = DyadicCube{lattice, q.level, {0, 0}};
  bool fits = true;
  const std::int64_t per = std::int64_t{1} << q.level;
  for (int i = 0; i < g.dim; ++i) {
    const std::int64_t u = q.index[i] - a[i] * per;  // position in tile units of 2^-level
    tp.cube.index[i] = u / 3;
    const std::int64_t lo = a[i] * per + tp.cube.index[i] * 3;
    if (lo < 0 || lo + 3 > per) fits = false;
  }
  tp.fits_unclipped = fits;
  return tp;
}

CubeFamily base_family(const GridSpec& g) {
  CubeFamily fam;
  fam.name = "base";
  for (int l = 0; l <= g.level; ++l) {
    const std::int64_t w = std::int64_t{1} << l;
    const std::int64_t ny = g.dim > 1 ? w : 1;
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < w; ++x) fam.cubes.push_back(DyadicCube{0, l, {x, y}});
  }
  return fam;
}

CubeFamily lattice_family(const GridSpec& g, int lattice) {
  if (lattice == 0) {
    CubeFamily fam = base_family(g);
    return fam;
  }
  if (lattice < 1 || lattice > shifted_lattice_count(g))
    throw std::invalid_argument("lattice_family: lattice id out of range");
  CubeFamily fam;
  fam.name = "shifted-" + std::to_string(lattice);
  for (int l = 0; l <= g.level; ++l) {
    const std::int64_t w = std::int64_t{1} << l;
    const std::int64_t ny = g.dim > 1 ? w : 1;
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        DyadicCube q{lattice, l, {x, y}};
        if (!cube_cells(g, q).empty(g.dim)) fam.cubes.push_back(q);
      }
  }
  return fam;
}

CubeFamily all_lattices_family(const GridSpec& g) {
  CubeFamily fam = base_family(g);
  fam.name = "all-shifted";
  for (int j : shifted_lattices(g)) {
    CubeFamily lf = lattice_family(g, j);
    fam.cubes.insert(fam.cubes.end(), lf.cubes.begin(), lf.cubes.end());
  }
  return fam;
}

GridFunction::GridFunction(const GridSpec& g, double constant, bool nonneg_flag)
    : grid(g),
      values(static_cast<std::size_t>(g.cell_count()), constant),
      nonneg(nonneg_flag) {
  validate();
}

GridFunction::GridFunction(const GridSpec& g, std::vector<double> vals, bool nonneg_flag)
    : grid(g), values(std::move(vals)), nonneg(nonneg_flag) {
  if (values.size() != static_cast<std::size_t>(g.cell_count()))
    throw std::invalid_argument("GridFunction: value count does not match cell count");
  validate();
}

void GridFunction::validate() const {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("GridFunction: non-finite value");
    if (nonneg && v < 0.0) throw std::invalid_argument("GridFunction: negative value with nonneg flag");
  }
}

GridFunction sample_midpoints(const GridSpec& g,
                              const std::function<double(const std::array<double, 2>&)>& fn,
                              double floor_eps) {
  std::vector<double> vals(static_cast<std::size_t>(g.cell_count()));
  for (std::int64_t c = 0; c < g.cell_count(); ++c) {
    double v = fn(g.cell_midpoint(c));
    if (floor_eps > 0.0) v = std::max(v, floor_eps);
    vals[static_cast<std::size_t>(c)] = v;
  }
  bool nn = true;
  for (double v : vals)
    if (v < 0.0) nn = false;
  return GridFunction(g, std::move(vals), nn);
}

GridFunction product(const GridFunction& a, const GridFunction& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("product: grid mismatch");
  std::vector<double> vals(a.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values[i] * b.values[i];
  return GridFunction(a.grid, std::move(vals), a.nonneg && b.nonneg);
}

GridFunction cellwise_pow(const GridFunction& a, double p) {
  std::vector<double> vals(a.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::pow(a.values[i], p);
  return GridFunction(a.grid, std::move(vals), true);
}

GridFunction scaled(const GridFunction& a, double c) {
  std::vector<double> vals(a.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = c * a.values[i];
  return GridFunction(a.grid, std::move(vals), a.nonneg && c >= 0.0);
}

CellSet::CellSet(const GridSpec& g)
    : grid_(g), words_(static_cast<std::size_t>((g.cell_count() + 63) / 64), 0) {}

CellSet CellSet::from_rect(const GridSpec& g, const CellRect& r) {
  CellSet s(g);
  if (r.empty(g.dim)) return s;
  for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
    for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) s.set(g.cell_index(x, y));
  return s;
}

CellSet CellSet::full(const GridSpec& g) {
  CellRect r;
  r.lo = {0, 0};
  r.hi = {g.cells_per_axis(), g.dim > 1 ? g.cells_per_axis() : 1};
  return from_rect(g, r);
}

void CellSet::set(std::int64_t cell) {
  words_[static_cast<std::size_t>(cell >> 6)] |= (std::uint64_t{1} << (cell & 63));
}

void CellSet::reset(std::int64_t cell) {
  words_[static_cast<std::size_t>(cell >> 6)] &= ~(std::uint64_t{1} << (cell & 63));
}

bool CellSet::test(std::int64_t cell) const {
  return (words_[static_cast<std::size_t>(cell >> 6)] >> (cell & 63)) & 1;
}

std::int64_t CellSet::count() const {
  std::int64_t c = 0;
  for (std::uint64_t w : words_) c += std::popcount(w);
  return c;
}

double CellSet::measure() const { return static_cast<double>(count()) * grid_.cell_volume(); }

CellSet& CellSet::operator|=(const CellSet& o) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
  return *this;
}

CellSet& CellSet::operator&=(const CellSet& o) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
  return *this;
}

CellSet& CellSet::operator-=(const CellSet& o) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
  return *this;
}

bool CellSet::subset_of(const CellSet& o) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & ~o.words_[i]) return false;
  return true;
}

bool CellSet::disjoint_with(const CellSet& o) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & o.words_[i]) return false;
  return true;
}

std::vector<std::int64_t> CellSet::cells() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    std::uint64_t w = words_[i];
    while (w) {
      const int b = std::countr_zero(w);
      out.push_back(static_cast<std::int64_t>(i) * 64 + b);
      w &= w - 1;
    }
  }
  return out;
}

std::vector<std::array<std::int64_t, 2>> CellSet::runs() const {
  std::vector<std::array<std::int64_t, 2>> out;
  std::int64_t start = -1;
  const std::int64_t total = grid_.cell_count();
  for (std::int64_t c = 0; c <= total; ++c) {
    const bool on = c < total && test(c);
    if (on && start < 0) start = c;
    if (!on && start >= 0) {
      out.push_back({start, c - start});
      start = -1;
    }
  }
  return out;
}

namespace {
std::atomic<bool> g_compensated{false};

struct Accumulator {
  double sum = 0.0;
  double carry = 0.0;
  bool kahan;
  Accumulator() : kahan(g_compensated.load(std::memory_order_relaxed)) {}
  void add(double v) {
    if (kahan) {
      const double y = v - carry;
      const double t = sum + y;
      carry = (t - sum) - y;
      sum = t;
    } else {
      sum += v;
    }
  }
};
}  // namespace

void set_compensated_summation(bool on) { g_compensated.store(on, std::memory_order_relaxed); }
bool compensated_summation() { return g_compensated.load(std::memory_order_relaxed); }

double integrate(const GridFunction& f, const CellRect& r) {
  const GridSpec& g = f.grid;
  if (r.empty(g.dim)) return 0.0;
  Accumulator acc;
  for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
    for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x)
      acc.add(f.values[static_cast<std::size_t>(g.cell_index(x, y))]);
  return acc.sum * g.cell_volume();
}

double integrate(const GridFunction& f, const DyadicCube& q) {
  return integrate(f, cube_cells(f.grid, q));
}

double integrate(const GridFunction& f, const CellSet& s) {
  if (!(s.grid() == f.grid)) throw std::invalid_argument("integrate: grid mismatch");
  Accumulator acc;
  for (std::int64_t c : s.cells()) acc.add(f.values[static_cast<std::size_t>(c)]);
  return acc.sum * f.grid.cell_volume();
}

double integrate(const GridFunction& f) {
  Accumulator acc;
  for (double v : f.values) acc.add(v);
  return acc.sum * f.grid.cell_volume();
}

double average(const GridFunction& f, const DyadicCube& q) {
  const double vol = cube_volume(f.grid, q);
  if (vol <= 0.0) throw std::invalid_argument("average: empty cube");
  return integrate(f, q) / vol;
}

double weighted_average(const GridFunction& f, const GridFunction& w, const DyadicCube& q) {
  if (!(f.grid == w.grid)) throw std::invalid_argument("weighted_average: grid mismatch");
  const double wq = integrate(w, q);
  if (!(wq > 0.0)) throw std::invalid_argument("weighted_average: weight has zero mass on cube");
  const CellRect r = cube_cells(f.grid, q);
  double acc = 0.0;
  for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
    for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
      const std::size_t i = static_cast<std::size_t>(f.grid.cell_index(x, y));
      acc += f.values[i] * w.values[i];
    }
  return acc * f.grid.cell_volume() / wq;
}

double p_average(const GridFunction& f, const DyadicCube& q, double p, const GridFunction* w) {
  if (p < 1.0) throw std::invalid_argument("p_average: p must be >= 1");
  const CellRect r = cube_cells(f.grid, q);
  double num = 0.0, den = 0.0;
  for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
    for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
      const std::size_t i = static_cast<std::size_t>(f.grid.cell_index(x, y));
      const double wi = w ? w->values[i] : 1.0;
      num += std::pow(std::abs(f.values[i]), p) * wi;
      den += wi;
    }
  if (!(den > 0.0)) throw std::invalid_argument("p_average: weight has zero mass on cube");
  return std::pow(num / den, 1.0 / p);
}

PrefixSums::PrefixSums(const GridFunction& f) : grid_(f.grid) {
  const std::int64_t m = grid_.cells_per_axis();
  if (grid_.dim == 1) {
    table_.assign(static_cast<std::size_t>(m + 1), 0.0);
    for (std::int64_t x = 0; x < m; ++x)
      table_[static_cast<std::size_t>(x + 1)] =
          table_[static_cast<std::size_t>(x)] + f.values[static_cast<std::size_t>(x)];
  } else {
    const std::int64_t w = m + 1;
    table_.assign(static_cast<std::size_t>(w * w), 0.0);
    for (std::int64_t y = 0; y < m; ++y)
      for (std::int64_t x = 0; x < m; ++x) {
        const double v = f.values[static_cast<std::size_t>(grid_.cell_index(x, y))];
        table_[static_cast<std::size_t>((y + 1) * w + (x + 1))] =
            v + table_[static_cast<std::size_t>(y * w + (x + 1))] +
            table_[static_cast<std::size_t>((y + 1) * w + x)] -
            table_[static_cast<std::size_t>(y * w + x)];
      }
  }
}

double PrefixSums::rect_sum(const CellRect& r) const {
  if (r.empty(grid_.dim)) return 0.0;
  if (grid_.dim == 1)
    return table_[static_cast<std::size_t>(r.hi[0])] - table_[static_cast<std::size_t>(r.lo[0])];
  const std::int64_t w = grid_.cells_per_axis() + 1;
  return table_[static_cast<std::size_t>(r.hi[1] * w + r.hi[0])] -
         table_[static_cast<std::size_t>(r.lo[1] * w + r.hi[0])] -
         table_[static_cast<std::size_t>(r.hi[1] * w + r.lo[0])] +
         table_[static_cast<std::size_t>(r.lo[1] * w + r.lo[0])];
}

double PrefixSums::rect_integral(const CellRect& r) const {
  return rect_sum(r) * grid_.cell_volume();
}

std::string gridfn_to_csv(const GridFunction& f, int lattice) {
  std::ostringstream os;
  os << f.grid.dim << "," << f.grid.level << "," << lattice << "\n";
  char buf[64];
  for (double v : f.values) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf << "\n";
  }
  return os.str();
}

GridFunction gridfn_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("gridfn_from_csv: empty input");
  int n = 0, L = 0, lat = 0;
  if (std::sscanf(line.c_str(), "%d,%d,%d", &n, &L, &lat) != 3)
    throw std::invalid_argument("gridfn_from_csv: bad header");
  GridSpec g(n, L);
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(g.cell_count()));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    vals.push_back(std::stod(line));
  }
  return GridFunction(g, std::move(vals));
}

}  // namespace mixedweak
