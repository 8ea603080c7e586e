#ifndef MIXEDWEAK_GRID_HPP
#define MIXEDWEAK_GRID_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mixedweak {

// Discretization of the unit cube [0,1)^n at resolution 2^-L per axis.
// Everything downstream is exact cell arithmetic on this grid.
struct GridSpec {
  int dim = 1;    // n
  int level = 0;  // L, finest cells have sidelength 2^-L

  GridSpec() = default;
  GridSpec(int n, int L);

  std::int64_t cells_per_axis() const { return std::int64_t{1} << level; }
  std::int64_t cell_count() const { return std::int64_t{1} << (dim * level); }
  double cell_volume() const;

  std::int64_t cell_index(std::int64_t cx, std::int64_t cy = 0) const;
  std::array<std::int64_t, 2> cell_coords(std::int64_t cell) const;
  // midpoint of a finest cell, per axis
  std::array<double, 2> cell_midpoint(std::int64_t cell) const;

  bool operator==(const GridSpec&) const = default;
};

// Half-open box in finest-cell coordinates: [lo, hi) per axis.
struct CellRect {
  std::array<std::int64_t, 2> lo{0, 0};
  std::array<std::int64_t, 2> hi{0, 0};

  bool empty(int dim) const;
  std::int64_t cell_count(int dim) const;
  bool contains(int dim, const CellRect& other) const;  // other subset of this
  CellRect clipped(const GridSpec& g) const;
};

// A cube of the base dyadic lattice (lattice 0) or one of the 3^n shifted
// lattices (lattice 1..3^n). Base cube: sidelength 2^-level, corner at
// index*2^-level. Shifted cube: sidelength 3*2^-level before clipping,
// generated by halving a width-3 top tile anchored off the unit cube.
struct DyadicCube {
  int lattice = 0;
  int level = 0;
  std::array<std::int64_t, 2> index{0, 0};

  bool operator==(const DyadicCube&) const = default;
};

// Canonical scan order: (lattice, level, packed index) ascending.
bool cube_less(const DyadicCube& a, const DyadicCube& b);
std::string cube_to_string(const GridSpec& g, const DyadicCube& q);

// Cell extent of a cube, clipped to the grid. Base cubes never clip.
CellRect cube_cells(const GridSpec& g, const DyadicCube& q);
double cube_volume(const GridSpec& g, const DyadicCube& q);  // clipped

DyadicCube base_cube(const GridSpec& g);  // the full unit cube, lattice 0
std::vector<DyadicCube> children(const GridSpec& g, const DyadicCube& q);
DyadicCube parent(const GridSpec& g, const DyadicCube& q);
DyadicCube cube_at(const GridSpec& g, const std::array<double, 2>& x, int level);
// all base-lattice descendants of q at the given level
std::vector<DyadicCube> subcubes(const GridSpec& g, const DyadicCube& q, int level);

// The 3^n shifted lattices (ids 1..3^n). Each is a genuine truncated grid:
// cubes of one lattice are pairwise nested-or-disjoint after clipping, and the
// lattice holds a sidelength 3*2^-l tile through every base cube.
std::vector<int> shifted_lattices(const GridSpec& g);
int shifted_lattice_count(const GridSpec& g);
// Unique cube of shifted lattice j at the base cube's level (sidelength
// 3 * sidelength(q)) containing the base cube q. fits_unclipped reports
// whether the tile lies inside [0,1)^n before clipping.
struct TripledParent {
  DyadicCube cube;
  bool fits_unclipped = false;
};
TripledParent tripled_parent(const GridSpec& g, int lattice, const DyadicCube& q);

// Enumerated cube family used for maximal operators and constant scans.
struct CubeFamily {
  std::string name;
  std::vector<DyadicCube> cubes;
};
CubeFamily base_family(const GridSpec& g);                   // all base cubes, levels 0..L
CubeFamily lattice_family(const GridSpec& g, int lattice);   // one lattice, clipped-nonempty cubes
CubeFamily all_lattices_family(const GridSpec& g);           // base + all shifted

// Piecewise-constant function given by one value per finest cell.
struct GridFunction {
  GridSpec grid;
  std::vector<double> values;
  bool nonneg = false;

  GridFunction() = default;
  GridFunction(const GridSpec& g, double constant, bool nonneg_flag = true);
  GridFunction(const GridSpec& g, std::vector<double> vals, bool nonneg_flag = false);

  double operator[](std::int64_t cell) const { return values[static_cast<std::size_t>(cell)]; }
  void validate() const;  // finite values, sign flag consistent
};

GridFunction sample_midpoints(const GridSpec& g,
                              const std::function<double(const std::array<double, 2>&)>& fn,
                              double floor_eps = 0.0);
GridFunction product(const GridFunction& a, const GridFunction& b);
GridFunction cellwise_pow(const GridFunction& a, double p);
GridFunction scaled(const GridFunction& a, double c);

// Bitmask over finest cells; measures, unions and subset tests are exact.
class CellSet {
 public:
  CellSet() = default;
  explicit CellSet(const GridSpec& g);
  static CellSet from_rect(const GridSpec& g, const CellRect& r);
  static CellSet full(const GridSpec& g);

  const GridSpec& grid() const { return grid_; }
  void set(std::int64_t cell);
  void reset(std::int64_t cell);
  bool test(std::int64_t cell) const;
  std::int64_t count() const;
  double measure() const;
  bool none() const { return count() == 0; }

  CellSet& operator|=(const CellSet& o);
  CellSet& operator&=(const CellSet& o);
  CellSet& operator-=(const CellSet& o);
  bool subset_of(const CellSet& o) const;
  bool disjoint_with(const CellSet& o) const;

  // ascending cell indices of set bits
  std::vector<std::int64_t> cells() const;
  // run-length encoding [start, len] pairs over linear cell order
  std::vector<std::array<std::int64_t, 2>> runs() const;

 private:
  GridSpec grid_;
  std::vector<std::uint64_t> words_;
};

// Optional compensated (Kahan) accumulation for the direct integration paths.
// Off by default; summation order is index-ascending either way.
void set_compensated_summation(bool on);
bool compensated_summation();

// Exact integrals: plain ascending-order sums of cell values times cell volume.
double integrate(const GridFunction& f, const DyadicCube& q);
double integrate(const GridFunction& f, const CellRect& r);
double integrate(const GridFunction& f, const CellSet& s);
double integrate(const GridFunction& f);  // over the whole unit cube

double average(const GridFunction& f, const DyadicCube& q);
double weighted_average(const GridFunction& f, const GridFunction& w, const DyadicCube& q);
// ((1/w(Q)) int_Q |f|^p w)^{1/p}; w omitted = Lebesgue
double p_average(const GridFunction& f, const DyadicCube& q, double p,
                 const GridFunction* w = nullptr);

// Summed tables for O(1) rectangle integrals inside cube scans. Sums are
// accumulated in ascending index order.
class PrefixSums {
 public:
  explicit PrefixSums(const GridFunction& f);
  double rect_sum(const CellRect& r) const;  // sum of cell values (not volume-scaled)
  double rect_integral(const CellRect& r) const;

 private:
  GridSpec grid_;
  std::vector<double> table_;
};

// Flat CSV serialization: header line "n,L,lattice" then one value per line.
std::string gridfn_to_csv(const GridFunction& f, int lattice = 0);
GridFunction gridfn_from_csv(const std::string& text);

}  // namespace mixedweak

#endif
