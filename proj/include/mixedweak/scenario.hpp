#ifndef MIXEDWEAK_SCENARIO_HPP
#define MIXEDWEAK_SCENARIO_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mixedweak/bounds.hpp"
#include "mixedweak/grid.hpp"
#include "mixedweak/sparse.hpp"
#include "mixedweak/weights.hpp"

namespace mixedweak {

// Deterministic RNG: mt19937_64 with explicit bit-to-double mapping, so runs
// are reproducible across platforms.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform01() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(eng() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

// Weight / function recipes. Singular powers are sampled at cell midpoints and
// floored at eps_scale * 2^{-2L} (eps_scale = 1 reproduces the default floor).
struct WeightRecipe {
  enum class Kind { Constant, Power, Step, Martingale, Uniform, Indicator } kind =
      Kind::Constant;
  double value = 1.0;                // Constant
  double exponent = 0.0;             // Power: |x|^a, a in (-n + 1e-3, 0]
  double eps_scale = 1.0;            // Power: floor multiplier on 2^{-2L}
  int levels = 0;                    // Step / Martingale
  std::vector<double> step_values;   // Step: 2^{n*levels} values
  std::uint64_t seed = 0;            // Martingale / Uniform
  double jump = 0.5;                 // Martingale: in [0,1)
  double lo = 0.5, hi = 2.0;         // Uniform
  int ind_level = 0;                 // Indicator cube
  std::array<std::int64_t, 2> ind_index{0, 0};
  double height = 1.0, background = 0.0;

  static WeightRecipe parse_spec(const std::string& spec);  // CLI shorthand
  std::string to_string() const;
};

// Strictly positive realization (throws if any value <= 0).
GridFunction make_weight(const GridSpec& g, const WeightRecipe& r);
// Signed realization for commutator symbols.
GridFunction make_symbol(const GridSpec& g, const WeightRecipe& r);
// Nonnegative realization for operator inputs.
GridFunction make_input(const GridSpec& g, const WeightRecipe& r);

// Cells where tout/v > t and mtilde <= t/2.
CellSet good_set(const GridFunction& tout, const GridFunction& v, const GridFunction& mtilde,
                 double t);

struct TGridSpec {
  int count = 40;
  double tmin = 1e-4;
  double tmax = 1e4;
};

struct SPolicy {
  enum class Kind { Auto, FixedTau, FixedS } kind = Kind::Auto;
  double tau = 8.0;
  double s = 1.5;
};

struct OperatorSpec {
  enum class Kind { CzSparse, Commutator, Rough } kind = Kind::CzSparse;
  int theorem = 1;  // 1 or 2 (which set of weight hypotheses/bounds)
  double p = 2.0;
  int m = 1;        // commutator order
  double r = 2.0;   // commutator oscillation exponent / rough bilinear exponent
  WeightRecipe b;   // commutator symbol
  SPolicy s_policy;
};

struct FamilyRecipe {
  enum class Kind { Stopping, Explicit } kind = Kind::Stopping;
  double a = 2.0;
  std::vector<DyadicCube> cubes;  // Explicit (base lattice)
};

struct Scenario {
  std::string id;
  std::string family_id = "default";
  bool calibrate = false;  // participates in the per-family fit of c
  GridSpec grid{1, 6};
  WeightRecipe u, v, f;
  OperatorSpec op;
  FamilyRecipe family;
  TGridSpec tgrid;
};

struct ScenarioConstants {
  double a1_u = 1.0, ainf_uv = 1.0, ainf_u = 1.0, ainf_v = 1.0, a1_v = 1.0, ap_v_u = 1.0,
         a1_u_v = 1.0;
};

struct StratumRow {
  int k = 0, j = 0;
  double s_kj = 0.0;
  double top = 0.0;     // first theoretical envelope (c = 1)
  double bottom = 0.0;  // second theoretical envelope (c = 1)
  const char* active() const { return top <= bottom ? "top" : "bottom"; }
};

struct StratumTable {
  int h = -1;            // commutator sub-operator; -1 for cz/rough
  double t_split = 1.0;  // level where the good set was taken (homogeneity scale)
  double uv_g = 0.0;
  double direct_total = 0.0;
  double binned_total = 0.0;
  bool consistent = false;
  std::vector<StratumRow> rows;
};

// Binning functionals, the two theoretical envelopes and the per-cube summand
// of one operator case. stratum_estimates drops cubes where either functional
// vanishes (zero terms), bins the rest, and cross-checks the binned total
// against the direct sum.
struct StratumSpec {
  std::function<double(const DyadicCube&)> f1, f2;
  std::function<double(int k, int j)> top, bottom;
  std::function<double(double f1v, double f2v)> summand_from;
};

StratumTable stratum_estimates(const GridSpec& g, const GridFunction& uv,
                               const SparseFamily& family, const StratumSpec& spec,
                               double uv_g, int h);

struct BoundReport {
  std::string scenario_id;
  double measured = 0.0;
  double raw_bound = 0.0;    // bound formula at c = 1
  double absorption = 0.0;   // additive uv(G)/2 term (rough case)
  double theoretical = 0.0;  // c_used * raw_bound + absorption
  double c_used = 1.0;
  double t_star = 1.0;
  ScenarioConstants constants;
  std::vector<StratumTable> strata;
  bool union_mass_ok = true;
  bool strat_consistent = true;
  bool factorization_ok = true;  // rough chain identity
  bool links_ok = true;          // rough absorption + reverse Holder links
  bool reduction_ok = true;
  // singular-weight floor sensitivity: true when moving the floor from the
  // default 2^{-2L} to 2^{-L} or 2^{-3L} changes any weight cell
  bool eps_floor_sensitive = false;
  bool pass = false;
  bool calibrate = false;
  std::string family_id;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// The three endpoint experiments, evaluated with the free constant c = 1.
// run_config applies the per-family fitted c afterwards.
BoundReport endpoint_ratio_cz(const Scenario& sc);
BoundReport endpoint_modular_commutator(const Scenario& sc);
BoundReport endpoint_ratio_rough(const Scenario& sc);
BoundReport run_scenario(const Scenario& sc);  // dispatch on op.kind

// Applies theoretical = c * raw + absorption and re-evaluates pass.
void apply_constant(BoundReport& rep, double c);

// Random instances for the lemma batteries and acceptance suites.
GridFunction random_weight(const GridSpec& g, Rng& rng);
GridFunction random_nonneg(const GridSpec& g, Rng& rng);
GridFunction random_signed(const GridSpec& g, Rng& rng);
// Single-lattice family with a canonical selection of achieved eta > 0.
SparseFamily random_sparse_family(const GridSpec& g, Rng& rng);

struct LemmaResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct BatteryResult {
  std::vector<LemmaResult> results;
  bool all_pass = true;
};

// Seeded batch of all lemma checks (UnQ, MUnDyad, Holder, KR, ContAvg,
// reverse Holder, DisEQ, DoubleSum).
BatteryResult lemma_battery(std::uint64_t seed, int level);

struct RunResult {
  std::vector<BoundReport> reports;
  std::string csv;
  bool all_pass = true;
};

// Parses the config JSON text, runs every scenario (THREADS env honored),
// fits the free constant once per scenario family over its calibrate subset,
// freezes it, and evaluates the holdouts. Deterministic output.
RunResult run_config(const std::string& config_json_text);
Scenario scenario_from_json_text(const std::string& text);  // single-scenario helper

}  // namespace mixedweak

#endif
