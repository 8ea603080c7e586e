#ifndef MIXEDWEAK_WEIGHTS_HPP
#define MIXEDWEAK_WEIGHTS_HPP

#include <string>

#include "mixedweak/grid.hpp"

namespace mixedweak {

// One measured weight constant: the exact max of its functional over the
// scanned family, plus the cube attaining it.
struct ConstantReport {
  std::string kind;  // "A1" | "AinfFW" | "Ap" | "Ap(u)" | "A1(v)"
  double value = 1.0;
  DyadicCube argmax;
  std::string family;
  std::string to_json() const;
};

// Cell value = max over family cubes containing the cell of the (w-weighted)
// average of f. Cells covered by no cube get 0.
GridFunction dyadic_maximal(const GridFunction& f, const CubeFamily& family,
                            const GridFunction* w = nullptr);

ConstantReport a1_constant(const GridFunction& w, const CubeFamily& family);
ConstantReport a1_relative(const GridFunction& v, const GridFunction& u,
                           const CubeFamily& family);
ConstantReport ap_constant(const GridFunction& v, double p, const CubeFamily& family);
// p <= 1 routes to a1_relative
ConstantReport ap_relative(const GridFunction& v, const GridFunction& u, double p,
                           const CubeFamily& family);
// Fujii-Wilson constant with the maximal operator restricted to the scanned family.
ConstantReport ainf_fujii(const GridFunction& w, const CubeFamily& family);

struct ReverseHolderReport {
  bool holds = false;        // at the requested tau
  double r_w = 1.0;          // exponent used at the requested tau
  DyadicCube worst;          // cube with largest lhs/rhs ratio at the requested tau
  double worst_ratio = 0.0;  // max over cubes of lhs / (2 avg w)
  double minimal_tau = 0.0;  // smallest feasible tau found by bisection
  bool tau_at_lower_bound = false;
  bool tau_at_upper_bound = false;
};

// Checks (avg_Q w^{r})^{1/r} <= 2 avg_Q w with r = 1 + 1/(tau * [w]_AinfFW)
// on every family cube, and bisects for the minimal feasible tau in
// [1e-2, 1e6] (relative tolerance 1e-3).
ReverseHolderReport reverse_holder_probe(const GridFunction& w, double tau,
                                         const CubeFamily& family);

}  // namespace mixedweak

#endif
