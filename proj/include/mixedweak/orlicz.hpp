#ifndef MIXEDWEAK_ORLICZ_HPP
#define MIXEDWEAK_ORLICZ_HPP

#include <memory>
#include <optional>
#include <string>

#include "mixedweak/grid.hpp"

namespace mixedweak {

// Parametrized convex gauge used in Luxemburg norms. Canonical text forms:
//   "pow:2"                      t^2
//   "llogl:0.5"                  t (1 + log+ t)^{1/2}
//   "explr:2"                    exp(t^2) - 1
//   "scaled:3.2:pow:2:llogl:0.5" 3.2 * (llogl(0.5))^2
// A trailing young-spec after "pow:p" means A(t)^p of the inner spec.
class YoungFunction {
 public:
  static YoungFunction power(double p);
  static YoungFunction llogl(double rho);
  static YoungFunction explr(double r);
  static YoungFunction scaled_by(double c, const YoungFunction& inner);
  static YoungFunction powered(double p, const YoungFunction& inner);
  static YoungFunction parse(const std::string& text);

  double operator()(double t) const;  // throws on t < 0; may return +inf (overflow guard)
  std::string text() const;
  enum class Tag { Power, LLogL, ExpLr, Scaled, Powered };
  Tag tag() const;       // top-level variant
  double param() const;  // its numeric parameter
  // kappa with A(st) <= kappa A(s) A(t), when known analytically
  std::optional<double> kappa() const;
  // sup of A(st)/(A(s)A(t)) over a 64x64 log grid
  double measured_kappa(double tmin = 1e-3, double tmax = 1e3) const;

  struct Node;  // implementation detail, defined in the .cpp

 private:
  std::shared_ptr<const Node> node_;
};

// Discrete convexity / superlinearity audit over 64 log-spaced points.
bool young_convexity_audit(const YoungFunction& a, double tmin = 1e-6, double tmax = 1e6);

struct OrliczAvg {
  double value = 0.0;
  DyadicCube cube;
  std::string young;
  std::string weight_id;
};

// inf{ lambda > 0 : (1/w(Q)) int_Q A(|f|/lambda) w <= 1 } by bracket doubling
// plus bisection to relative tolerance 1e-12. The returned value is feasible:
// its modular is <= 1 (and >= 1 - 1e-8 whenever f is not identically 0 on Q).
double luxemburg_norm(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
                      const DyadicCube& q);
OrliczAvg luxemburg_avg(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
                        const DyadicCube& q, const std::string& weight_id = "");

// inf_mu { mu + (mu/w(Q)) int_Q A(|f|/mu) w } via a 256-point log grid around
// the Luxemburg norm plus local ternary refinement (the objective is convex).
double kr_norm(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
               const DyadicCube& q);

struct HolderCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
// Registered complementary pairs: (pow:p, pow:p') and (llogl:1/r, explr:r).
bool complementary_pair(const YoungFunction& a, const YoungFunction& abar);
HolderCheck holder_check(const GridFunction& f, const GridFunction& g, const YoungFunction& a,
                         const YoungFunction& abar, const GridFunction& w, const DyadicCube& q);

// Cell value = max over family cubes containing the cell of the Luxemburg norm.
GridFunction orlicz_maximal(const GridFunction& f, const YoungFunction& a,
                            const GridFunction& w, const CubeFamily& family);

// sup over base cubes of || b - avg_Q b ||_{expL^r(w), Q}
double osc_norm(const GridFunction& b, double r, const GridFunction& w);

struct OscLemmaCheck {
  double lhs = 0.0;        // || |b - b_Q|^j ||_{expL^{r/j}(w), Q}
  double rhs_shape = 0.0;  // [w]_Ainf^{j/r} * ||b||_osc^j  (constant-free comparison)
  double ratio = 0.0;
};
OscLemmaCheck osc_lemma_check(const GridFunction& b, double r, double j, const GridFunction& w,
                              const DyadicCube& q);

struct ContAvgCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
// ||f||_{Phi(u),Q} <= ||f||_{[v]_{Ap(u)} Phi^p (uv), Q}; apvu is the measured
// [v]_{A_p(u)} over a family containing Q.
ContAvgCheck cont_avg_check(const GridFunction& f, const YoungFunction& phi, double p,
                            const GridFunction& u, const GridFunction& v, const DyadicCube& q,
                            double apvu);

}  // namespace mixedweak

#endif
