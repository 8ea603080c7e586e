#ifndef MIXEDWEAK_BOUNDS_HPP
#define MIXEDWEAK_BOUNDS_HPP

#include <stdexcept>

namespace mixedweak {

// Measured weight constants plus the parameters entering the bound formulas.
// The free multiplicative constant c stands in for the unspecified dimensional
// factors and defaults to 1.
struct BoundInputs {
  double a1_u = 1.0;     // [u]_A1
  double a1_v = 1.0;     // [v]_A1
  double ainf_uv = 1.0;  // [uv]_Ainf
  double ainf_u = 1.0;   // [u]_Ainf
  double ainf_v = 1.0;   // [v]_Ainf
  double ap_v_u = 1.0;   // [v]_Ap(u)
  double a1_u_v = 1.0;   // [u]_A1(v)
  double p = 2.0;
  int m = 0;
  double r = 2.0;
  int h = 0;
  double c = 1.0;

  void validate() const;
};

// t (1 + log+ t)^rho
double phi_rho(double t, double rho);

struct DoubleSumParams {
  double gamma1 = 2.0;  // > 1
  double gamma2 = 2.0;  // > 1
  double beta = 0.0;    // >= 0
  double delta = 0.0;   // >= 0
  double rho1 = 0.0;    // >= 0
  double rho2 = 0.0;    // >= 0
  double gamma = 1.0;   // >= 1
  int truncation_k = 128;
  int truncation_j = 128;
};

struct DoubleSumResult {
  double total = 0.0;
  double head = 0.0;         // sum over j below the split index
  double tail = 0.0;         // sum over j >= j*(k); provably <= beta/(2 gamma)
  double tail_budget = 0.0;  // beta/(2 gamma)
  int split_intercept = 0;   // ceil(log2((e+gamma2) 8 gamma))
  int split_slope = 0;       // ceil(delta+rho2)+1
  double empirical_c = 0.0;  // head / (gamma1 log2(e+gamma2)^{1+rho1})
};

// alpha_{k,j} = min(gamma1 2^-k j^rho1, beta gamma2 2^-j 2^-k 2^{delta k} k^rho2)
// summed over the truncation box, split at j*(k) = intercept + slope*k.
// Throws if doubling the truncation moves the total by more than 1e-12 relative.
DoubleSumResult double_sum(const DoubleSumParams& p);

// Closed forms of the six headline bound expressions (free constant c as a
// multiplier; natural log).
double thm1_cz_bound(const BoundInputs& b);
double thm1_comm_gamma(const BoundInputs& b);
double thm1_rough_bound(const BoundInputs& b);
double thm2_cz_bound(const BoundInputs& b);
double thm2_comm_gamma(const BoundInputs& b);
double thm2_rough_bound(const BoundInputs& b);

struct ReductionCheck {
  bool hypothesis = false;  // X <= a + X/2
  bool conclusion = false;  // X <= 2a
  bool ok = false;          // the bootstrap algebra: hypothesis iff conclusion
};

// X = uv(G), a = kappa * modular. If X <= a + X/2 then X <= 2a.
ReductionCheck reduction_budget_check(double kappa_uv, double modular, double uv_g);

}  // namespace mixedweak

#endif
