#include "mixedweak/bounds.hpp"

#include <cmath>

namespace mixedweak {

namespace {
const double kE = std::exp(1.0);
}

void BoundInputs::validate() const {
  const double cs[] = {a1_u, a1_v, ainf_uv, ainf_u, ainf_v, ap_v_u, a1_u_v};
  for (double x : cs)
    if (!(x >= 1.0)) throw std::invalid_argument("BoundInputs: weight constants must be >= 1");
  if (!(p > 1.0)) throw std::invalid_argument("BoundInputs: p must exceed 1");
  if (m < 0) throw std::invalid_argument("BoundInputs: m must be >= 0");
  if (!(r > 1.0)) throw std::invalid_argument("BoundInputs: r must exceed 1");
  if (h < 0 || h > m) throw std::invalid_argument("BoundInputs: need 0 <= h <= m");
  if (!(c > 0.0)) throw std::invalid_argument("BoundInputs: c must be positive");
}

double phi_rho(double t, double rho) {
  if (t < 0.0) throw std::invalid_argument("phi_rho: negative argument");
  if (t == 0.0) return 0.0;
  const double lp = t > 1.0 ? std::log(t) : 0.0;
  return t * std::pow(1.0 + lp, rho);
}

namespace {

double alpha_kj(const DoubleSumParams& p, int k, int j) {
  const double first = p.gamma1 * std::ldexp(1.0, -k) * std::pow(static_cast<double>(j), p.rho1);
  const double second = p.beta * p.gamma2 * std::exp2(p.delta * k - k - j) *
                        std::pow(static_cast<double>(k), p.rho2);
  return std::min(first, second);
}

struct Split {
  int intercept;
  int slope;
};

Split split_of(const DoubleSumParams& p) {
  return {static_cast<int>(std::ceil(std::log2((kE + p.gamma2) * 8.0 * p.gamma))),
          static_cast<int>(std::ceil(p.delta + p.rho2)) + 1};
}

// The j-range follows the split: for each k <= K the window runs J indices
// past j*(k), so the below-split head is summed completely. A square K x J box
// would drop head mass whenever slope * K exceeds J.
double partial_total(const DoubleSumParams& p, const Split& sp, int kmax, int jwindow) {
  double total = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    const long jmax = static_cast<long>(sp.intercept) + static_cast<long>(sp.slope) * k + jwindow;
    for (long j = 0; j <= jmax; ++j) total += alpha_kj(p, k, static_cast<int>(j));
  }
  return total;
}

}  // namespace

DoubleSumResult double_sum(const DoubleSumParams& p) {
  if (!(p.gamma1 > 1.0) || !(p.gamma2 > 1.0))
    throw std::invalid_argument("double_sum: gamma1, gamma2 must exceed 1");
  if (p.beta < 0.0 || p.delta < 0.0 || p.rho1 < 0.0 || p.rho2 < 0.0)
    throw std::invalid_argument("double_sum: beta, delta, rho must be >= 0");
  if (!(p.gamma >= 1.0)) throw std::invalid_argument("double_sum: gamma must be >= 1");

  DoubleSumResult out;
  const Split sp = split_of(p);
  out.split_intercept = sp.intercept;
  out.split_slope = sp.slope;
  for (int k = 0; k <= p.truncation_k; ++k) {
    const long jstar = static_cast<long>(sp.intercept) + static_cast<long>(sp.slope) * k;
    for (long j = 0; j <= jstar + p.truncation_j; ++j) {
      const double a = alpha_kj(p, k, static_cast<int>(j));
      out.total += a;
      if (j >= jstar)
        out.tail += a;
      else
        out.head += a;
    }
  }
  out.tail_budget = p.beta / (2.0 * p.gamma);

  const double doubled = partial_total(p, sp, 2 * p.truncation_k, 2 * p.truncation_j);
  if (std::abs(doubled - out.total) > 1e-12 * std::max(1e-300, std::abs(doubled)))
    throw std::runtime_error("double_sum: divergent configuration (total not stable under truncation doubling)");

  out.empirical_c =
      out.head / (p.gamma1 * std::pow(std::log2(kE + p.gamma2), 1.0 + p.rho1));
  return out;
}

double thm1_cz_bound(const BoundInputs& b) {
  b.validate();
  return b.c * b.ainf_uv * b.a1_u * std::log(kE + b.ainf_uv * b.a1_u * b.ap_v_u);
}

double thm1_comm_gamma(const BoundInputs& b) {
  b.validate();
  double total = 0.0;
  for (int h = 0; h <= b.m; ++h) {
    const double core = b.a1_u * std::pow(b.ainf_uv, 1.0 + h / b.r) *
                        std::pow(b.ainf_u, (b.m - h) / b.r);
    total += core * std::pow(std::log(kE + core * b.ap_v_u), 1.0 + h / b.r);
  }
  return b.c * total;
}

double thm1_rough_bound(const BoundInputs& b) {
  b.validate();
  return b.c * b.ainf_uv * b.a1_u * b.ainf_u *
         std::log(kE + b.ainf_uv * b.a1_u * b.ainf_u * b.ap_v_u);
}

double thm2_cz_bound(const BoundInputs& b) {
  b.validate();
  return b.c * b.a1_v * b.ainf_v * b.a1_u_v * std::log(kE + b.ainf_uv * b.a1_v);
}

double thm2_comm_gamma(const BoundInputs& b) {
  b.validate();
  double total = 0.0;
  for (int h = 0; h <= b.m; ++h) {
    const double core = b.a1_v * std::pow(b.ainf_v, h / b.r) *
                        std::pow(b.ainf_uv, (b.m - h) / b.r);
    total += core * b.a1_u_v * b.ainf_v * std::pow(std::log(kE + core), 1.0 + h / b.r);
  }
  return b.c * total;
}

double thm2_rough_bound(const BoundInputs& b) {
  b.validate();
  return b.c * b.ainf_uv * b.a1_v * b.a1_u_v * b.ainf_v *
         std::log(kE + b.ainf_uv * b.a1_v);
}

ReductionCheck reduction_budget_check(double kappa_uv, double modular, double uv_g) {
  ReductionCheck out;
  const double a = kappa_uv * modular;
  out.hypothesis = uv_g <= a + 0.5 * uv_g;
  out.conclusion = uv_g <= 2.0 * a;
  out.ok = out.hypothesis == out.conclusion;
  return out;
}

}  // namespace mixedweak
