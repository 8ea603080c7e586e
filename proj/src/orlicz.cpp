#include "mixedweak/orlicz.hpp"

#include "mixedweak/weights.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mixedweak {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

struct YoungFunction::Node {
  enum class Kind { Power, LLogL, ExpLr, Scaled, Powered } kind;
  double param = 1.0;  // p / rho / r / c / p
  std::shared_ptr<const Node> inner;
};

YoungFunction YoungFunction::power(double p) {
  if (p < 1.0) throw std::invalid_argument("YoungFunction::power: p must be >= 1");
  YoungFunction y;
  y.node_ = std::make_shared<Node>(Node{Node::Kind::Power, p, nullptr});
  return y;
}

YoungFunction YoungFunction::llogl(double rho) {
  if (rho < 0.0) throw std::invalid_argument("YoungFunction::llogl: rho must be >= 0");
  YoungFunction y;
  y.node_ = std::make_shared<Node>(Node{Node::Kind::LLogL, rho, nullptr});
  return y;
}

YoungFunction YoungFunction::explr(double r) {
  if (!(r > 0.0)) throw std::invalid_argument("YoungFunction::explr: r must be > 0");
  YoungFunction y;
  y.node_ = std::make_shared<Node>(Node{Node::Kind::ExpLr, r, nullptr});
  return y;
}

YoungFunction YoungFunction::scaled_by(double c, const YoungFunction& inner) {
  if (!(c > 0.0)) throw std::invalid_argument("YoungFunction::scaled_by: c must be > 0");
  YoungFunction y;
  y.node_ = std::make_shared<Node>(Node{Node::Kind::Scaled, c, inner.node_});
  return y;
}

YoungFunction YoungFunction::powered(double p, const YoungFunction& inner) {
  if (p < 1.0) throw std::invalid_argument("YoungFunction::powered: p must be >= 1");
  YoungFunction y;
  y.node_ = std::make_shared<Node>(Node{Node::Kind::Powered, p, inner.node_});
  return y;
}

namespace {

double eval_node(const YoungFunction::Node& n, double t);

double eval_node(const YoungFunction::Node& n, double t) {
  using K = YoungFunction::Node::Kind;
  switch (n.kind) {
    case K::Power:
      return std::pow(t, n.param);
    case K::LLogL: {
      if (t == 0.0) return 0.0;
      const double lp = t > 1.0 ? std::log(t) : 0.0;
      return t * std::pow(1.0 + lp, n.param);
    }
    case K::ExpLr: {
      const double a = std::pow(t, n.param);
      if (a > 700.0) return kInf;  // exp overflow guard; forces larger lambda
      return std::expm1(a);
    }
    case K::Scaled:
      return n.param * eval_node(*n.inner, t);
    case K::Powered: {
      const double v = eval_node(*n.inner, t);
      return std::isinf(v) ? kInf : std::pow(v, n.param);
    }
  }
  return 0.0;
}

}  // namespace

double YoungFunction::operator()(double t) const {
  if (t < 0.0) throw std::invalid_argument("YoungFunction: negative argument");
  if (!node_) throw std::logic_error("YoungFunction: empty");
  return eval_node(*node_, t);
}

YoungFunction::Tag YoungFunction::tag() const {
  switch (node_->kind) {
    case Node::Kind::Power:
      return Tag::Power;
    case Node::Kind::LLogL:
      return Tag::LLogL;
    case Node::Kind::ExpLr:
      return Tag::ExpLr;
    case Node::Kind::Scaled:
      return Tag::Scaled;
    case Node::Kind::Powered:
      return Tag::Powered;
  }
  return Tag::Power;
}

double YoungFunction::param() const { return node_->param; }

std::string YoungFunction::text() const {
  using K = Node::Kind;
  std::ostringstream os;
  const Node* n = node_.get();
  std::function<void(const Node*)> emit = [&](const Node* m) {
    switch (m->kind) {
      case K::Power:
        os << "pow:" << m->param;
        break;
      case K::LLogL:
        os << "llogl:" << m->param;
        break;
      case K::ExpLr:
        os << "explr:" << m->param;
        break;
      case K::Scaled:
        os << "scaled:" << m->param << ":";
        emit(m->inner.get());
        break;
      case K::Powered:
        os << "pow:" << m->param << ":";
        emit(m->inner.get());
        break;
    }
  };
  emit(n);
  return os.str();
}

YoungFunction YoungFunction::parse(const std::string& text) {
  std::vector<std::string> tok;
  std::string cur;
  for (char ch : text) {
    if (ch == ':') {
      tok.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  tok.push_back(cur);
  std::size_t pos = 0;
  std::function<YoungFunction()> next = [&]() -> YoungFunction {
    if (pos >= tok.size()) throw std::invalid_argument("YoungFunction::parse: truncated spec");
    const std::string head = tok[pos++];
    auto num = [&]() -> double {
      if (pos >= tok.size()) throw std::invalid_argument("YoungFunction::parse: missing number");
      return std::stod(tok[pos++]);
    };
    if (head == "pow") {
      const double p = num();
      if (pos < tok.size()) return powered(p, next());
      return power(p);
    }
    if (head == "llogl") return llogl(num());
    if (head == "explr") return explr(num());
    if (head == "scaled") {
      const double c = num();
      return scaled_by(c, next());
    }
    throw std::invalid_argument("YoungFunction::parse: unknown variant '" + head + "'");
  };
  YoungFunction y = next();
  if (pos != tok.size()) throw std::invalid_argument("YoungFunction::parse: trailing tokens");
  return y;
}

std::optional<double> YoungFunction::kappa() const {
  using K = Node::Kind;
  std::function<std::optional<double>(const Node*)> walk =
      [&](const Node* n) -> std::optional<double> {
    switch (n->kind) {
      case K::Power:
        return 1.0;
      case K::LLogL:
        // (1 + log+ st) <= (1 + log+ s)(1 + log+ t)
        return 1.0;
      case K::ExpLr:
        return std::nullopt;
      case K::Scaled: {
        auto k = walk(n->inner.get());
        if (!k) return std::nullopt;
        return *k / n->param;
      }
      case K::Powered: {
        auto k = walk(n->inner.get());
        if (!k) return std::nullopt;
        return std::pow(*k, n->param);
      }
    }
    return std::nullopt;
  };
  return walk(node_.get());
}

double YoungFunction::measured_kappa(double tmin, double tmax) const {
  double worst = 0.0;
  const int n = 64;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double s = tmin * std::pow(tmax / tmin, static_cast<double>(i) / (n - 1));
      const double t = tmin * std::pow(tmax / tmin, static_cast<double>(j) / (n - 1));
      const double num = (*this)(s * t);
      const double den = (*this)(s) * (*this)(t);
      if (std::isinf(num) || std::isinf(den) || !(den > 0.0)) continue;
      worst = std::max(worst, num / den);
    }
  return worst;
}

bool young_convexity_audit(const YoungFunction& a, double tmin, double tmax) {
  const int n = 64;
  std::vector<double> t(n), v(n);
  for (int i = 0; i < n; ++i) {
    t[i] = tmin * std::pow(tmax / tmin, static_cast<double>(i) / (n - 1));
    v[i] = a(t[i]);
  }
  if (a(0.0) != 0.0) return false;
  for (int i = 0; i + 1 < n; ++i)
    if (v[i + 1] < v[i]) return false;  // nondecreasing
  for (int i = 0; i + 2 < n; ++i) {
    if (std::isinf(v[i + 2])) continue;
    const double mid = 0.5 * (t[i] + t[i + 2]);
    const double lam = (mid - t[i]) / (t[i + 2] - t[i]);
    const double chord = (1.0 - lam) * v[i] + lam * v[i + 2];
    if (a(mid) > chord * (1.0 + 1e-9)) return false;  // convexity on the test grid
  }
  return true;
}

namespace {

struct CubeSamples {
  std::vector<double> absf;
  std::vector<double> w;
  double wq = 0.0;
};

CubeSamples collect(const GridFunction& f, const GridFunction& w, const DyadicCube& q) {
  if (!(f.grid == w.grid)) throw std::invalid_argument("orlicz: grid mismatch");
  const GridSpec& g = f.grid;
  const CellRect r = cube_cells(g, q);
  CubeSamples s;
  s.absf.reserve(static_cast<std::size_t>(r.cell_count(g.dim)));
  s.w.reserve(s.absf.capacity());
  for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
    for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
      const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
      if (!(w.values[i] > 0.0))
        throw std::invalid_argument("orlicz: weight must be strictly positive on cube");
      s.absf.push_back(std::abs(f.values[i]));
      s.w.push_back(w.values[i]);
      s.wq += w.values[i];
    }
  return s;
}

double modular(const CubeSamples& s, const YoungFunction& a, double lambda) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.absf.size(); ++i) {
    const double v = a(s.absf[i] / lambda);
    if (std::isinf(v)) return kInf;
    acc += v * s.w[i];
  }
  return acc / s.wq;
}

double luxemburg_from_samples(const CubeSamples& s, const YoungFunction& a) {
  double fmax = 0.0;
  for (double v : s.absf) fmax = std::max(fmax, v);
  if (fmax == 0.0) return 0.0;
  double hi = fmax;
  int iter = 0;
  while (modular(s, a, hi) > 1.0) {
    hi *= 2.0;
    if (++iter > 200) throw std::runtime_error("luxemburg_norm: bracket expansion failed");
  }
  double lo = hi / 2.0;
  iter = 0;
  while (modular(s, a, lo) <= 1.0) {
    hi = lo;
    lo /= 2.0;
    if (++iter > 200) {
      // modular stays <= 1 down to absurdly small lambda; treat hi as the inf
      return hi;
    }
  }
  for (iter = 0; iter < 200 && (hi - lo) > 1e-13 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (modular(s, a, mid) <= 1.0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace

double luxemburg_norm(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
                      const DyadicCube& q) {
  const CubeSamples s = collect(f, w, q);
  return luxemburg_from_samples(s, a);
}

OrliczAvg luxemburg_avg(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
                        const DyadicCube& q, const std::string& weight_id) {
  return OrliczAvg{luxemburg_norm(f, a, w, q), q, a.text(), weight_id};
}

double kr_norm(const GridFunction& f, const YoungFunction& a, const GridFunction& w,
               const DyadicCube& q) {
  const CubeSamples s = collect(f, w, q);
  const double lux = luxemburg_from_samples(s, a);
  if (lux == 0.0) return 0.0;
  auto objective = [&](double mu) { return mu * (1.0 + modular(s, a, mu)); };
  const int npts = 256;
  double best = kInf, best_mu = lux;
  int best_i = -1;
  std::vector<double> mus(npts);
  for (int i = 0; i < npts; ++i) {
    mus[static_cast<std::size_t>(i)] =
        lux * std::pow(1e12, static_cast<double>(i) / (npts - 1)) * 1e-6;
    const double val = objective(mus[static_cast<std::size_t>(i)]);
    if (val < best) {
      best = val;
      best_mu = mus[static_cast<std::size_t>(i)];
      best_i = i;
    }
  }
  // objective is convex in mu, so the true min lies between the grid neighbors
  double lo = best_i > 0 ? mus[static_cast<std::size_t>(best_i - 1)] : best_mu * 0.5;
  double hi = best_i + 1 < npts ? mus[static_cast<std::size_t>(best_i + 1)] : best_mu * 2.0;
  for (int it = 0; it < 120; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (objective(m1) <= objective(m2))
      hi = m2;
    else
      lo = m1;
  }
  best = std::min(best, objective(0.5 * (lo + hi)));
  return best;
}

bool complementary_pair(const YoungFunction& a, const YoungFunction& abar) {
  using Tag = YoungFunction::Tag;
  const Tag ta = a.tag(), tb = abar.tag();
  const double pa = a.param(), pb = abar.param();
  if (ta == Tag::Power && tb == Tag::Power)
    return std::abs(1.0 / pa + 1.0 / pb - 1.0) <= 1e-12;
  if (ta == Tag::LLogL && tb == Tag::ExpLr) return std::abs(pa - 1.0 / pb) <= 1e-12;
  if (ta == Tag::ExpLr && tb == Tag::LLogL) return std::abs(pb - 1.0 / pa) <= 1e-12;
  return false;
}

HolderCheck holder_check(const GridFunction& f, const GridFunction& g, const YoungFunction& a,
                         const YoungFunction& abar, const GridFunction& w, const DyadicCube& q) {
  if (!complementary_pair(a, abar))
    throw std::invalid_argument("holder_check: pair is not in the complementary registry");
  HolderCheck out;
  const GridFunction fg = product(f, g);
  // (1/w(Q)) int |fg| w
  const CubeSamples s = collect(fg, w, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.absf.size(); ++i) acc += s.absf[i] * s.w[i];
  out.lhs = acc / s.wq;
  out.rhs = 2.0 * luxemburg_norm(f, a, w, q) * luxemburg_norm(g, abar, w, q);
  out.holds = out.lhs <= out.rhs * (1.0 + 1e-9);
  return out;
}

GridFunction orlicz_maximal(const GridFunction& f, const YoungFunction& a,
                            const GridFunction& w, const CubeFamily& family) {
  if (family.cubes.empty()) throw std::invalid_argument("orlicz_maximal: empty family");
  const GridSpec& g = f.grid;
  std::vector<double> out(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (const DyadicCube& q : family.cubes) {
    const CellRect r = cube_cells(g, q);
    if (r.empty(g.dim)) continue;
    const double norm = luxemburg_norm(f, a, w, q);
    for (std::int64_t y = r.lo[1]; y < r.hi[1]; ++y)
      for (std::int64_t x = r.lo[0]; x < r.hi[0]; ++x) {
        const std::size_t i = static_cast<std::size_t>(g.cell_index(x, y));
        if (norm > out[i]) out[i] = norm;
      }
  }
  return GridFunction(g, std::move(out), true);
}

namespace {

GridFunction abs_minus_avg(const GridFunction& b, const DyadicCube& q, double power) {
  const double bq = average(b, q);
  std::vector<double> vals(b.values.size(), 0.0);
  for (std::size_t i = 0; i < vals.size(); ++i)
    vals[i] = std::pow(std::abs(b.values[i] - bq), power);
  return GridFunction(b.grid, std::move(vals), true);
}

}  // namespace

double osc_norm(const GridFunction& b, double r, const GridFunction& w) {
  if (r < 1.0) throw std::invalid_argument("osc_norm: r must be >= 1");
  const YoungFunction a = YoungFunction::explr(r);
  double worst = 0.0;
  for (const DyadicCube& q : base_family(b.grid).cubes) {
    const GridFunction dev = abs_minus_avg(b, q, 1.0);
    worst = std::max(worst, luxemburg_norm(dev, a, w, q));
  }
  return worst;
}

OscLemmaCheck osc_lemma_check(const GridFunction& b, double r, double j, const GridFunction& w,
                              const DyadicCube& q) {
  if (!(j > 0.0)) throw std::invalid_argument("osc_lemma_check: j must be positive");
  OscLemmaCheck out;
  const GridFunction devj = abs_minus_avg(b, q, j);
  out.lhs = luxemburg_norm(devj, YoungFunction::explr(r / j), w, q);
  GridFunction unit(b.grid, 1.0);
  const double osc = osc_norm(b, r, unit);
  const double ainf = ainf_fujii(w, base_family(w.grid)).value;
  out.rhs_shape = std::pow(ainf, j / r) * std::pow(osc, j);
  out.ratio = out.rhs_shape > 0.0 ? out.lhs / out.rhs_shape : (out.lhs > 0.0 ? kInf : 0.0);
  return out;
}

ContAvgCheck cont_avg_check(const GridFunction& f, const YoungFunction& phi, double p,
                            const GridFunction& u, const GridFunction& v, const DyadicCube& q,
                            double apvu) {
  ContAvgCheck out;
  out.lhs = luxemburg_norm(f, phi, u, q);
  const YoungFunction rhs_young = YoungFunction::scaled_by(apvu, YoungFunction::powered(p, phi));
  out.rhs = luxemburg_norm(f, rhs_young, product(u, v), q);
  out.holds = out.lhs <= out.rhs * (1.0 + 1e-9);
  return out;
}

}  // namespace mixedweak
