#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mesh.hpp"
#include "special_functions.hpp"
#include "toeplitz.hpp"

namespace fracdiff {

// w[n] = K^s_h(n) for n = 0..N; the kernel is even in n.
struct KernelWeights {
  double s = 0.5;
  double h = 1.0;
  std::vector<double> w;

  std::size_t half_width() const { return w.empty() ? 0 : w.size() - 1; }
};

inline void check_order(double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("fractional order s must lie in (0,1)");
}

// 4^s Gamma(1/2+s) / (sqrt(pi) |Gamma(-s)|): the normalisation C_{1,s} of the
// continuous operator and the far-field constant of the discrete kernel.
inline double fractional_laplacian_constant(double s) {
  check_order(s);
  return s * std::pow(4.0, s) *
         std::exp(log_gamma(0.5 + s) - log_gamma(1.0 - s)) / std::sqrt(std::numbers::pi);
}

inline KernelWeights kernel_weights(double s, double h, std::size_t N) {
  check_order(s);
  if (!(h > 0.0)) throw std::invalid_argument("kernel_weights: h must be positive");
  if (N < 1) throw std::invalid_argument("kernel_weights: need N >= 1");
  KernelWeights k{s, h, std::vector<double>(N + 1)};
  const double scale = std::pow(h, -2.0 * s);
  k.w[0] = std::exp(log_gamma(2.0 * s + 1.0) - 2.0 * log_gamma(1.0 + s)) * scale;
  // R(n) = C Gamma(n-s)/Gamma(n+1+s), advanced with the ratio (n-s)/(n+1+s).
  double r = fractional_laplacian_constant(s) *
             std::exp(log_gamma(1.0 - s) - log_gamma(2.0 + s)) * scale;
  for (std::size_t n = 1; n <= N; ++n) {
    k.w[n] = -r;
    const double nn = static_cast<double>(n);
    r *= (nn - s) / (nn + 1.0 + s);
  }
  return k;
}

// (-1)^n Gamma(2s+1) / (Gamma(1+s+n) Gamma(1+s-n)) h^{-2s}, with 1/Gamma at negative
// arguments taken through the reflection formula. Independent of kernel_weights.
inline double kernel_weight_reflected(double s, double h, long n) {
  check_order(s);
  const long m = n < 0 ? -n : n;
  const double x = 1.0 + s - static_cast<double>(m);
  const double g = std::exp(log_gamma(2.0 * s + 1.0)) * std::pow(h, -2.0 * s);
  if (x > 0.0) {
    const double v = g / (boost::math::tgamma(1.0 + s + static_cast<double>(m)) * boost::math::tgamma(x));
    return m % 2 == 1 ? -v : v;
  }
  // 1/Gamma(x) = sin(pi x) Gamma(1-x) / pi, and Gamma(m-s)/Gamma(m+1+s) as one ratio
  const double v = g * boost::math::sin_pi(x) / std::numbers::pi *
                   boost::math::tgamma_delta_ratio(static_cast<double>(m) - s, 1.0 + 2.0 * s);
  return m % 2 == 1 ? -v : v;
}

// -C Gamma(n-s)/Gamma(n+1+s) h^{-2s} straight from log-gamma, n >= 1.
inline double kernel_weight_direct(double s, double h, long n) {
  check_order(s);
  const double m = static_cast<double>(n < 0 ? -n : n);
  if (m < 1.0) throw std::invalid_argument("kernel_weight_direct: n must be nonzero");
  return -fractional_laplacian_constant(s) * std::exp(log_gamma(m - s) - log_gamma(m + 1.0 + s)) *
         std::pow(h, -2.0 * s);
}

// (-Delta_h)^s restricted to a mesh, with zero extension outside it.
class DiscreteFractionalLaplacian {
 public:
  DiscreteFractionalLaplacian(double s, const Mesh& mesh, ApplyMethod method = ApplyMethod::automatic)
      : s_(s), mesh_(mesh), op_(kernel_weights(s, mesh.h(), mesh.size() - 1).w, method) {}

  double s() const { return s_; }
  const Mesh& mesh() const { return mesh_; }
  const SymmetricToeplitz& toeplitz() const { return op_; }
  double diagonal() const { return op_.column()[0]; }

  void apply(std::span<const double> u, std::span<double> out) const { op_.apply(u, out); }

  GridFunction apply(const GridFunction& u) const {
    if (!(u.mesh() == mesh_)) throw std::invalid_argument("DiscreteFractionalLaplacian: mesh mismatch");
    GridFunction out(mesh_);
    op_.apply(u.values(), out.values());
    return out;
  }

 private:
  double s_;
  Mesh mesh_;
  SymmetricToeplitz op_;
};

inline GridFunction apply(const KernelWeights& k, const GridFunction& u,
                          ApplyMethod method = ApplyMethod::automatic) {
  const Mesh& mesh = u.mesh();
  if (k.h != mesh.h()) throw std::invalid_argument("apply: kernel and mesh spacing differ");
  if (k.half_width() + 1 < mesh.size())
    throw std::invalid_argument("apply: kernel half width shorter than the mesh");
  std::vector<double> col(k.w.begin(), k.w.begin() + static_cast<std::ptrdiff_t>(mesh.size()));
  SymmetricToeplitz op(std::move(col), method);
  GridFunction out(mesh);
  op.apply(u.values(), out.values());
  return out;
}

namespace detail {

// Globally adaptive 31-point Gauss-Kronrod with an absolute target: the interval with
// the largest estimate is bisected until the total estimate meets abs_tol or the
// interval budget runs out. Estimates at or below `floor(a, b)` (the rounding level
// of the integrand there) are frozen. Starting pieces are at most max_width wide so
// oscillations cannot alias into a small estimate.
template <class F, class Floor>
double adaptive_gauss_kronrod(const F& f, double a, double b, double abs_tol, const Floor& floor,
                              double max_width, double& err_out, std::size_t budget = 20000) {
  using boost::math::quadrature::gauss_kronrod;
  struct Piece {
    double a, b, value, err;
    bool operator<(const Piece& o) const { return err < o.err; }
  };
  auto make = [&](double lo, double hi) {
    double err = 0.0;
    const double v = gauss_kronrod<double, 31>::integrate(f, lo, hi, 0, 0.0, &err);
    return Piece{lo, hi, v, err};
  };
  std::priority_queue<Piece> open;
  double total = 0.0, frozen_value = 0.0, frozen_err = 0.0;
  const auto pieces = static_cast<std::size_t>(std::ceil((b - a) / max_width));
  for (std::size_t i = 0; i < pieces; ++i) {
    const double lo = a + (b - a) * static_cast<double>(i) / static_cast<double>(pieces);
    const double hi = i + 1 == pieces ? b : a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(pieces);
    Piece p = make(lo, hi);
    if (p.err <= floor(lo, hi)) {
      frozen_value += p.value;
      frozen_err += p.err;
    } else {
      total += p.err;
      open.push(p);
    }
  }
  std::size_t used = pieces;
  while (!open.empty() && total + frozen_err > abs_tol && used < budget) {
    Piece p = open.top();
    open.pop();
    total -= p.err;
    const double m = 0.5 * (p.a + p.b);
    for (Piece c : {make(p.a, m), make(m, p.b)}) {
      if (c.err <= floor(c.a, c.b)) {
        frozen_value += c.value;
        frozen_err += c.err;
      } else {
        total += c.err;
        open.push(c);
      }
    }
    used += 2;
  }
  double value = frozen_value, err = frozen_err;
  while (!open.empty()) {
    value += open.top().value;
    err += open.top().err;
    open.pop();
  }
  err_out += err;
  return value;
}

}  // namespace detail

// C_s int_0^inf (2U(x) - U(x+r) - U(x-r)) r^{-1-2s} dr.
// [0, delta]: Taylor expansion through sixth order, derivatives from central differences.
// [delta, R]: geometric panels, each bisected adaptively to an absolute target.
// [R, inf): the 2U(x) part in closed form, the rest by exp-sinh; if that cannot certify
// tol, R is pushed out until the boundedness bound 2 sup|U| R^{-2s}/(2s) drops below tol.
inline double continuous_op_oracle(const std::function<double(double)>& U, double s, double x,
                                   double tol = 1e-10) {
  check_order(s);
  if (!(tol > 0.0)) throw std::invalid_argument("continuous_op_oracle: tol must be positive");
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double ux = U(x);
  const double two_s = 2.0 * s;
  const double C = fractional_laplacian_constant(s);

  const double eta = 1e-2;
  auto second = [&](double e) { return (U(x + e) - 2.0 * ux + U(x - e)) / (e * e); };
  auto fourth = [&](double e) {
    return (U(x + 2 * e) - 4 * U(x + e) + 6 * ux - 4 * U(x - e) + U(x - 2 * e)) / (e * e * e * e);
  };
  const double d4 = (4.0 * fourth(0.01) - fourth(0.02)) / 3.0;
  const double e6 = 0.02;
  const double d6 = (U(x + 3 * e6) - 6 * U(x + 2 * e6) + 15 * U(x + e6) - 20 * ux + 15 * U(x - e6) -
                     6 * U(x - 2 * e6) + U(x - 3 * e6)) / std::pow(e6, 6);
  // Richardson leaves eta^4 U^(6) / 1440 behind in the second derivative.
  const double d2 = (4.0 * second(0.5 * eta) - second(eta)) / 3.0 + std::pow(eta, 4) * d6 / 1440.0;
  const double delta = 1e-2;
  const double inner = -d2 * std::pow(delta, 2.0 - two_s) / (2.0 - two_s) -
                       d4 * std::pow(delta, 4.0 - two_s) / (12.0 * (4.0 - two_s)) -
                       d6 * std::pow(delta, 6.0 - two_s) / (360.0 * (6.0 - two_s));

  auto sym = [&](double r) { return (2.0 * ux - U(x + r) - U(x - r)) * std::pow(r, -1.0 - two_s); };
  auto sym_floor = [&](double a, double b) {
    const double m = 0.5 * (a + b);
    const double scale = 2.0 * std::abs(ux) + std::abs(U(x + m)) + std::abs(U(x - m));
    return 64.0 * eps * scale * (std::pow(a, -two_s) - std::pow(b, -two_s)) / two_s;
  };
  const double reach = 64.0 + 4.0 * std::abs(x);
  int panels = 0;
  for (double r = delta; r < reach; r *= 2.0) ++panels;
  const double panel_tol = 0.25 * tol / (C * panels);
  double lo = delta, middle = 0.0, err_total = 0.0;
  while (lo < reach) {
    const double hi = 2.0 * lo;
    middle += detail::adaptive_gauss_kronrod(sym, lo, hi, panel_tol, sym_floor, 2.0, err_total);
    lo = hi;
  }

  static thread_local boost::math::quadrature::exp_sinh<double> tail_rule;
  auto far = [&](double r) { return (U(x + r) + U(x - r)) * std::pow(r, -1.0 - two_s); };
  auto far_floor = [&](double a, double b) {
    const double m = 0.5 * (a + b);
    return 16.0 * eps * (std::abs(U(x + m)) + std::abs(U(x - m))) *
           (std::pow(a, -two_s) - std::pow(b, -two_s)) / two_s;
  };
  const double R0 = lo;
  double R = R0;
  double tail = 0.0, tail_err = std::numeric_limits<double>::infinity();
  try {
    tail = tail_rule.integrate(far, R, std::numeric_limits<double>::infinity(), 1e-13, &tail_err);
  } catch (const std::exception&) {
    tail_err = std::numeric_limits<double>::infinity();
  }
  if (!(std::isfinite(tail) && C * tail_err <= 0.25 * tol)) {
    // Oscillating or slowly decaying far field: extend the panels and bound the rest.
    double bound_u = std::abs(ux);
    tail = 0.0;
    tail_err = 0.0;
    const double cap = 1e9;
    for (;;) {
      const double hi = 2.0 * R;
      tail += detail::adaptive_gauss_kronrod(far, R, hi, panel_tol, far_floor, 2.0, err_total);
      for (int i = 0; i <= 16; ++i) {
        const double r = R + (hi - R) * i / 16.0;
        bound_u = std::max({bound_u, std::abs(U(x + r)), std::abs(U(x - r))});
      }
      R = hi;
      const double rest = 2.0 * bound_u * std::pow(R, -two_s) / two_s;
      if (C * rest <= 0.25 * tol) {
        tail_err = rest;
        break;
      }
      if (R > cap) throw NonConvergence("continuous_op_oracle: far field does not decay fast enough");
    }
  }
  const double closed = 2.0 * ux * std::pow(R0, -two_s) / two_s;
  const double value = C * (inner + middle + closed - tail);
  const double est = C * (err_total + tail_err);
  if (!std::isfinite(value) || est > tol)
    throw NonConvergence("continuous_op_oracle: quadrature error estimate exceeds tolerance");
  return value;
}

// sum over lattice nodes outside the mesh of K(j - m) P(mh), for every mesh node j.
// Nodes within `extension` mesh lengths on each side go through one extended Toeplitz
// product, the rest through the continuous-index kernel integrated against P.
inline std::vector<double> exterior_contribution(const std::function<double(double)>& P, double s, const Mesh& mesh,
                                                 std::size_t extension = 4) {
  check_order(s);
  const std::size_t n = mesh.size();
  const double h = mesh.h();
  const std::size_t pad = extension * n;
  const Mesh wide(h, mesh.first_index() - static_cast<long>(pad), n + 2 * pad);
  std::vector<double> outside(wide.size(), 0.0);
  for (std::size_t i = 0; i < wide.size(); ++i)
    if (i < pad || i >= pad + n) outside[i] = P(wide.node(i));
  const auto k = kernel_weights(s, h, wide.size() - 1);
  SymmetricToeplitz op(k.w);
  const auto full = op.apply(outside);
  std::vector<double> ext(full.begin() + static_cast<std::ptrdiff_t>(pad),
                          full.begin() + static_cast<std::ptrdiff_t>(pad + n));

  const double C = fractional_laplacian_constant(s) * std::pow(h, -2.0 * s);
  auto w = [&](double r) { return -C * boost::math::tgamma_delta_ratio(r - s, 1.0 + 2.0 * s); };
  const double lo = static_cast<double>(wide.first_index()), hi = static_cast<double>(wide.last_index());
  static thread_local boost::math::quadrature::exp_sinh<double> tail_rule;
  const double inf = std::numeric_limits<double>::infinity();
  // Both tails, at lattice index j; by the midpoint rule the sum over m > hi is the
  // integral from hi + 1/2, and likewise on the left.
  auto tails = [&](double j) {
    auto right = [&](double u) { return w(hi - j + 0.5 + u) * P(h * (hi + 0.5 + u)); };
    auto left = [&](double u) { return w(j - lo + 0.5 + u) * P(h * (lo - 0.5 - u)); };
    return tail_rule.integrate(right, 0.0, inf, 1e-13) + tail_rule.integrate(left, 0.0, inf, 1e-13);
  };
  // Smooth in j (the nearest far node is four mesh lengths away), so sample at Chebyshev
  // points and interpolate barycentrically.
  const double j0 = static_cast<double>(mesh.first_index()), j1 = static_cast<double>(mesh.last_index());
  constexpr int kCheb = 24;
  std::vector<double> cj(kCheb + 1), cv(kCheb + 1);
  for (int k = 0; k <= kCheb; ++k) {
    cj[k] = 0.5 * (j0 + j1) + 0.5 * (j1 - j0) * std::cos(std::numbers::pi * k / kCheb);
    cv[k] = tails(cj[k]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double j = j0 + static_cast<double>(i);
    double num = 0.0, den = 0.0;
    bool hit = false;
    for (int k = 0; k <= kCheb && !hit; ++k) {
      if (j == cj[k]) {
        ext[i] += cv[k];
        hit = true;
        break;
      }
      const double c = (k == 0 || k == kCheb ? 0.5 : 1.0) * (k % 2 ? -1.0 : 1.0) / (j - cj[k]);
      num += c * cv[k];
      den += c;
    }
    if (!hit) ext[i] += num / den;
  }
  return ext;
}

// max over window nodes of |(-Delta_h)^s R_h U - (-Delta)^s U|, the continuous term from
// `exact` when supplied, else from the quadrature oracle. With `with_exterior` the discrete
// operator sees U on the whole lattice rather than its zero extension off the mesh.
inline double consistency_error(const std::function<double(double)>& U,
                                const std::optional<std::function<double(double)>>& exact, double s,
                                const Mesh& mesh, double window_lo, double window_hi,
                                double oracle_tol = 1e-11, bool with_exterior = false) {
  std::vector<double> vals(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) vals[i] = U(mesh.node(i));
  GridFunction u(mesh, std::move(vals));
  DiscreteFractionalLaplacian op(s, mesh);
  GridFunction du = op.apply(u);
  if (with_exterior) {
    const auto ext = exterior_contribution(U, s, mesh);
    for (std::size_t i = 0; i < du.size(); ++i) du[i] += ext[i];
  }
  const auto [lo, hi] = mesh.window(window_lo, window_hi);
  double worst = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double x = mesh.node(i);
    const double ref = exact ? (*exact)(x) : continuous_op_oracle(U, s, x, oracle_tol);
    worst = std::max(worst, std::abs(du[i] - ref));
  }
  return worst;
}

}  // namespace fracdiff
