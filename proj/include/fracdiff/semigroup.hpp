#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "mesh.hpp"
#include "special_functions.hpp"
#include "toeplitz.hpp"

namespace fracdiff {

// L[n] = L^s_n(t / h^{2s}) for n = 0..N, even in n.
struct SemigroupKernel {
  double s = 0.5;
  double h = 1.0;
  double t = 0.0;
  std::vector<double> L;

  std::size_t half_width() const { return L.empty() ? 0 : L.size() - 1; }
  // L[0] + 2 sum_{n>=1} L[n]
  double mass() const {
    double m = 0.0;
    for (std::size_t n = L.size(); n-- > 1;) m += L[n];
    return L.empty() ? 0.0 : L[0] + 2.0 * m;
  }
};

namespace detail {

// Fourier coefficients of (4 sin^2(theta/2))^beta for n = 0..N; beta > -1/2.
// Exact zeros past n = beta when beta is an integer.
inline std::vector<double> power_symbol_coefficients(double beta, std::size_t N) {
  std::vector<double> c(N + 1, 0.0);
  if (beta == 0.0) {
    c[0] = 1.0;
    return c;
  }
  c[0] = std::exp(log_gamma(2.0 * beta + 1.0) - 2.0 * log_gamma(1.0 + beta));
  for (std::size_t n = 0; n < N; ++n) {
    const double nn = static_cast<double>(n);
    c[n + 1] = c[n] * (nn - beta) / (nn + 1.0 + beta);
  }
  return c;
}

// Fourier coefficients (1/2pi) int g(sigma(theta)) e^{-i n theta} dtheta, n = 0..N, with
// sigma = (4 sin^2(theta/2))^s. g is smooth in sigma, but sigma has a |theta|^{2s} cusp at 0,
// so the leading Taylor terms sum_j taylor[j] sigma^j are subtracted pointwise and added
// back exactly; the remainder goes through the trapezoid rule (one real FFT), doubling
// the node count until no coefficient moves by more than tol.
inline std::vector<double> symbol_kernel(const std::function<double(double)>& g,
                                         const std::vector<double>& taylor, double s, std::size_t N,
                                         double tol = 1e-12, std::size_t max_nodes = std::size_t{1} << 22) {
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("symbol_kernel: s must lie in (0,1]");
  const double sigma_max = std::pow(4.0, s);
  // Terms past the first two are kept only while the subtracted polynomial stays small
  // at sigma_max (its cancellation costs accuracy) and the remainder is not yet smooth.
  std::size_t m = std::min<std::size_t>(taylor.size(), 2);
  double size = 0.0;
  for (std::size_t j = 0; j < m; ++j) size += std::abs(taylor[j]) * std::pow(sigma_max, static_cast<double>(j));
  while (m < taylor.size() && 2.0 * s * static_cast<double>(m) < 5.0) {
    const double next = std::abs(taylor[m]) * std::pow(sigma_max, static_cast<double>(m));
    if (size + next > 1e2) break;
    size += next;
    ++m;
  }
  std::vector<double> out(N + 1, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    if (taylor[j] == 0.0) continue;
    const auto c = power_symbol_coefficients(s * static_cast<double>(j), N);
    for (std::size_t n = 0; n <= N; ++n) out[n] += taylor[j] * c[n];
  }

  auto remainder_coefficients = [&](std::size_t M) {
    RealFft fft(M);
    FftwBuffer in(sizeof(double) * M);
    FftwBuffer spec(sizeof(fftw_complex) * (M / 2 + 1));
    double* r = in.real();
    for (std::size_t k = 0; k < M; ++k) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(M);
      const double half = std::sin(0.5 * theta);
      const double sigma = std::pow(4.0 * half * half, s);
      double poly = 0.0;
      for (std::size_t j = m; j-- > 0;) poly = poly * sigma + taylor[j];
      r[k] = g(sigma) - poly;
    }
    fft.forward(r, spec.complex());
    std::vector<double> coef(N + 1);
    for (std::size_t n = 0; n <= N; ++n) coef[n] = spec.complex()[n][0] / static_cast<double>(M);
    return coef;
  };

  std::size_t M = next_pow2(std::max<std::size_t>(4 * (N + 1), 256));
  auto prev = remainder_coefficients(M);
  for (;;) {
    if (2 * M > max_nodes)
      throw NonConvergence("symbol_kernel: trapezoid rule did not settle within the node budget");
    M *= 2;
    auto cur = remainder_coefficients(M);
    double change = 0.0;
    for (std::size_t n = 0; n <= N; ++n) change = std::max(change, std::abs(cur[n] - prev[n]));
    prev = std::move(cur);
    if (change <= tol) break;
  }
  for (std::size_t n = 0; n <= N; ++n) out[n] += prev[n];
  return out;
}

inline GridFunction apply_even_kernel(const std::vector<double>& kernel, const GridFunction& u) {
  if (kernel.size() < u.size()) throw std::invalid_argument("kernel half width shorter than the mesh");
  std::vector<double> col(kernel.begin(), kernel.begin() + static_cast<std::ptrdiff_t>(u.size()));
  SymmetricToeplitz op(std::move(col));
  GridFunction out(u.mesh());
  op.apply(u.values(), out.values());
  return out;
}

inline void add_scaled(double& acc, double c, double x) { acc += c * x; }

inline void add_scaled(std::vector<double>& acc, double c, const std::vector<double>& x) {
  if (acc.empty()) acc.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += c * x[i];
}

inline void add_scaled(GridFunction& acc, double c, const GridFunction& x) {
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += c * x[i];
}

}  // namespace detail

// e^{t Delta_h} u with the kernel e^{-2t/h^2} I_n(2t/h^2), dropped where it is below 1e-16.
inline GridFunction heat_semigroup_apply(const GridFunction& u, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("heat_semigroup_apply: t must be >= 0");
  if (t == 0.0) return u;
  const double h = u.mesh().h();
  auto k = bessel_i_scaled_sequence(2.0 * t / (h * h), u.size() - 1);
  for (std::size_t n = 1; n < k.size(); ++n)
    if (k[n] < 1e-16) {
      std::fill(k.begin() + static_cast<std::ptrdiff_t>(n), k.end(), 0.0);
      break;
    }
  return detail::apply_even_kernel(k, u);
}

// L^s_n(t/h^{2s}) = (1/2pi) int exp(-(t/h^{2s}) (4 sin^2(theta/2))^s) e^{-i n theta} dtheta.
// s = 1 is the heat kernel.
inline SemigroupKernel frac_semigroup_kernel(double s, double h, double t, std::size_t N, double tol = 1e-12) {
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("frac_semigroup_kernel: s must lie in (0,1]");
  if (!(h > 0.0)) throw std::invalid_argument("frac_semigroup_kernel: h must be positive");
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("frac_semigroup_kernel: t must be >= 0");
  SemigroupKernel k{s, h, t, std::vector<double>(N + 1, 0.0)};
  if (t == 0.0) {
    k.L[0] = 1.0;
    return k;
  }
  const double tp = t / std::pow(h, 2.0 * s);
  std::vector<double> taylor(12);
  double term = 1.0;
  for (std::size_t j = 0; j < taylor.size(); ++j) {
    taylor[j] = term;
    term *= -tp / static_cast<double>(j + 1);
  }
  k.L = detail::symbol_kernel([tp](double sigma) { return std::exp(-tp * sigma); }, taylor, s, N, tol);
  return k;
}

inline GridFunction apply(const SemigroupKernel& k, const GridFunction& u) {
  if (k.h != u.mesh().h()) throw std::invalid_argument("apply: kernel and mesh spacing differ");
  return detail::apply_even_kernel(k.L, u);
}

inline GridFunction frac_semigroup_apply(const GridFunction& u, double s, double t) {
  if (t == 0.0) return u;
  return apply(frac_semigroup_kernel(s, u.mesh().h(), t, u.size() - 1), u);
}

// Gauss-Legendre panels on [0, tau_max] for integrals against the Wright density.
// tau_max is where Phi(tau)(1 + tau) first drops below 1e-14; panels double until the
// first three moments settle.
class SubordinationQuadrature {
 public:
  explicit SubordinationQuadrature(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("SubordinationQuadrature: alpha must lie in (0,1)");
    const WrightParams p{alpha};
    double step = 0.25;
    tau_max_ = step;
    while (wright_phi(p, tau_max_) * (1.0 + tau_max_) >= 1e-14) {
      tau_max_ += step;
      if (tau_max_ > 8.0 * step) step *= 2.0;
      if (tau_max_ > 1e4) throw NonConvergence("SubordinationQuadrature: density does not decay");
    }
    std::vector<double> previous;
    for (std::size_t panels = 4; panels <= 4096; panels *= 2) {
      build(panels);
      std::vector<double> mom{moment(0), moment(1), moment(2)};
      if (!previous.empty()) {
        double change = 0.0;
        for (int j = 0; j < 3; ++j) change = std::max(change, std::abs(mom[j] - previous[j]) / mom[j]);
        if (change <= 1e-13) {
          for (int j = 0; j < 3; ++j) {
            const double exact = std::exp(log_gamma(j + 1.0) - log_gamma(alpha * j + 1.0));
            if (std::abs(mom[j] - exact) > 1e-8)
              throw NonConvergence("SubordinationQuadrature: moments disagree with their closed form");
          }
          return;
        }
      }
      previous = std::move(mom);
    }
    throw NonConvergence("SubordinationQuadrature: moments did not settle");
  }

  double alpha() const { return alpha_; }
  double tau_max() const { return tau_max_; }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  // Phi_alpha at the nodes
  const std::vector<double>& density() const { return density_; }
  std::size_t size() const { return nodes_.size(); }

  // sum_k w_k Phi(tau_k) tau_k^p
  double moment(double p) const {
    double m = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) m += weights_[k] * density_[k] * std::pow(nodes_[k], p);
    return m;
  }

 private:
  void build(std::size_t panels) {
    using rule = boost::math::quadrature::gauss<double, 16>;
    const auto& x = rule::abscissa();
    const auto& w = rule::weights();
    nodes_.clear();
    weights_.clear();
    density_.clear();
    const double width = tau_max_ / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
      const double mid = width * (static_cast<double>(p) + 0.5);
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (int sign : {-1, 1}) {
          if (x[i] == 0.0 && sign > 0) continue;
          nodes_.push_back(mid + sign * 0.5 * width * x[i]);
          weights_.push_back(0.5 * width * w[i]);
        }
      }
    }
    density_.resize(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) density_[k] = wright_phi(WrightParams{alpha_}, nodes_[k]);
  }

  double alpha_;
  double tau_max_ = 0.0;
  std::vector<double> nodes_, weights_, density_;
};

// sum_k w_k Phi(tau_k) T(tau_k t^alpha): the S operator for any semigroup-like callable,
// scalar or grid valued.
template <class Value, class Semigroup>
Value subordinate_S(const SubordinationQuadrature& q, double t, Semigroup&& T) {
  Value acc{};
  const double ta = std::pow(t, q.alpha());
  for (std::size_t k = 0; k < q.size(); ++k)
    detail::add_scaled(acc, q.weights()[k] * q.density()[k], T(q.nodes()[k] * ta));
  return acc;
}

// alpha t^{alpha-1} sum_k w_k tau_k Phi(tau_k) T(tau_k t^alpha)
template <class Value, class Semigroup>
Value subordinate_P(const SubordinationQuadrature& q, double t, Semigroup&& T) {
  if (!(t > 0.0)) throw std::invalid_argument("subordinate_P: t must be positive");
  Value acc{};
  const double a = q.alpha();
  const double ta = std::pow(t, a);
  const double pre = a * std::pow(t, a - 1.0);
  for (std::size_t k = 0; k < q.size(); ++k)
    detail::add_scaled(acc, pre * q.weights()[k] * q.density()[k] * q.nodes()[k], T(q.nodes()[k] * ta));
  return acc;
}

// Grid kernels of S^alpha_h(t) and P^alpha_h(t), each the Wright-weighted sum of the
// fractional semigroup kernels folded into one symbol, so one FFT apply per use.
class SubordinatedOperator {
 public:
  enum class Part { S, P, both };

  SubordinatedOperator(const SubordinationQuadrature& q, double s, double h, double t, std::size_t N,
                       double tol = 1e-12, Part part = Part::both)
      : s_(s), h_(h), t_(t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("SubordinatedOperator: t must be >= 0");
    if (t == 0.0) {
      S_.assign(N + 1, 0.0);
      S_[0] = 1.0;
      return;
    }
    const double a = q.alpha();
    const double c = std::pow(t, a) / std::pow(h, 2.0 * s);
    const auto& tau = q.nodes();
    std::vector<double> mass(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) mass[k] = q.weights()[k] * q.density()[k];
    auto series = [&](double lead, int shift) {
      std::vector<double> taylor(12);
      double f = lead;
      for (std::size_t j = 0; j < taylor.size(); ++j) {
        taylor[j] = f * q.moment(static_cast<double>(j) + shift);
        f *= -c / static_cast<double>(j + 1);
      }
      return taylor;
    };
    auto g_S = [&](double sigma) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tau.size(); ++k) acc += mass[k] * std::exp(-c * tau[k] * sigma);
      return acc;
    };
    if (part != Part::P) S_ = detail::symbol_kernel(g_S, series(1.0, 0), s, N, tol);
    if (part == Part::S) return;
    const double pre = a * std::pow(t, a - 1.0);
    auto g_P = [&](double sigma) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tau.size(); ++k) acc += mass[k] * tau[k] * std::exp(-c * tau[k] * sigma);
      return pre * acc;
    };
    P_ = detail::symbol_kernel(g_P, series(pre, 1), s, N, tol);
  }

  double s() const { return s_; }
  double h() const { return h_; }
  double t() const { return t_; }
  const std::vector<double>& S_kernel() const {
    if (S_.empty()) throw std::logic_error("SubordinatedOperator: S kernel was not built");
    return S_;
  }
  const std::vector<double>& P_kernel() const {
    if (P_.empty()) throw std::logic_error("SubordinatedOperator: P kernel not built (or t = 0)");
    return P_;
  }

  GridFunction apply_S(const GridFunction& u) const {
    check(u);
    return detail::apply_even_kernel(S_kernel(), u);
  }
  GridFunction apply_P(const GridFunction& u) const {
    check(u);
    return detail::apply_even_kernel(P_kernel(), u);
  }

 private:
  void check(const GridFunction& u) const {
    if (u.mesh().h() != h_) throw std::invalid_argument("SubordinatedOperator: mesh spacing differs");
  }
  double s_, h_, t_;
  std::vector<double> S_, P_;
};

inline GridFunction subordinated_S_apply(const GridFunction& u, double s, double alpha, double t) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("subordinated_S_apply: alpha must lie in (0,1)");
  if (!(t >= 0.0)) throw std::invalid_argument("subordinated_S_apply: t must be >= 0");
  if (t == 0.0) return u;
  SubordinationQuadrature q(alpha);
  return SubordinatedOperator(q, s, u.mesh().h(), t, u.size() - 1).apply_S(u);
}

inline GridFunction subordinated_P_apply(const GridFunction& u, double s, double alpha, double t) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("subordinated_P_apply: alpha must lie in (0,1)");
  if (!(t > 0.0)) throw std::invalid_argument("subordinated_P_apply: t must be positive");
  SubordinationQuadrature q(alpha);
  return SubordinatedOperator(q, s, u.mesh().h(), t, u.size() - 1).apply_P(u);
}

}  // namespace fracdiff
