#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/sin_pi.hpp>

namespace fracdiff {

// Raised when a series, recurrence or quadrature cannot reach its tolerance.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MLParams {
  double alpha = 1.0;
  double beta = 1.0;
};

struct WrightParams {
  double alpha = 0.5;
};

inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw std::domain_error("log_gamma: argument must be positive and finite");
  return boost::math::lgamma(x);
}

// 1/Gamma(x) for any real x, zero at the poles.
inline double reciprocal_gamma(double x) {
  if (x <= 0.0 && x == std::nearbyint(x)) return 0.0;
  if (x > 0.0) {
    if (x < 170.0) return 1.0 / boost::math::tgamma(x);
    return std::exp(-boost::math::lgamma(x));
  }
  return boost::math::sin_pi(x) * boost::math::tgamma(1.0 - x) / std::numbers::pi;
}

// e^{-x} I_k(x) for k = 0..max_order by Miller's backward recurrence, normalised with
// I_0 + 2 sum_{k>=1} I_k = e^x.
inline std::vector<double> bessel_i_scaled_sequence(double x, std::size_t max_order) {
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::domain_error("bessel_i_scaled: x must be non-negative and finite");
  std::vector<double> out(max_order + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const auto start = static_cast<std::size_t>(
      static_cast<double>(max_order) + 30.0 + 10.0 * std::sqrt(x) +
      std::sqrt(200.0 * static_cast<double>(max_order + 1)));
  const double two_over_x = 2.0 / x;
  double above = 0.0;
  double cur = 1e-30;
  double sum = 0.0;
  for (std::size_t k = start; k > 0; --k) {
    // cur holds I_k, above holds I_{k+1}
    if (k <= max_order) out[k] = cur;
    sum += 2.0 * cur;
    const double below = static_cast<double>(k) * two_over_x * cur + above;
    above = cur;
    cur = below;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      above *= 1e-250;
      sum *= 1e-250;
      for (std::size_t j = k; j <= max_order; ++j) out[j] *= 1e-250;
    }
  }
  out[0] = cur;
  sum += cur;
  for (double& v : out) v /= sum;
  return out;
}

inline double bessel_i_scaled(long n, double x) {
  const auto order = static_cast<std::size_t>(n < 0 ? -n : n);
  return bessel_i_scaled_sequence(x, order)[order];
}

namespace detail {

struct SeriesSum {
  double sum = 0.0;
  double largest = 0.0;
  std::size_t terms = 0;
};

inline SeriesSum mittag_leffler_taylor(double alpha, double beta, double z) {
  constexpr std::size_t kMaxTerms = 20000;
  SeriesSum r;
  if (z == 0.0) {
    r.sum = reciprocal_gamma(beta);
    r.largest = std::abs(r.sum);
    r.terms = 1;
    return r;
  }
  const double log_abs_z = std::log(std::abs(z));
  double previous = std::numeric_limits<double>::infinity();
  int quiet = 0;
  for (std::size_t k = 0; k < kMaxTerms; ++k) {
    const double arg = alpha * static_cast<double>(k) + beta;
    double term;
    if (arg < 20.0) {
      term = std::pow(z, static_cast<double>(k)) * reciprocal_gamma(arg);
    } else {
      term = std::exp(static_cast<double>(k) * log_abs_z - boost::math::lgamma(arg));
      if (z < 0.0 && (k % 2 == 1)) term = -term;
    }
    r.sum += term;
    r.largest = std::max(r.largest, std::abs(term));
    r.terms = k + 1;
    const double mag = std::abs(term);
    if (arg > 2.0 && mag <= previous && mag <= 1e-17 * std::abs(r.sum)) {
      if (++quiet >= 3) return r;
    } else {
      quiet = 0;
    }
    previous = mag;
  }
  throw NonConvergence("mittag_leffler: Taylor series did not converge");
}

// Real-line integral representation for z < 0, 0 < alpha < 1, 0 < beta < 1 + alpha.
inline double mittag_leffler_integral(double alpha, double beta, double z) {
  const double pi = std::numbers::pi;
  const double s1 = std::sin(pi * (1.0 - beta));
  const double s2 = std::sin(pi * (1.0 - beta + alpha));
  const double c = std::cos(alpha * pi);
  const double expo = (1.0 - beta) / alpha;
  auto f = [&](double chi) {
    if (chi <= 0.0) return 0.0;
    const double damp = std::exp(expo * std::log(chi) - std::pow(chi, 1.0 / alpha));
    const double den = chi * chi - 2.0 * chi * z * c + z * z;
    return damp * (chi * s1 - z * s2) / den;
  };
  static thread_local boost::math::quadrature::tanh_sinh<double> finite;
  static thread_local boost::math::quadrature::exp_sinh<double> tail;
  const double split = -z;
  double e1 = 0.0, e2 = 0.0;
  const double i1 = finite.integrate(f, 0.0, split, 1e-14, &e1);
  const double i2 = tail.integrate(f, split, std::numeric_limits<double>::infinity(), 1e-14, &e2);
  const double value = (i1 + i2) / (alpha * pi);
  const double err = (e1 + e2) / (alpha * pi);
  if (!(err <= 1e-11 * std::max(std::abs(value), 1e-300) + 1e-15))
    throw NonConvergence("mittag_leffler: integral representation did not converge");
  return value;
}

}  // namespace detail

// Two-parameter Mittag-Leffler function for real arguments.
// Taylor series on z >= -1; below that the real integral representation when
// 0 < alpha < 1 and 0 < beta < 1 + alpha, else Taylor with a cancellation check.
// E_{1,1} is exp.
inline double mittag_leffler(const MLParams& p, double z) {
  if (!(p.alpha > 0.0 && p.alpha <= 2.0))
    throw std::domain_error("mittag_leffler: alpha must lie in (0, 2]");
  if (!std::isfinite(p.beta) || !std::isfinite(z))
    throw std::domain_error("mittag_leffler: non-finite argument");
  if (p.alpha == 1.0 && p.beta == 1.0) return std::exp(z);
  if (z < -1.0 && p.alpha < 1.0 && p.beta > 0.0 && p.beta < 1.0 + p.alpha)
    return detail::mittag_leffler_integral(p.alpha, p.beta, z);
  const auto r = detail::mittag_leffler_taylor(p.alpha, p.beta, z);
  const double rounding = 4.0 * std::numeric_limits<double>::epsilon() * r.largest *
                          std::sqrt(static_cast<double>(r.terms));
  if (rounding > 1e-10 * std::abs(r.sum))
    throw NonConvergence("mittag_leffler: cancellation in the Taylor series exceeds tolerance");
  return r.sum;
}

namespace detail {

inline double wright_integral(double alpha, double x) {
  const double pi = std::numbers::pi;
  const double beta = 1.0 - alpha;
  const double log_y = std::log(x) / beta;
  // log A(phi); A increases from a finite value at 0 to infinity at pi
  auto log_A = [&](double phi) {
    return (alpha * std::log(std::sin(alpha * phi)) + beta * std::log(std::sin(beta * phi)) -
            std::log(std::sin(phi))) / beta;
  };
  auto f = [&](double phi) {
    if (phi <= 0.0 || phi >= pi) return 0.0;
    const double la = log_A(phi);
    const double ay = std::exp(la + log_y);
    if (!(ay < 1e300)) return 0.0;
    return std::exp(la - ay);
  };
  // The integrand peaks where A(phi) y = 1; near alpha = 1 the peak is very narrow, so
  // split there and let tanh-sinh cluster nodes on both sides of it.
  double split = -1.0;
  if (log_A(1e-12) + log_y < 0.0) {
    double lo = 1e-12, hi = pi * (1.0 - 1e-15);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
      const double mid = 0.5 * (lo + hi);
      (log_A(mid) + log_y < 0.0 ? lo : hi) = mid;
    }
    split = 0.5 * (lo + hi);
  }
  static thread_local boost::math::quadrature::tanh_sinh<double> rule;
  double integral = 0.0, err = 0.0, l1 = 0.0;
  auto piece = [&](double a, double b) {
    double e = 0.0, l = 0.0;
    integral += rule.integrate(f, a, b, 1e-13, &e, &l);
    err += e;
    l1 += l;
  };
  if (split > 0.0) {
    piece(0.0, split);
    piece(split, pi);
  } else {
    piece(0.0, pi);
  }
  if (!(err <= 1e-10 * l1 + 1e-250))
    throw NonConvergence("wright_phi: integral representation did not converge");
  if (!(integral > 0.0)) return 0.0;
  return std::exp(alpha / beta * std::log(x) + std::log(integral)) / (beta * pi);
}

}  // namespace detail

// Wright-type subordination density on [0, inf):
//   Phi_a(x) = (1/pi) sum_k (-x)^k / k! Gamma(a(k+1)) sin(pi a (k+1)),
// a probability density with moments Gamma(p+1)/Gamma(a p + 1).
// The series is used while its cancellation stays mild; past that an integral
// representation over (0, pi) takes over, so any x >= 0 is accepted.
inline double wright_phi(const WrightParams& p, double x) {
  const double alpha = p.alpha;
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("wright_phi: alpha must lie in (0, 1)");
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::domain_error("wright_phi: x must be non-negative and finite");
  if (x == 0.0) return reciprocal_gamma(1.0 - alpha);
  const double log_x = std::log(x);
  // Far tail: Phi decays like exp(-(1 - alpha) alpha^{alpha/(1-alpha)} x^{1/(1-alpha)}),
  // times a power of x that cannot lift it back above the underflow threshold.
  const double decay = (1.0 - alpha) * std::exp((alpha * std::log(alpha) + log_x) / (1.0 - alpha));
  if (decay > 800.0) return 0.0;

  constexpr std::size_t kMaxTerms = 5000;
  double sum = 0.0;
  double largest = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  double log_factorial = 0.0;
  int quiet = 0;
  bool converged = false;
  for (std::size_t k = 0; k < kMaxTerms; ++k) {
    const double kk = static_cast<double>(k);
    if (k > 0) log_factorial += std::log(kk);
    const double log_mag = kk * log_x - log_factorial + boost::math::lgamma(alpha * (kk + 1.0));
    if (log_mag > 600.0) break;
    const double mag = std::exp(log_mag);
    const double term =
        (k % 2 == 0 ? 1.0 : -1.0) * mag * boost::math::sin_pi(alpha * (kk + 1.0));
    sum += term;
    largest = std::max(largest, mag);
    if (mag <= previous && mag <= 1e-17 * std::abs(sum)) {
      if (++quiet >= 3) {
        converged = true;
        break;
      }
    } else {
      quiet = 0;
    }
    previous = mag;
  }
  if (converged && largest <= 1e2 * std::abs(sum)) return std::max(sum / std::numbers::pi, 0.0);
  return detail::wright_integral(alpha, x);
}

}  // namespace fracdiff
