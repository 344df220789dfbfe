#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>


#include "evolution.hpp"
#include "frac_laplacian.hpp"
#include "mesh.hpp"
#include "special_functions.hpp"
#include "toeplitz.hpp"

namespace fracdiff {

enum class Smoothness { smooth_decaying, compact_nonsmooth };

// Scale of the Example 2 profile (1 - x^2)_+^s. `consistent` makes (-Delta)^s of the profile
// equal 1 on (-1, 1) in one dimension; `published` keeps the constant as printed, for which
// that identity fails.
enum class Example2Normalization { consistent, published };

// What the truncated problem assumes outside [a, b]: zero, or the exact solution, whose
// contribution is moved into the forcing.
enum class ExteriorTreatment { zero, exact };

// exact(t, x) = time_factor(t) profile(x) for both examples; forcing = d_t exact + (-Delta)^s exact - f(exact).
struct ManufacturedSolution {
  std::string name;
  double s = 0.5;
  std::function<double(double t, double x)> exact;
  std::function<double(double t, double x)> forcing;
  std::function<double(double x)> profile;
  std::function<double(double t)> time_factor;
  std::optional<std::pair<double, double>> support;  // empty: whole line
  Smoothness smoothness = Smoothness::smooth_decaying;
  std::optional<Nonlinearity> nonlinearity;
};

// (R_h F)(jh) = F(jh)
inline GridFunction restrict(const std::function<double(double)>& F, const Mesh& mesh) {
  std::vector<double> v(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    v[i] = F(mesh.node(i));
    if (!std::isfinite(v[i])) throw std::invalid_argument("restrict: non-finite sample");
  }
  return GridFunction(mesh, std::move(v));
}

// u = (1 + x^2)^{-(1/2 - s)} e^{-t}
inline ManufacturedSolution example1(double s) {
  check_order(s);
  if (std::abs(s - 0.5) < 1e-12) throw std::invalid_argument("example1: s = 1/2 gives a constant profile");
  const double c = std::pow(4.0, s) * std::tgamma(0.5 + s) * reciprocal_gamma(0.5 - s);
  ManufacturedSolution m;
  m.name = "example1";
  m.s = s;
  m.profile = [s](double x) { return std::pow(1.0 + x * x, -(0.5 - s)); };
  m.time_factor = [](double t) { return std::exp(-t); };
  m.exact = [s](double t, double x) { return std::pow(1.0 + x * x, -(0.5 - s)) * std::exp(-t); };
  m.forcing = [s, c](double t, double x) {
    const double r = 1.0 + x * x;
    return (-std::pow(r, -(0.5 - s)) + c * std::pow(r, -(0.5 + s))) * std::exp(-t);
  };
  m.smoothness = Smoothness::smooth_decaying;
  return m;
}

inline double example2_constant(double s, Example2Normalization norm) {
  return norm == Example2Normalization::consistent ? reciprocal_gamma(1.0 + 2.0 * s)
                                                   : std::pow(2.0, -2.0 * s) / std::pow(std::tgamma(1.0 + s), 2);
}

// u = c (1 - x^2)_+^s e^{-t}; forcing -u + e^{-t} on (-1, 1), zero elsewhere.
inline ManufacturedSolution example2(double s, Example2Normalization norm = Example2Normalization::consistent) {
  check_order(s);
  const double c = example2_constant(s, norm);
  ManufacturedSolution m;
  m.name = "example2";
  m.s = s;
  m.profile = [s, c](double x) { return std::abs(x) < 1.0 ? c * std::pow(1.0 - x * x, s) : 0.0; };
  m.time_factor = [](double t) { return std::exp(-t); };
  m.exact = [s, c](double t, double x) {
    return std::abs(x) < 1.0 ? c * std::pow(1.0 - x * x, s) * std::exp(-t) : 0.0;
  };
  m.forcing = [s, c](double t, double x) {
    if (!(std::abs(x) < 1.0)) return 0.0;
    return (1.0 - c * std::pow(1.0 - x * x, s)) * std::exp(-t);
  };
  m.support = std::make_pair(-1.0, 1.0);
  m.smoothness = Smoothness::compact_nonsmooth;
  return m;
}

// Same exact solution with f attached: the forcing loses f(exact).
inline ManufacturedSolution with_nonlinearity(ManufacturedSolution m, Nonlinearity nl) {
  auto base = m.forcing;
  auto exact = m.exact;
  auto f = nl.f;
  m.forcing = [base, exact, f](double t, double x) { return base(t, x) - f(exact(t, x)); };
  m.nonlinearity = std::move(nl);
  m.name += "+f";
  return m;
}

// Assembles the evolution problem on `mesh`. For alpha < 1 the forcing is kept as is, so the
// manufactured exact solution is no longer the solution; such runs need a reference solve.
inline EvolutionProblem to_evolution_problem(const ManufacturedSolution& m, const Mesh& mesh, double alpha,
                                             ExteriorTreatment exterior = ExteriorTreatment::exact, double T = 1.0) {
  bool pin = false;
  if (m.support) {
    const auto [lo, hi] = *m.support;
    if (std::abs(mesh.a() - lo) > 1e-9 * std::max(1.0, std::abs(lo)) ||
        std::abs(mesh.b() - hi) > 1e-9 * std::max(1.0, std::abs(hi)))
      throw std::invalid_argument(m.name + ": the mesh must span the support [" + format_real(lo) + ", " +
                                  format_real(hi) + "]");
    pin = true;
  }
  EvolutionProblem p(alpha, m.s, restrict(m.profile, mesh), T);
  if (pin) {
    p.u0[0] = 0.0;
    p.u0[p.u0.size() - 1] = 0.0;
  }
  p.pin_endpoints = pin;
  p.nonlinearity = m.nonlinearity;
  std::vector<double> x(mesh.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = mesh.node(i);
  auto forcing = m.forcing;
  if (exterior == ExteriorTreatment::exact && !m.support) {
    if (!m.time_factor || !m.profile)
      throw std::invalid_argument("to_evolution_problem: exact exterior needs a separable solution");
    auto ext = exterior_contribution(m.profile, m.s, mesh);
    auto tf = m.time_factor;
    p.forcing = [forcing, tf, x, ext = std::move(ext)](double t, std::size_t i) {
      return forcing(t, x[i]) - tf(t) * ext[i];
    };
  } else {
    p.forcing = [forcing, x](double t, std::size_t i) { return forcing(t, x[i]); };
  }
  p.validate();
  return p;
}

}  // namespace fracdiff
