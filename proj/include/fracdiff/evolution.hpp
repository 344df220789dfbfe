#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "frac_laplacian.hpp"
#include "mesh.hpp"
#include "semigroup.hpp"
#include "special_functions.hpp"

namespace fracdiff {

// f with f(0) = 0 and its derivative; lipschitz_bound is the radius/constant M on which
// |f(a) - f(b)| <= M |a - b| is expected to hold.
struct Nonlinearity {
  std::function<double(double)> f;
  std::function<double(double)> df;
  double lipschitz_bound = 1.0;
};

enum class Stepper { backward_euler, l1_caputo, mild_reference };

inline std::string to_string(Stepper s) {
  switch (s) {
    case Stepper::backward_euler: return "backward_euler";
    case Stepper::l1_caputo: return "l1_caputo";
    case Stepper::mild_reference: return "mild_reference";
  }
  return "unknown";
}

inline Stepper parse_stepper(const std::string& name) {
  if (name == "backward_euler") return Stepper::backward_euler;
  if (name == "l1_caputo") return Stepper::l1_caputo;
  if (name == "mild_reference") return Stepper::mild_reference;
  throw std::invalid_argument("unknown stepper '" + name + "'");
}

// D^alpha u + (-Delta_h)^s u = forcing + f(u) on the mesh, zero outside it.
// With pin_endpoints the first and last node are held at zero.
struct EvolutionProblem {
  double alpha = 1.0;
  double s = 0.5;
  Mesh mesh;
  GridFunction u0;
  std::function<double(double t, std::size_t node)> forcing;  // empty means zero
  std::optional<Nonlinearity> nonlinearity;
  double T = 1.0;
  bool pin_endpoints = false;

  EvolutionProblem(double alpha_, double s_, GridFunction u0_, double T_)
      : alpha(alpha_), s(s_), mesh(u0_.mesh()), u0(std::move(u0_)), T(T_) {}

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("EvolutionProblem: alpha must lie in (0,1]");
    check_order(s);
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("EvolutionProblem: T must be positive");
    if (!(u0.mesh() == mesh)) throw std::invalid_argument("EvolutionProblem: u0 is not on the mesh");
    if (pin_endpoints && (u0[0] != 0.0 || u0[u0.size() - 1] != 0.0))
      throw std::invalid_argument("EvolutionProblem: pinned endpoints need zero initial values");
    if (nonlinearity) {
      if (!nonlinearity->f || !nonlinearity->df)
        throw std::invalid_argument("EvolutionProblem: nonlinearity needs f and df");
      if (std::abs(nonlinearity->f(0.0)) > 1e-14) throw std::invalid_argument("EvolutionProblem: f(0) must be 0");
    }
  }
};

struct SchemeConfig {
  Stepper stepper = Stepper::backward_euler;
  double dt = 1e-3;
  double newton_tol = 1e-10;
  int newton_max_iter = 20;
  double linear_solver_tol = 1e-10;
  std::size_t cg_max_iter = 10000;
  int mild_gauss_points = 4;
  bool store_full = false;
  std::vector<double> snapshot_times;
};

struct StepStats {
  std::size_t step = 0;
  double t = 0.0;
  int newton_iters = 0;
  std::size_t cg_iters = 0;
  double residual = 0.0;  // sup norm of the implicit-equation residual relative to its right side
};

struct StepResult {
  GridFunction u;
  StepStats stats;
};

// Stored states: every step with store_full, otherwise t = 0, requested snapshots and T.
struct Trajectory {
  std::vector<double> times;
  std::vector<GridFunction> states;
  double running_sup = 0.0;  // max over all steps of the sup norm
  std::vector<StepStats> log;
};

using StepObserver = std::function<void(std::size_t step, double t, const GridFunction& u)>;

inline std::size_t step_count(double T, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  const double n = std::round(T / dt);
  if (n < 1.0 || std::abs(n * dt - T) > 1e-9 * T) throw std::invalid_argument("dt must divide T");
  return static_cast<std::size_t>(n);
}

// b_k = ((k+1)^{1-alpha} - k^{1-alpha}) dt^{-alpha} / Gamma(2-alpha), k = 0..n-1.
inline std::vector<double> caputo_l1_weights(double alpha, std::size_t n_steps, double dt) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("caputo_l1_weights: alpha must lie in (0,1)");
  if (!(dt > 0.0)) throw std::invalid_argument("caputo_l1_weights: dt must be positive");
  const double scale = std::pow(dt, -alpha) * reciprocal_gamma(2.0 - alpha);
  const double e = 1.0 - alpha;
  std::vector<double> b(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double kk = static_cast<double>(k);
    b[k] = (std::pow(kk + 1.0, e) - std::pow(kk, e)) * scale;
  }
  return b;
}

struct CgResult {
  std::size_t iterations = 0;
  double residual = 0.0;  // true residual, sup norm relative to |b|_inf
};

// Conjugate gradients for a symmetric positive definite operator; stops on the sup norm
// of the residual relative to |b|_inf, confirmed against a freshly computed residual.
inline CgResult conjugate_gradient(const std::function<void(std::span<const double>, std::span<double>)>& op,
                                   std::span<const double> b, std::span<double> x, double tol,
                                   std::size_t max_iter) {
  const std::size_t n = b.size();
  auto sup = [](std::span<const double> v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  const double bnorm = sup(b);
  CgResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return res;
  }
  std::vector<double> r(n), p(n), q(n);
  auto true_residual = [&] {
    op(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  };
  true_residual();
  for (;;) {
    if (sup(r) <= tol * bnorm) break;
    p = r;
    double rr = 0.0;
    for (double e : r) rr += e * e;
    bool restart = false;
    while (res.iterations < max_iter) {
      op(p, q);
      double pq = 0.0;
      for (std::size_t i = 0; i < n; ++i) pq += p[i] * q[i];
      if (!(pq > 0.0)) throw NonConvergence("conjugate_gradient: operator is not positive definite");
      const double a = rr / pq;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += a * p[i];
        r[i] -= a * q[i];
      }
      ++res.iterations;
      if (sup(r) <= tol * bnorm) {
        restart = true;
        break;
      }
      double rr_new = 0.0;
      for (double e : r) rr_new += e * e;
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    if (!restart) throw NonConvergence("conjugate_gradient: iteration limit reached");
    true_residual();
  }
  res.residual = sup(r) / bnorm;
  return res;
}

namespace detail {

// Solves u + tau ((-Delta_h)^s u - f(u)) = rhs on the active nodes by Newton (damped by
// halving when the residual grows) with CG for the linear systems.
class ImplicitSolver {
 public:
  ImplicitSolver(const EvolutionProblem& p, const SchemeConfig& cfg)
      : cfg_(cfg),
        nl_(p.nonlinearity),
        offset_(p.pin_endpoints ? 1 : 0),
        active_(p.mesh.size() - 2 * offset_),
        op_(p.s, p.pin_endpoints ? p.mesh.sub_mesh(1, p.mesh.size() - 2) : p.mesh) {}

  std::size_t offset() const { return offset_; }
  std::size_t active() const { return active_; }
  const DiscreteFractionalLaplacian& laplacian() const { return op_; }

  // u holds the initial guess on entry and the solution on exit (active nodes only).
  StepStats solve(double tau, std::span<const double> rhs, std::span<double> u) const {
    StepStats st;
    const std::size_t n = active_;
    std::vector<double> Au(n), g(n), delta(n), trial(n);
    auto sup = [](std::span<const double> v) {
      double m = 0.0;
      for (double e : v) m = std::max(m, std::abs(e));
      return m;
    };
    const double scale = std::max(sup(rhs), std::numeric_limits<double>::min());
    if (!nl_) {
      auto A = [&](std::span<const double> x, std::span<double> y) {
        op_.apply(x, y);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + tau * y[i];
      };
      const auto cg = conjugate_gradient(A, rhs, u, cfg_.linear_solver_tol, cfg_.cg_max_iter);
      st.newton_iters = 1;
      st.cg_iters = cg.iterations;
      st.residual = cg.residual;
      return st;
    }
    const auto& f = nl_->f;
    const auto& df = nl_->df;
    auto residual = [&](std::span<const double> x, std::span<double> out) {
      op_.apply(x, out);
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + tau * (out[i] - f(x[i])) - rhs[i];
      return sup(out);
    };
    double res = residual(u, g);
    std::vector<double> jd(n), minus_g(n);
    while (res > cfg_.newton_tol * scale) {
      if (st.newton_iters >= cfg_.newton_max_iter)
        throw NonConvergence("newton: no convergence within newton_max_iter iterations");
      ++st.newton_iters;
      for (std::size_t i = 0; i < n; ++i) {
        jd[i] = 1.0 - tau * df(u[i]);
        minus_g[i] = -g[i];
      }
      auto J = [&](std::span<const double> x, std::span<double> y) {
        op_.apply(x, y);
        for (std::size_t i = 0; i < n; ++i) y[i] = jd[i] * x[i] + tau * y[i];
      };
      std::fill(delta.begin(), delta.end(), 0.0);
      st.cg_iters += conjugate_gradient(J, minus_g, delta, cfg_.linear_solver_tol, cfg_.cg_max_iter).iterations;
      double lambda = 1.0;
      double trial_res = 0.0;
      for (int halvings = 0;; ++halvings) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + lambda * delta[i];
        trial_res = residual(trial, Au);
        if (trial_res < res || halvings >= 30) break;
        lambda *= 0.5;
      }
      if (!(trial_res < res) && trial_res > cfg_.newton_tol * scale)
        throw NonConvergence("newton: damping could not reduce the residual");
      std::copy(trial.begin(), trial.end(), u.begin());
      g.swap(Au);
      res = trial_res;
    }
    st.residual = res / scale;
    return st;
  }

 private:
  SchemeConfig cfg_;
  std::optional<Nonlinearity> nl_;
  std::size_t offset_;
  std::size_t active_;
  DiscreteFractionalLaplacian op_;
};

inline void sample_forcing(const EvolutionProblem& p, double t, std::size_t offset, std::span<double> out) {
  if (!p.forcing) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.forcing(t, i + offset);
}

// Gauss-Legendre nodes and weights on (0, 1).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_unit(int q) {
  if (q < 1) throw std::invalid_argument("gauss_legendre_unit: need at least one point");
  const auto zeros = boost::math::legendre_p_zeros<double>(q);
  std::vector<double> x, w;
  for (double z : zeros) {
    const double d = boost::math::legendre_p_prime(q, z);
    const double wt = 2.0 / ((1.0 - z * z) * d * d);
    x.push_back(0.5 * (1.0 - z));
    w.push_back(0.5 * wt);
    if (z != 0.0) {
      x.push_back(0.5 * (1.0 + z));
      w.push_back(0.5 * wt);
    }
  }
  return {x, w};
}

class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const SchemeConfig& cfg, const StepObserver& observer, std::size_t n_steps)
      : cfg_(cfg), observer_(observer), n_steps_(n_steps) {}

  void record(std::size_t step, double t, const GridFunction& u) {
    traj_.running_sup = std::max(traj_.running_sup, u.sup_norm());
    if (observer_) observer_(step, t, u);
    bool keep = cfg_.store_full || step == 0 || step == n_steps_;
    for (double ts : cfg_.snapshot_times)
      if (std::abs(ts - t) <= 0.5 * cfg_.dt) keep = true;
    if (keep) {
      traj_.times.push_back(t);
      traj_.states.push_back(u);
    }
  }
  void log(const StepStats& st) { traj_.log.push_back(st); }
  Trajectory take() { return std::move(traj_); }

 private:
  const SchemeConfig& cfg_;
  const StepObserver& observer_;
  std::size_t n_steps_;
  Trajectory traj_;
};

inline GridFunction embed(const GridFunction& like, std::size_t offset, std::span<const double> active) {
  GridFunction u(like.mesh());
  std::copy(active.begin(), active.end(), u.values().begin() + static_cast<std::ptrdiff_t>(offset));
  return u;
}

}  // namespace detail

// One implicit Euler step: (I + dt A_h) u - dt f(u) = u_prev + dt forcing(t_next).
inline StepResult step_backward_euler(const EvolutionProblem& p, const SchemeConfig& cfg, const GridFunction& u_prev,
                                      double t_next) {
  p.validate();
  if (p.alpha != 1.0) throw std::invalid_argument("step_backward_euler: needs alpha = 1");
  if (!(u_prev.mesh() == p.mesh)) throw std::invalid_argument("step_backward_euler: u_prev is not on the mesh");
  detail::ImplicitSolver solver(p, cfg);
  const std::size_t off = solver.offset(), n = solver.active();
  std::vector<double> rhs(n), u(u_prev.values().begin() + static_cast<std::ptrdiff_t>(off),
                                 u_prev.values().begin() + static_cast<std::ptrdiff_t>(off + n));
  detail::sample_forcing(p, t_next, off, rhs);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = u[i] + cfg.dt * rhs[i];
  StepResult r{GridFunction(p.mesh), {}};
  r.stats = solver.solve(cfg.dt, rhs, u);
  r.stats.t = t_next;
  r.u = detail::embed(p.u0, off, u);
  return r;
}

namespace detail {

inline Trajectory solve_implicit(const EvolutionProblem& p, const SchemeConfig& cfg, const StepObserver& observer) {
  const std::size_t steps = step_count(p.T, cfg.dt);
  const bool l1 = cfg.stepper == Stepper::l1_caputo;
  if (!l1 && p.alpha != 1.0) throw std::invalid_argument("backward_euler needs alpha = 1; use l1_caputo");
  if (l1 && !(p.alpha < 1.0)) throw std::invalid_argument("l1_caputo needs alpha < 1; use backward_euler");
  ImplicitSolver solver(p, cfg);
  const std::size_t off = solver.offset(), n = solver.active();
  std::vector<double> b;
  double tau = cfg.dt;
  if (l1) {
    b = caputo_l1_weights(p.alpha, steps, cfg.dt);
    tau = 1.0 / b[0];
  }
  TrajectoryRecorder rec(cfg, observer, steps);
  rec.record(0, 0.0, p.u0);
  std::vector<double> u(p.u0.values().begin() + static_cast<std::ptrdiff_t>(off),
                        p.u0.values().begin() + static_cast<std::ptrdiff_t>(off + n));
  std::vector<double> rhs(n), prev(n);
  std::vector<std::vector<double>> increments;  // L1 history d_j = u^j - u^{j-1}
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = cfg.dt * static_cast<double>(k);
    sample_forcing(p, t, off, rhs);
    prev = u;
    for (std::size_t i = 0; i < n; ++i) rhs[i] = u[i] + tau * rhs[i];
    if (l1) {
      // sum_{j=1}^{k-1} b_j d_{k-j}, scaled by tau = 1/b_0
      for (std::size_t j = 1; j < k; ++j) {
        const auto& d = increments[k - j - 1];
        const double c = tau * b[j];
        for (std::size_t i = 0; i < n; ++i) rhs[i] -= c * d[i];
      }
    }
    StepStats st = solver.solve(tau, rhs, u);
    st.step = k;
    st.t = t;
    rec.log(st);
    if (l1) {
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = u[i] - prev[i];
      increments.push_back(std::move(d));
    }
    rec.record(k, t, embed(p.u0, off, u));
  }
  return rec.take();
}

// u_{k+1} = T(dt) u_k + int_0^dt T(dt - r) F(t_k + r) dr, Gauss-Legendre in r.
inline Trajectory solve_mild_semigroup(const EvolutionProblem& p, const SchemeConfig& cfg,
                                       const StepObserver& observer) {
  const std::size_t steps = step_count(p.T, cfg.dt);
  const std::size_t off = p.pin_endpoints ? 1 : 0;
  const std::size_t n = p.mesh.size() - 2 * off;
  const double h = p.mesh.h();
  auto make = [&](double t) {
    const auto k = frac_semigroup_kernel(p.s, h, t, n - 1);
    return SymmetricToeplitz(k.L);
  };
  const auto [x, w] = gauss_legendre_unit(cfg.mild_gauss_points);
  const SymmetricToeplitz T0 = make(cfg.dt);
  std::vector<SymmetricToeplitz> Ti;
  for (double xi : x) Ti.push_back(make(cfg.dt * (1.0 - xi)));
  TrajectoryRecorder rec(cfg, observer, steps);
  rec.record(0, 0.0, p.u0);
  std::vector<double> u(p.u0.values().begin() + static_cast<std::ptrdiff_t>(off),
                        p.u0.values().begin() + static_cast<std::ptrdiff_t>(off + n));
  std::vector<double> next(n), f(n), tf(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double tk = cfg.dt * static_cast<double>(k);
    T0.apply(u, next);
    if (p.forcing)
      for (std::size_t i = 0; i < x.size(); ++i) {
        sample_forcing(p, tk + cfg.dt * x[i], off, f);
        Ti[i].apply(f, tf);
        for (std::size_t j = 0; j < n; ++j) next[j] += cfg.dt * w[i] * tf[j];
      }
    u.swap(next);
    StepStats st;
    st.step = k + 1;
    st.t = tk + cfg.dt;
    rec.log(st);
    rec.record(k + 1, st.t, embed(p.u0, off, u));
  }
  return rec.take();
}

// u(t_n) = S(t_n) u0 + int_0^{t_n} P(t_n - r) F(r) dr, panel by panel. On the panel next to
// t_n the substitution t_n - r = dt v^{1/alpha} absorbs the (t_n - r)^{alpha-1} singularity.
inline Trajectory solve_mild_subordinated(const EvolutionProblem& p, const SchemeConfig& cfg,
                                          const StepObserver& observer) {
  const std::size_t steps = step_count(p.T, cfg.dt);
  const std::size_t off = p.pin_endpoints ? 1 : 0;
  const std::size_t n = p.mesh.size() - 2 * off;
  const double h = p.mesh.h(), a = p.alpha, dt = cfg.dt;
  const SubordinationQuadrature quad(a);
  const auto [x, w] = gauss_legendre_unit(cfg.mild_gauss_points);
  const std::size_t q = x.size();
  std::map<std::pair<std::size_t, std::size_t>, SymmetricToeplitz> cache;
  // P kernel at lag dt (m - x_i) for m >= 2; for m = 1 the substituted kernel
  // (dt^alpha / alpha) tau^{1-alpha} P(tau) at tau = dt v_i^{1/alpha}.
  auto kernel = [&](std::size_t m, std::size_t i) -> const SymmetricToeplitz& {
    auto it = cache.find({m, i});
    if (it != cache.end()) return it->second;
    std::vector<double> k;
    if (m >= 2) {
      k = SubordinatedOperator(quad, p.s, h, dt * (static_cast<double>(m) - x[i]), n - 1, 1e-12,
                               SubordinatedOperator::Part::P)
              .P_kernel();
    } else {
      const double tau = dt * std::pow(x[i], 1.0 / a);
      k = SubordinatedOperator(quad, p.s, h, tau, n - 1, 1e-12, SubordinatedOperator::Part::P).P_kernel();
      const double c = std::pow(dt, a) / a * std::pow(tau, 1.0 - a);
      for (double& v : k) v *= c;
    }
    return cache.emplace(std::make_pair(m, i), SymmetricToeplitz(std::move(k))).first->second;
  };
  TrajectoryRecorder rec(cfg, observer, steps);
  rec.record(0, 0.0, p.u0);
  const std::vector<double> u0(p.u0.values().begin() + static_cast<std::ptrdiff_t>(off),
                               p.u0.values().begin() + static_cast<std::ptrdiff_t>(off + n));
  // forcing samples per panel j and node i, evaluated once
  std::vector<std::vector<std::vector<double>>> F(steps);
  std::vector<std::vector<double>> F_end(steps);
  std::vector<double> u(n), tmp(n);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double tn = dt * static_cast<double>(k);
    {
      SubordinatedOperator S(quad, p.s, h, tn, n - 1, 1e-12, SubordinatedOperator::Part::S);
      SymmetricToeplitz(S.S_kernel()).apply(u0, u);
    }
    if (p.forcing) {
      F[k - 1].assign(q, std::vector<double>(n));
      for (std::size_t i = 0; i < q; ++i) sample_forcing(p, tn - dt + dt * x[i], off, F[k - 1][i]);
      for (std::size_t j = 0; j + 1 < k; ++j)  // panels [t_j, t_{j+1}] with lag m = k - j >= 2
        for (std::size_t i = 0; i < q; ++i) {
          kernel(k - j, i).apply(F[j][i], tmp);
          for (std::size_t l = 0; l < n; ++l) u[l] += dt * w[i] * tmp[l];
        }
      std::vector<double> g(n);
      for (std::size_t i = 0; i < q; ++i) {
        sample_forcing(p, tn - dt * std::pow(x[i], 1.0 / a), off, g);
        kernel(1, i).apply(g, tmp);
        for (std::size_t l = 0; l < n; ++l) u[l] += w[i] * tmp[l];
      }
    }
    StepStats st;
    st.step = k;
    st.t = tn;
    rec.log(st);
    rec.record(k, tn, embed(p.u0, off, u));
  }
  return rec.take();
}

}  // namespace detail

// Time integration from u0 to T. The observer, when given, sees every step.
inline Trajectory solve(const EvolutionProblem& p, const SchemeConfig& cfg, const StepObserver& observer = {}) {
  p.validate();
  if (!(cfg.newton_tol > 0.0 && cfg.linear_solver_tol > 0.0))
    throw std::invalid_argument("solve: tolerances must be positive");
  if (cfg.stepper == Stepper::mild_reference) {
    if (p.nonlinearity) throw std::invalid_argument("mild_reference handles linear problems only");
    return p.alpha == 1.0 ? detail::solve_mild_semigroup(p, cfg, observer)
                          : detail::solve_mild_subordinated(p, cfg, observer);
  }
  return detail::solve_implicit(p, cfg, observer);
}

// L1 scheme for the scalar problem D^alpha u = -lambda u + f(t); values at t_k = k dt.
inline std::vector<double> solve_l1_scalar(double alpha, double lambda, double u0, double T, double dt,
                                           const std::function<double(double)>& forcing = {}) {
  const std::size_t steps = step_count(T, dt);
  const auto b = caputo_l1_weights(alpha, steps, dt);
  std::vector<double> u(steps + 1);
  u[0] = u0;
  for (std::size_t k = 1; k <= steps; ++k) {
    double hist = 0.0;
    for (std::size_t j = 1; j < k; ++j) hist += b[j] * (u[k - j] - u[k - j - 1]);
    const double f = forcing ? forcing(dt * static_cast<double>(k)) : 0.0;
    u[k] = (b[0] * u[k - 1] - hist + f) / (b[0] + lambda);
  }
  return u;
}

// max over stored times and window nodes of |a - b|
inline double sup_norm_error(const Trajectory& a, const Trajectory& b, double window_lo, double window_hi) {
  if (a.times.size() != b.times.size()) throw std::invalid_argument("sup_norm_error: time grids differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-12 * std::max(1.0, std::abs(a.times[k])))
      throw std::invalid_argument("sup_norm_error: time grids differ");
    if (!(a.states[k].mesh() == b.states[k].mesh())) throw std::invalid_argument("sup_norm_error: meshes differ");
    const auto [lo, hi] = a.states[k].mesh().window(window_lo, window_hi);
    for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(a.states[k][i] - b.states[k][i]));
  }
  return worst;
}

inline double sup_norm_error(const GridFunction& u, const std::function<double(double)>& exact, double window_lo,
                             double window_hi) {
  const auto [lo, hi] = u.mesh().window(window_lo, window_hi);
  double worst = 0.0;
  for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(u[i] - exact(u.mesh().node(i))));
  return worst;
}

inline double sup_norm_error(const Trajectory& a, const std::function<double(double t, double x)>& exact,
                             double window_lo, double window_hi) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    const double t = a.times[k];
    worst = std::max(worst, sup_norm_error(a.states[k], [&](double x) { return exact(t, x); }, window_lo, window_hi));
  }
  return worst;
}

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << "t,x,value\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const GridFunction& u = traj.states[k];
    for (std::size_t i = 0; i < u.size(); ++i)
      out << format_real(traj.times[k]) << ',' << format_real(u.mesh().node(i)) << ',' << format_real(u[i]) << '\n';
  }
}

inline void write_step_log(const std::vector<StepStats>& log, std::ostream& out) {
  out << "step,t,newton_iters,cg_iters,residual\n";
  for (const auto& st : log)
    out << st.step << ',' << format_real(st.t) << ',' << st.newton_iters << ',' << st.cg_iters << ','
        << format_real(st.residual) << '\n';
}

}  // namespace fracdiff
