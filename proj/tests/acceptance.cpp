// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.

#include <Eigen/Dense>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fracdiff/semigroup.hpp>
#include <fracdiff/study.hpp>

using namespace fracdiff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

GridFunction sample(const Mesh& mesh, const std::function<double(double)>& f) {
  std::vector<double> v(mesh.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh.node(i));
  return GridFunction(mesh, std::move(v));
}

GridFunction random_grid(const Mesh& mesh, std::mt19937_64& rng, double support = INFINITY) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(mesh.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(mesh.node(i)) <= support ? dist(rng) : 0.0;
  return GridFunction(mesh, std::move(v));
}

std::string csv(const StudyResult& r) {
  std::ostringstream out;
  emit_csv(r, out);
  return out.str();
}

const StudyLog quiet = {};

// errors strictly decrease per s, except one pair with both errors below 1e-10
bool monotone(const StudyResult& r, double s) {
  std::vector<std::pair<double, double>> he;
  for (const auto& rec : r.records)
    if (rec.s == s) he.emplace_back(rec.h, rec.error);
  std::sort(he.begin(), he.end(), [](auto x, auto y) { return x.first > y.first; });
  int violations = 0;
  for (std::size_t i = 1; i < he.size(); ++i) {
    if (!(std::isfinite(he[i].second) && std::isfinite(he[i - 1].second))) return false;
    if (he[i].second < he[i - 1].second) continue;
    if (he[i].second < 1e-10 && he[i - 1].second < 1e-10 && ++violations == 1) continue;
    return false;
  }
  return !he.empty();
}

std::string error_list(const StudyResult& r, double s) {
  std::string out;
  for (const auto& rec : r.records)
    if (rec.s == s) out += (out.empty() ? "" : " ") + fmt("%.3g", rec.error);
  return out;
}

const RateEstimate* rate_for(const StudyResult& r, double s) {
  for (const auto& e : r.rates)
    if (e.s == s) return &e;
  return nullptr;
}

Outcome kernel_correctness() {
  double worst = 0.0;
  for (double s : {0.25, 0.5, 0.75})
    for (double h : {1.0, 0.1}) {
      const auto k = kernel_weights(s, h, 1000);
      for (long n = 1; n <= 1000; ++n) {
        const double r = kernel_weight_reflected(s, h, n);
        worst = std::max(worst, std::abs(k.w[static_cast<std::size_t>(n)] - r) / std::abs(r));
      }
    }
  const double w0 = std::abs(kernel_weights(0.5, 1.0, 1).w[0] - 4.0 / std::numbers::pi);
  return {worst <= 1e-12 && w0 <= 1e-13, fmt("max relative difference %.2e, |w0 - 4/pi| = %.1e", worst, w0)};
}

Outcome symbol_relation() {
  const Mesh m(1.0, -(1 << 16), (1u << 17) + 1);
  const std::size_t centre = 1u << 16;
  double worst = 0.0;
  for (double s : {0.25, 0.5, 0.75})
    for (double w : {0.5, 1.0, 2.0}) {
      const auto u = sample(m, [w](double x) { return std::cos(w * x); });
      const auto out = DiscreteFractionalLaplacian(s, m).apply(u);
      const double symbol = std::pow(4.0 * std::pow(std::sin(w / 2.0), 2), s);
      for (std::size_t i = centre - 5; i <= centre + 5; ++i) worst = std::max(worst, std::abs(out[i] - symbol * u[i]));
    }
  return {worst <= 1e-6, fmt("max deviation %.2e over 3 frequencies x 3 orders", worst)};
}

Outcome consistency_rates() {
  ConsistencyConfig cc;
  cc.workers = workers();
  const auto r = run_consistency_study(cc, quiet);
  bool ok = r.aborted == 0 && r.rates.size() == cc.s_values.size();
  std::string d;
  for (const auto& e : r.rates) {
    const double target = 2.0 - 2.0 * e.s;
    ok = ok && std::abs(e.order - target) <= 0.25;
    d += fmt("s=%.2f order %.3f (target %.2f) ", e.s, e.order, target);
  }
  return {ok, d + "on the Gaussian profile"};
}

Outcome special_functions() {
  double e11 = 0.0;
  for (double z = -5.0; z <= 5.0; z += 0.01)
    e11 = std::max(e11, std::abs(mittag_leffler({1.0, 1.0}, z) - std::exp(z)) / std::exp(z));
  double half = 0.0;
  for (double x = 0.0; x <= 10.0; x += 0.05)
    half = std::max(half, std::abs(wright_phi({0.5}, x) - std::exp(-x * x / 4.0) / std::sqrt(std::numbers::pi)));
  boost::math::quadrature::tanh_sinh<double> head;
  boost::math::quadrature::exp_sinh<double> tail;
  double mom = 0.0;
  for (double a : {0.3, 0.5, 0.8})
    for (int p : {0, 1, 2}) {
      auto f = [&](double t) { return wright_phi({a}, t) * std::pow(t, p); };
      const double m = head.integrate(f, 0.0, 4.0) + tail.integrate(f, 4.0, std::numeric_limits<double>::infinity());
      mom = std::max(mom, std::abs(m - std::tgamma(p + 1.0) / std::tgamma(a * p + 1.0)));
    }
  return {e11 <= 1e-12 && half <= 1e-10 && mom <= 1e-8,
          fmt("E_{1,1} vs exp %.1e, Phi_1/2 closed form %.1e, moments %.1e", e11, half, mom)};
}

Outcome semigroup_suite() {
  bool positive = true;
  double mass = 0.0;
  for (double s : {0.25, 0.5, 0.75})
    for (double t : {0.01, 0.1, 1.0}) {
      const auto k = frac_semigroup_kernel(s, 0.5, t, 2000);
      for (double v : k.L) positive = positive && v >= 0.0;
      mass = std::max(mass, k.mass());
    }
  std::mt19937_64 rng(7);
  const Mesh wide(1.0, -8000, 16001);
  const auto u = random_grid(wide, rng, 10.0);
  const auto [lo, hi] = wide.window(-10.0, 10.0);
  double law = 0.0;
  for (double s : {0.25, 0.5, 0.75}) {
    const auto twice = frac_semigroup_apply(frac_semigroup_apply(u, s, 0.1), s, 0.2);
    const auto once = frac_semigroup_apply(u, s, 0.3);
    for (std::size_t i = lo; i < hi; ++i) law = std::max(law, std::abs(twice[i] - once[i]));
  }
  const Mesh m(0.25, -200, 401);
  const auto g = sample(m, [](double x) { return std::exp(-x * x); });
  double worst_ratio = 0.0;
  for (double s : {0.3, 0.7}) {
    const auto Ag = DiscreteFractionalLaplacian(s, m).apply(g);
    std::vector<double> errs;
    for (double d : {4e-3, 2e-3, 1e-3}) {
      const auto Tg = frac_semigroup_apply(g, s, d);
      double e = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) e = std::max(e, std::abs((g[i] - Tg[i]) / d - Ag[i]));
      errs.push_back(e);
    }
    for (std::size_t i = 1; i < errs.size(); ++i) worst_ratio = std::max(worst_ratio, std::abs(errs[i - 1] / errs[i] - 2.0));
  }
  double bessel = 0.0;
  for (double t : {0.3, 0.7, 3.0}) {
    const auto k = frac_semigroup_kernel(1.0, 1.0, t, 60);
    const auto b = bessel_i_scaled_sequence(2.0 * t, 60);
    for (std::size_t n = 0; n <= 60; ++n) bessel = std::max(bessel, std::abs(k.L[n] - b[n]));
  }
  const bool ok = positive && mass <= 1.0 + 1e-12 && law <= 1e-8 && worst_ratio <= 0.15 && bessel <= 1e-10;
  return {ok, fmt("positive %s, max mass %.15f, law %.1e, generator halving ratio off 2 by %.3f, s=1 vs Bessel %.1e",
                  positive ? "yes" : "no", mass, law, worst_ratio, bessel)};
}

Outcome subordination_identity() {
  double ml = 0.0;
  for (double a : {0.4, 0.8}) {
    const SubordinationQuadrature q(a);
    for (double lam : {0.5, 2.0})
      for (double t : {0.25, 1.0}) {
        auto decay = [lam](double r) { return std::exp(-lam * r); };
        ml = std::max(ml, std::abs(subordinate_S<double>(q, t, decay) - mittag_leffler({a, 1.0}, -lam * std::pow(t, a))));
      }
  }
  std::mt19937_64 rng(4);
  const Mesh m(0.5, -30, 61);
  double slack = INFINITY;
  int checked = 0;
  for (double a : {0.4, 0.8}) {
    const SubordinationQuadrature q(a);
    for (double t : {0.01, 0.1, 1.0}) {
      const SubordinatedOperator op(q, 0.5, m.h(), t, m.size() - 1);
      for (int rep = 0; rep < (t == 1.0 ? 18 : 16); ++rep) {
        const auto u = random_grid(m, rng);
        slack = std::min(slack, std::pow(t, a - 1.0) * u.sup_norm() - op.apply_P(u).sup_norm());
        ++checked;
      }
    }
  }
  return {ml <= 1e-6 && slack >= 0.0 && checked == 100,
          fmt("scalar reduction vs Mittag-Leffler %.1e, P bound minimum slack %.3g over %d grid functions", ml, slack,
              checked)};
}

Outcome example1_convergence() {
  StudyConfig cfg;
  cfg.stepper = Stepper::mild_reference;
  cfg.workers = workers();
  const auto r = run_study(cfg, quiet);
  const auto* a = rate_for(r, 0.4);
  const auto* b = rate_for(r, 0.8);
  const bool mono = monotone(r, 0.4) && monotone(r, 0.8);
  const bool apart = a && b && std::abs(a->order - b->order) > a->residual + b->residual;
  std::string d = "errors s=0.4: " + error_list(r, 0.4) + "; s=0.8: " + error_list(r, 0.8);
  if (a && b) d += fmt("; orders %.4f +- %.4f and %.4f +- %.4f", a->order, a->residual, b->order, b->residual);
  return {r.aborted == 0 && mono && apart, d};
}

Outcome example2_convergence() {
  StudyConfig cfg;
  cfg.problem = "example2";
  cfg.s_values = {0.1, 0.5};
  cfg.h_values = {0.1, 0.05, 0.025, 0.0125, 0.00625};
  cfg.a = -1.0;
  cfg.b = 1.0;
  cfg.c = -0.5;
  cfg.d = 0.5;
  cfg.workers = workers();
  const auto r = run_study(cfg, quiet);
  bool ok = r.aborted == 0;
  std::string d;
  for (double s : cfg.s_values) {
    double coarse = NAN, fine = NAN;
    for (const auto& rec : r.records)
      if (rec.s == s) {
        if (rec.h == cfg.h_values.front()) coarse = rec.error;
        if (rec.h == cfg.h_values.back()) fine = rec.error;
      }
    ok = ok && monotone(r, s) && fine <= coarse / 10.0;
    d += fmt("s=%.1f: ", s) + error_list(r, s) + fmt(" (drop %.0fx); ", coarse / fine);
  }
  return {ok, d + "window (-0.5, 0.5)"};
}

Outcome cross_solver() {
  const Mesh m = Mesh::covering(-200.0, 200.0, 0.8333);
  const auto p = to_evolution_problem(example1(0.4), m, 1.0);
  const auto [lo, hi] = m.window(-50.0, 50.0);
  std::vector<std::pair<double, double>> pts;
  std::string d;
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    SchemeConfig be, mild;
    be.dt = mild.dt = dt;
    be.snapshot_times = mild.snapshot_times = {0.25, 0.5};
    mild.stepper = Stepper::mild_reference;
    const auto a = solve(p, be), b = solve(p, mild);
    double e = 0.0;
    for (std::size_t k = 1; k < a.times.size(); ++k)
      for (std::size_t i = lo; i < hi; ++i) e = std::max(e, std::abs(a.states[k][i] - b.states[k][i]));
    pts.emplace_back(dt, e);
    d += fmt("dt=%g diff %.3e; ", dt, e);
  }
  const auto r = fit_rate(0.4, pts);
  return {r && std::abs(r->order - 1.0) <= 0.2 && pts[0].second > pts[1].second && pts[1].second > pts[2].second,
          d + (r ? fmt("order %.3f", r->order) : std::string("no fit"))};
}

Outcome l1_scalar() {
  bool ok = true;
  std::string d;
  for (double a : {0.3, 0.7}) {
    double previous = INFINITY;
    d += fmt("alpha=%.1f:", a);
    for (double dt : {0.01, 0.005, 0.0025, 0.00125}) {
      const auto u = solve_l1_scalar(a, 1.0, 1.0, 1.0, dt);
      double e = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k)
        e = std::max(e, std::abs(u[k] - mittag_leffler({a, 1.0}, -std::pow(dt * static_cast<double>(k), a))));
      ok = ok && e < previous;
      previous = e;
      d += fmt(" %.3e", e);
    }
    d += "; ";
  }
  return {ok, d + "sup over the time grid"};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(8, 256);
  std::uniform_real_distribution<double> order(0.05, 0.95);
  double fft = 0.0, cg = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = size(rng);
    const double s = order(rng), h = 0.1 + 0.9 * order(rng), dt = 0.01 + order(rng);
    const Mesh m(h, -static_cast<long>(n / 2), n);
    const auto k = kernel_weights(s, h, n);
    const auto u = random_grid(m, rng);
    const auto a = apply(k, u, ApplyMethod::direct), b = apply(k, u, ApplyMethod::fft);
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      scale = std::max(scale, std::abs(a[i]));
      diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    fft = std::max(fft, diff / scale);

    const DiscreteFractionalLaplacian A(s, m);
    Eigen::MatrixXd M(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        M(static_cast<long>(i), static_cast<long>(j)) =
            (i == j ? 1.0 : 0.0) + dt * A.toeplitz().column()[i > j ? i - j : j - i];
    std::vector<double> x(n, 0.0);
    auto op = [&](std::span<const double> in, std::span<double> out) {
      A.apply(in, out);
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] + dt * out[i];
    };
    conjugate_gradient(op, u.values(), x, 1e-14, 10000);
    const Eigen::VectorXd ref = M.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(u.values().data(), static_cast<long>(n)));
    for (std::size_t i = 0; i < n; ++i) cg = std::max(cg, std::abs(x[i] - ref(static_cast<long>(i))));
  }
  return {fft <= 1e-12 && cg <= 1e-10, fmt("FFT vs direct %.1e relative, CG vs dense %.1e, 50 random instances", fft, cg)};
}

Outcome determinism() {
  StudyConfig cfg;
  cfg.problem = "example2";
  cfg.s_values = {0.3, 0.7};
  cfg.h_values = {0.1, 0.05, 0.025};
  cfg.a = -1.0;
  cfg.b = 1.0;
  cfg.c = -0.5;
  cfg.d = 0.5;
  cfg.dt = 0.01;
  cfg.workers = 1;
  const std::string one = csv(run_study(cfg, quiet));
  cfg.workers = 4;
  const std::string two = csv(run_study(cfg, quiet));
  const std::string three = csv(run_study(cfg, quiet));
  ConsistencyConfig cc;
  cc.h_values = {0.4, 0.2, 0.1};
  const std::string c1 = csv(run_consistency_study(cc, quiet));
  cc.workers = 4;
  const std::string c2 = csv(run_consistency_study(cc, quiet));
  const bool ok = one == two && two == three && c1 == c2;
  return {ok, fmt("study CSV %zu bytes over 3 runs, consistency CSV %zu bytes over 2 runs, %s", one.size(), c1.size(),
                  ok ? "byte-identical" : "differ")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "kernel correctness", 1.0, kernel_correctness},
      {2, "symbol eigen-relation", 60.0, symbol_relation},
      {3, "consistency rates", 60.0, consistency_rates},
      {4, "special functions", 1.0, special_functions},
      {5, "semigroup suite", 60.0, semigroup_suite},
      {6, "subordination identity", 60.0, subordination_identity},
      {7, "Example 1 convergence", 600.0, example1_convergence},
      {8, "Example 2 convergence", 600.0, example2_convergence},
      {9, "cross-solver check", 300.0, cross_solver},
      {10, "L1/Caputo check", 60.0, l1_scalar},
      {11, "oracle equivalence", 60.0, oracle_equivalence},
      {12, "determinism", INFINITY, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2f s", secs);
    if (secs > c.limit_s) {
      o.pass = false;
      timing += fmt(", over the %.0f s limit", c.limit_s);
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << timing << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
