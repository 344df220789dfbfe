#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "evolution.hpp"
#include "frac_laplacian.hpp"
#include "mesh.hpp"
#include "problems.hpp"

namespace fracdiff {

struct StudyConfig {
  std::string problem = "example1";  // example1, example2 or custom
  std::vector<double> s_values{0.4, 0.8};
  double alpha = 1.0;
  std::vector<double> h_values{1.6667, 0.8333, 0.4167, 0.2083, 0.1042};
  double dt = 1e-3;
  double a = -200.0, b = 200.0;  // computational domain
  double c = -50.0, d = 50.0;    // measurement window
  double T = 1.0;
  Stepper stepper = Stepper::backward_euler;
  ExteriorTreatment exterior = ExteriorTreatment::exact;
  Example2Normalization normalization = Example2Normalization::consistent;
  std::string u0_path, forcing_path;  // custom problem tables, `x,value`
  double newton_tol = 1e-10;
  int newton_max_iter = 20;
  double linear_solver_tol = 1e-10;
  unsigned workers = 1;
  bool time_floor_probe = true;

  void use_paper_scale() {
    a = -1000.0;
    b = 1000.0;
    c = -100.0;
    d = 100.0;
  }

  // Errors are measured against the manufactured solution only where it solves the
  // discretized problem; otherwise against the finest-h run.
  bool exact_reference() const { return problem != "custom" && alpha == 1.0; }

  void validate() const {
    if (problem != "example1" && problem != "example2" && problem != "custom")
      throw std::invalid_argument("unknown problem '" + problem + "'");
    if (s_values.empty() || h_values.empty()) throw std::invalid_argument("s and h lists must be non-empty");
    for (double s : s_values) check_order(s);
    for (std::size_t i = 0; i < h_values.size(); ++i) {
      if (!(h_values[i] > 0.0)) throw std::invalid_argument("h values must be positive");
      if (i > 0 && !(h_values[i] < h_values[i - 1])) throw std::invalid_argument("h list must be strictly decreasing");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0,1]");
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    step_count(T, dt);
    if (!(a < 0.0 && 0.0 < b)) throw std::invalid_argument("domain must satisfy a < 0 < b");
    if (!(a <= c && c < d && d <= b)) throw std::invalid_argument("window must lie inside the domain");
    if (stepper == Stepper::backward_euler && alpha != 1.0)
      throw std::invalid_argument("backward_euler needs alpha = 1; use l1_caputo");
    if (stepper == Stepper::l1_caputo && alpha == 1.0)
      throw std::invalid_argument("l1_caputo needs alpha < 1; use backward_euler");
    if (problem == "example2" && (std::abs(a + 1.0) > 1e-12 || std::abs(b - 1.0) > 1e-12))
      throw std::invalid_argument("example2 is solved on the domain [-1,1]");
    if (problem == "custom" && (u0_path.empty() || forcing_path.empty()))
      throw std::invalid_argument("custom problem needs u0 and forcing tables");
    if (!exact_reference() && h_values.size() < 2)
      throw std::invalid_argument("self-convergence needs at least two h values");
    if (workers == 0) throw std::invalid_argument("workers must be at least 1");
  }
};

struct ErrorRecord {
  std::string problem;
  double s = 0.0;
  std::optional<double> alpha;
  double h = 0.0;
  std::optional<double> dt;
  double error = 0.0;  // NaN when the cell was aborted
  std::optional<double> wall_ms;
  std::string failure;
};

struct RateEstimate {
  double s = 0.0;
  double order = 0.0;
  double residual = 0.0;  // standard error of the fitted slope
  std::size_t points = 0;
};

struct StudyResult {
  std::vector<ErrorRecord> records;
  std::vector<RateEstimate> rates;
  std::map<double, double> time_floor;  // per s, from the dt-halving probe
  std::size_t aborted = 0;
};

using StudyLog = std::function<void(const std::string&)>;

// Least-squares slope of log(error) against log(h). Needs three usable points.
inline std::optional<RateEstimate> fit_rate(double s, const std::vector<std::pair<double, double>>& h_err) {
  std::vector<double> X, Y;
  for (auto [h, e] : h_err)
    if (e > 0.0 && std::isfinite(e)) {
      X.push_back(std::log(h));
      Y.push_back(std::log(e));
    }
  const std::size_t n = X.size();
  if (n < 3) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += X[i];
    my += Y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (X[i] - mx) * (X[i] - mx);
    sxy += (X[i] - mx) * (Y[i] - my);
  }
  const double slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = Y[i] - (my + slope * (X[i] - mx));
    ss += r * r;
  }
  RateEstimate r;
  r.s = s;
  r.order = slope;
  r.residual = std::sqrt(ss / static_cast<double>(n - 2) / sxx);
  r.points = n;
  return r;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// Runs job(i) for i in [0, n) on up to `workers` threads; each job writes only its own slot.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& job) {
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

// Piecewise-linear interpolant of a tabulated function, zero off the table.
inline std::function<double(double)> tabulated(const GridFunction& g) {
  return [g](double x) {
    const double pos = x / g.mesh().h() - static_cast<double>(g.mesh().first_index());
    if (pos < -1e-9 || pos > static_cast<double>(g.size() - 1) + 1e-9) return 0.0;
    const auto i = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), g.size() - 2);
    const double w = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    return (1.0 - w) * g[i] + w * g[i + 1];
  };
}

inline GridFunction load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(in);
}

// Reference states on [lo, lo + n) of a fine mesh, one vector per time step.
struct ReferenceRun {
  Mesh mesh{1.0, -1, 3};
  std::size_t lo = 0;
  std::vector<std::vector<double>> states;

  // four-point Lagrange interpolation at x
  double at(std::size_t step, double x) const {
    const auto& v = states[step];
    const double pos = x / mesh.h() - static_cast<double>(mesh.first_index()) - static_cast<double>(lo);
    auto i = static_cast<long>(std::floor(pos)) - 1;
    i = std::clamp<long>(i, 0, static_cast<long>(v.size()) - 4);
    const double u = pos - static_cast<double>(i);
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      double w = 1.0;
      for (int m = 0; m < 4; ++m)
        if (m != k) w *= (u - m) / static_cast<double>(k - m);
      sum += w * v[static_cast<std::size_t>(i + k)];
    }
    return sum;
  }
};

class StudyRunner {
 public:
  StudyRunner(const StudyConfig& cfg, StudyLog log) : cfg_(cfg), log_(std::move(log)) {
    if (cfg.problem == "custom") {
      u0_ = tabulated(load_table(cfg.u0_path));
      forcing_ = tabulated(load_table(cfg.forcing_path));
    }
  }

  SchemeConfig scheme(double dt) const {
    SchemeConfig sc;
    sc.stepper = cfg_.stepper;
    sc.dt = dt;
    sc.newton_tol = cfg_.newton_tol;
    sc.newton_max_iter = cfg_.newton_max_iter;
    sc.linear_solver_tol = cfg_.linear_solver_tol;
    return sc;
  }

  Mesh mesh(double h) const { return Mesh::covering(cfg_.a, cfg_.b, h); }

  EvolutionProblem problem(double s, const Mesh& m) const {
    if (cfg_.problem == "custom") {
      EvolutionProblem p(cfg_.alpha, s, restrict(u0_, m), cfg_.T);
      std::vector<double> f(m.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = forcing_(m.node(i));
      p.forcing = [f](double, std::size_t i) { return f[i]; };
      p.validate();
      return p;
    }
    return to_evolution_problem(manufactured(s), m, cfg_.alpha, cfg_.exterior, cfg_.T);
  }

  ManufacturedSolution manufactured(double s) const {
    return cfg_.problem == "example1" ? example1(s) : example2(s, cfg_.normalization);
  }

  // sup over steps and window nodes of |u_h - exact|
  double error_vs_exact(double s, double h, double dt) const {
    const Mesh m = mesh(h);
    const auto sol = manufactured(s);
    const auto [lo, hi] = m.window(cfg_.c, cfg_.d);
    double worst = 0.0;
    solve(problem(s, m), scheme(dt), [&](std::size_t, double t, const GridFunction& u) {
      for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(u[i] - sol.exact(t, m.node(i))));
    });
    return worst;
  }

  ReferenceRun reference(double s, double h) const {
    ReferenceRun ref;
    ref.mesh = mesh(h);
    const auto [lo, hi] = ref.mesh.window(cfg_.c - 3.0 * h, cfg_.d + 3.0 * h);
    if (hi - lo < 4) throw std::invalid_argument("window holds too few reference nodes");
    ref.lo = lo;
    solve(problem(s, ref.mesh), scheme(cfg_.dt), [&](std::size_t, double, const GridFunction& u) {
      ref.states.emplace_back(u.values().begin() + static_cast<long>(lo), u.values().begin() + static_cast<long>(hi));
    });
    return ref;
  }

  double error_vs_reference(double s, double h, const ReferenceRun& ref) const {
    const Mesh m = mesh(h);
    const auto [lo, hi] = m.window(cfg_.c, cfg_.d);
    double worst = 0.0;
    solve(problem(s, m), scheme(cfg_.dt), [&](std::size_t step, double, const GridFunction& u) {
      for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(u[i] - ref.at(step, m.node(i))));
    });
    return worst;
  }

  void log(const std::string& msg) const {
    if (!log_) return;
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_(msg);
  }

 private:
  const StudyConfig& cfg_;
  StudyLog log_;
  mutable std::mutex log_mutex_;
  std::function<double(double)> u0_, forcing_;
};

inline StudyLog stderr_log() {
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

}  // namespace detail

// One record per (s, h) cell, rates per s. With a self-convergence reference the finest h
// is the reference and gets no record.
inline StudyResult run_study(const StudyConfig& cfg, const StudyLog& log = detail::stderr_log()) {
  cfg.validate();
  detail::StudyRunner runner(cfg, log);
  const bool exact = cfg.exact_reference();
  const std::size_t ns = cfg.s_values.size();
  const std::size_t nh = exact ? cfg.h_values.size() : cfg.h_values.size() - 1;

  StudyResult result;
  result.records.resize(ns * nh);
  std::vector<std::optional<double>> probe(ns);
  std::vector<std::optional<detail::ReferenceRun>> refs(ns);
  std::vector<std::string> ref_failure(ns);

  auto fail = [&](ErrorRecord& rec, const std::string& why) {
    rec.error = std::numeric_limits<double>::quiet_NaN();
    rec.failure = why;
    runner.log("cell s=" + format_real(rec.s) + " h=" + format_real(rec.h) + " aborted: " + why);
  };

  if (!exact) {
    detail::parallel_for(ns, cfg.workers, [&](std::size_t k) {
      try {
        refs[k] = runner.reference(cfg.s_values[k], cfg.h_values.back());
      } catch (const std::exception& e) {
        ref_failure[k] = std::string("reference run failed: ") + e.what();
      }
    });
  }

  // cells, then one dt/2 probe per s at the finest h
  const std::size_t probes = exact && cfg.time_floor_probe ? ns : 0;
  detail::parallel_for(ns * nh + probes, cfg.workers, [&](std::size_t job) {
    if (job >= ns * nh) {
      const std::size_t k = job - ns * nh;
      try {
        probe[k] = runner.error_vs_exact(cfg.s_values[k], cfg.h_values.back(), 0.5 * cfg.dt);
      } catch (const std::exception& e) {
        runner.log("time-floor probe s=" + format_real(cfg.s_values[k]) + " failed: " + e.what());
      }
      return;
    }
    const std::size_t k = job / nh, j = job % nh;
    ErrorRecord& rec = result.records[job];
    rec.problem = cfg.problem;
    rec.s = cfg.s_values[k];
    rec.alpha = cfg.alpha;
    rec.h = cfg.h_values[j];
    rec.dt = cfg.dt;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (exact) {
        rec.error = runner.error_vs_exact(rec.s, rec.h, cfg.dt);
      } else if (!refs[k]) {
        throw std::runtime_error(ref_failure[k]);
      } else {
        rec.error = runner.error_vs_reference(rec.s, rec.h, *refs[k]);
      }
    } catch (const std::exception& e) {
      fail(rec, e.what());
    }
    rec.wall_ms = detail::elapsed_ms(start);
  });

  for (std::size_t k = 0; k < ns; ++k) {
    const double s = cfg.s_values[k];
    double floor = 0.0;
    if (probe[k]) {
      const auto& finest = result.records[k * nh + nh - 1];
      if (std::isfinite(finest.error)) {
        floor = 2.0 * std::abs(finest.error - *probe[k]);
        result.time_floor[s] = floor;
      }
    }
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < nh; ++j) {
      const auto& rec = result.records[k * nh + j];
      if (std::isfinite(rec.error) && rec.error > 10.0 * floor) pts.emplace_back(rec.h, rec.error);
    }
    if (auto r = fit_rate(s, pts)) result.rates.push_back(*r);
  }
  for (const auto& rec : result.records)
    if (!rec.failure.empty()) ++result.aborted;
  return result;
}

struct ConsistencyConfig {
  std::string profile = "gaussian";  // gaussian, zero, example1, example2
  std::vector<double> s_values{0.3, 0.6, 0.75};
  std::vector<double> h_values{0.4, 0.2, 0.1, 0.05, 0.025};
  std::optional<double> a, b, c, d;  // per-profile defaults when empty
  double oracle_tol = 1e-11;
  unsigned workers = 1;

  struct Resolved {
    double a, b, c, d;
  };

  Resolved resolved() const {
    Resolved r{-12.0, 12.0, -2.0, 2.0};
    if (profile == "example1") r = {-50.0, 50.0, -2.0, 2.0};
    if (profile == "example2") r = {-2.0, 2.0, -0.5, 0.5};
    if (a) r.a = *a;
    if (b) r.b = *b;
    if (c) r.c = *c;
    if (d) r.d = *d;
    return r;
  }

  void validate() const {
    if (profile != "gaussian" && profile != "zero" && profile != "example1" && profile != "example2")
      throw std::invalid_argument("unknown profile '" + profile + "'");
    if (s_values.empty() || h_values.empty()) throw std::invalid_argument("s and h lists must be non-empty");
    for (double s : s_values) check_order(s);
    for (std::size_t i = 0; i < h_values.size(); ++i) {
      if (!(h_values[i] > 0.0)) throw std::invalid_argument("h values must be positive");
      if (i > 0 && !(h_values[i] < h_values[i - 1])) throw std::invalid_argument("h list must be strictly decreasing");
    }
    const auto r = resolved();
    if (!(r.a < 0.0 && 0.0 < r.b && r.a <= r.c && r.c < r.d && r.d <= r.b))
      throw std::invalid_argument("window must lie inside the domain");
    if (profile == "example2" && (r.c < -1.0 || r.d > 1.0 || r.a > -1.0 || r.b < 1.0))
      throw std::invalid_argument("example2 needs the domain to cover [-1,1] and the window inside it");
    if (!(oracle_tol > 0.0)) throw std::invalid_argument("oracle tolerance must be positive");
    if (workers == 0) throw std::invalid_argument("workers must be at least 1");
  }
};

// Consistency error of the discrete operator per (s, h). example1 and example2 use their
// closed forms; example1 also adds the lattice beyond the domain so that truncation does not
// mask the rate.
inline StudyResult run_consistency_study(const ConsistencyConfig& cfg, const StudyLog& log = detail::stderr_log()) {
  cfg.validate();
  const auto dom = cfg.resolved();
  const std::size_t ns = cfg.s_values.size(), nh = cfg.h_values.size();
  StudyResult result;
  result.records.resize(ns * nh);
  std::mutex log_mutex;

  detail::parallel_for(ns * nh, cfg.workers, [&](std::size_t job) {
    ErrorRecord& rec = result.records[job];
    rec.problem = cfg.profile;
    rec.s = cfg.s_values[job / nh];
    rec.h = cfg.h_values[job % nh];
    const double s = rec.s;
    const auto start = std::chrono::steady_clock::now();
    try {
      const Mesh mesh = Mesh::covering(dom.a, dom.b, rec.h);
      std::function<double(double)> U;
      std::optional<std::function<double(double)>> exact;
      bool exterior = false;
      if (cfg.profile == "gaussian") {
        U = [](double y) { return std::exp(-y * y); };
      } else if (cfg.profile == "zero") {
        U = [](double) { return 0.0; };
        exact = [](double) { return 0.0; };
      } else if (cfg.profile == "example1") {
        const auto m = example1(s);
        U = m.profile;
        const double k = std::pow(4.0, s) * std::tgamma(0.5 + s) * reciprocal_gamma(0.5 - s);
        exact = [s, k](double x) { return k * std::pow(1.0 + x * x, -(0.5 + s)); };
        exterior = true;
      } else {
        U = example2(s).profile;
        exact = [](double) { return 1.0; };
      }
      rec.error = consistency_error(U, exact, s, mesh, dom.c, dom.d, cfg.oracle_tol, exterior);
    } catch (const std::exception& e) {
      rec.error = std::numeric_limits<double>::quiet_NaN();
      rec.failure = e.what();
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log("cell s=" + format_real(rec.s) + " h=" + format_real(rec.h) + " aborted: " + e.what());
      }
    }
    rec.wall_ms = detail::elapsed_ms(start);
  });

  for (std::size_t k = 0; k < ns; ++k) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < nh; ++j) pts.emplace_back(cfg.h_values[j], result.records[k * nh + j].error);
    if (auto r = fit_rate(cfg.s_values[k], pts)) result.rates.push_back(*r);
  }
  for (const auto& rec : result.records)
    if (!rec.failure.empty()) ++result.aborted;
  return result;
}

// problem,s,alpha,h,dt,error,rate,wall_ms; rows by s ascending then h descending. The rate
// column repeats the fitted order of the row's s. wall_ms stays empty unless requested, so
// reruns give identical bytes.
inline void emit_csv(const StudyResult& result, std::ostream& out, bool with_timings = false) {
  if (result.records.empty()) throw std::invalid_argument("emit_csv: no records");
  std::vector<const ErrorRecord*> rows;
  for (const auto& r : result.records) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const ErrorRecord* x, const ErrorRecord* y) {
    if (x->s != y->s) return x->s < y->s;
    return x->h > y->h;
  });
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  out << "problem,s,alpha,h,dt,error,rate,wall_ms\n";
  for (const ErrorRecord* r : rows) {
    std::optional<double> rate;
    for (const auto& e : result.rates)
      if (e.s == r->s) rate = e.order;
    out << r->problem << ',' << format_real(r->s) << ',' << opt(r->alpha) << ',' << format_real(r->h) << ','
        << opt(r->dt) << ',' << format_real(r->error) << ',' << opt(rate) << ','
        << (with_timings ? opt(r->wall_ms) : std::string()) << '\n';
    if (!out) throw std::runtime_error("emit_csv: write failed");
  }
}

inline void emit_csv(const StudyResult& result, const std::string& path, bool with_timings = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_csv: cannot open '" + path + "'");
  emit_csv(result, out, with_timings);
  out.flush();
  if (!out) throw std::runtime_error("emit_csv: write failed for '" + path + "'");
}

// Reads back a study CSV. Rates land in `rates` keyed by s when present.
inline std::vector<ErrorRecord> read_study_csv(std::istream& in, std::map<double, double>* rates = nullptr) {
  std::string line;
  if (!std::getline(in, line) || line != "problem,s,alpha,h,dt,error,rate,wall_ms")
    throw std::invalid_argument("read_study_csv: unexpected header");
  auto opt = [](const std::string& f) { return f.empty() ? std::optional<double>() : parse_real(f); };
  std::vector<ErrorRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw std::invalid_argument("read_study_csv: malformed row '" + line + "'");
    ErrorRecord r;
    r.problem = f[0];
    r.s = parse_real(f[1]);
    r.alpha = opt(f[2]);
    r.h = parse_real(f[3]);
    r.dt = opt(f[4]);
    r.error = f[5] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_real(f[5]);
    if (rates && !f[6].empty()) (*rates)[r.s] = parse_real(f[6]);
    r.wall_ms = opt(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fracdiff
