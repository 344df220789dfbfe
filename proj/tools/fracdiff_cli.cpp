// Command line harness: convergence studies, consistency studies and single solves.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <fracdiff/study.hpp>

namespace {

using namespace fracdiff;

const std::map<std::string, Stepper> kSteppers{{"backward_euler", Stepper::backward_euler},
                                                {"l1_caputo", Stepper::l1_caputo},
                                                {"mild_reference", Stepper::mild_reference}};
const std::map<std::string, ExteriorTreatment> kExterior{{"zero", ExteriorTreatment::zero},
                                                          {"exact", ExteriorTreatment::exact}};
const std::map<std::string, Example2Normalization> kNormalization{
    {"consistent", Example2Normalization::consistent}, {"published", Example2Normalization::published}};

struct Interval {
  std::vector<double> v;
  bool given() const { return !v.empty(); }
};

void add_interval(CLI::App* app, const std::string& name, Interval& iv, const std::string& help) {
  app->add_option(name, iv.v, help)->delimiter(',')->expected(2);
}

// Options shared by `study` and `solve`.
struct ProblemOptions {
  std::string problem = "example1";
  double alpha = 1.0;
  double dt = 1e-3;
  double T = 1.0;
  Interval domain, window;
  Stepper stepper = Stepper::backward_euler;
  ExteriorTreatment exterior = ExteriorTreatment::exact;
  Example2Normalization normalization = Example2Normalization::consistent;
  std::string u0, forcing;
  bool paper_scale = false;
  double newton_tol = 1e-10;
  int newton_max_iter = 20;
  double linear_solver_tol = 1e-10;

  void add(CLI::App* app) {
    app->add_option("--problem", problem, "example1, example2 or custom")
        ->check(CLI::IsMember({"example1", "example2", "custom"}));
    app->add_option("--alpha", alpha, "order of the time derivative, in (0,1]");
    app->add_option("--dt", dt, "time step");
    app->add_option("--T", T, "horizon");
    add_interval(app, "--domain", domain, "computational domain a,b");
    add_interval(app, "--window", window, "measurement window c,d");
    app->add_option("--stepper", stepper, "backward_euler, l1_caputo or mild_reference")
        ->transform(CLI::CheckedTransformer(kSteppers));
    app->add_option("--exterior", exterior, "values assumed outside the domain: exact or zero")
        ->transform(CLI::CheckedTransformer(kExterior));
    app->add_option("--normalization", normalization, "example2 scale: consistent or published")
        ->transform(CLI::CheckedTransformer(kNormalization));
    app->add_option("--u0", u0, "custom initial data, x,value table");
    app->add_option("--forcing", forcing, "custom time-independent forcing, x,value table");
    app->add_flag("--paper-scale", paper_scale, "domain (-1000,1000), window (-100,100)");
    app->add_option("--newton-tol", newton_tol);
    app->add_option("--newton-max-iter", newton_max_iter);
    app->add_option("--linear-solver-tol", linear_solver_tol);
  }

  StudyConfig to_config() const {
    StudyConfig cfg;
    cfg.problem = problem;
    cfg.alpha = alpha;
    cfg.dt = dt;
    cfg.T = T;
    cfg.stepper = stepper;
    if (alpha < 1.0 && stepper == Stepper::backward_euler) cfg.stepper = Stepper::l1_caputo;
    cfg.exterior = exterior;
    cfg.normalization = normalization;
    cfg.u0_path = u0;
    cfg.forcing_path = forcing;
    cfg.newton_tol = newton_tol;
    cfg.newton_max_iter = newton_max_iter;
    cfg.linear_solver_tol = linear_solver_tol;
    if (problem == "example2") {
      cfg.a = -1.0;
      cfg.b = 1.0;
      cfg.c = -0.5;
      cfg.d = 0.5;
    }
    if (paper_scale) cfg.use_paper_scale();
    if (domain.given()) {
      cfg.a = domain.v[0];
      cfg.b = domain.v[1];
    }
    if (window.given()) {
      cfg.c = window.v[0];
      cfg.d = window.v[1];
    }
    return cfg;
  }
};

void print_rates(const StudyResult& r) {
  for (const auto& e : r.rates)
    std::cerr << "s=" << format_real(e.s) << " order=" << format_real(e.order) << " +- "
              << format_real(e.residual) << " (" << e.points << " points)\n";
  for (const auto& [s, floor] : r.time_floor) std::cerr << "s=" << format_real(s) << " time floor=" << format_real(floor) << '\n';
}

void write_result(const StudyResult& r, const std::string& out, bool timings) {
  if (out.empty() || out == "-")
    emit_csv(r, std::cout, timings);
  else
    emit_csv(r, out, timings);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fractional diffusion convergence harness"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_config("--config", "", "key = value file; [study], [consistency] or [solve] sections");
  app.require_subcommand(1);

  // study
  ProblemOptions sp;
  std::vector<double> study_s{0.4, 0.8}, study_h{1.6667, 0.8333, 0.4167, 0.2083, 0.1042};
  std::string study_out;
  unsigned study_workers = 1;
  bool study_timings = false, no_probe = false;
  auto* study = app.add_subcommand("study", "h-sweep convergence study");
  sp.add(study);
  study->add_option("--s", study_s, "orders s")->delimiter(',');
  study->add_option("--h", study_h, "mesh sizes, strictly decreasing")->delimiter(',');
  study->add_option("--out", study_out, "CSV path, stdout when empty");
  study->add_option("--workers", study_workers, "concurrent cells")->check(CLI::PositiveNumber);
  study->add_flag("--timings", study_timings, "fill the wall_ms column");
  study->add_flag("--no-time-floor-probe", no_probe, "skip the dt/2 run at the finest h");

  // consistency
  ConsistencyConfig cc;
  Interval cdomain, cwindow;
  std::string cons_out;
  bool cons_timings = false;
  auto* cons = app.add_subcommand("consistency", "consistency of the discrete operator");
  cons->add_option("--profile", cc.profile, "gaussian, zero, example1 or example2")
      ->check(CLI::IsMember({"gaussian", "zero", "example1", "example2"}));
  cons->add_option("--s", cc.s_values, "orders s")->delimiter(',');
  cons->add_option("--h", cc.h_values, "mesh sizes, strictly decreasing")->delimiter(',');
  add_interval(cons, "--domain", cdomain, "computational domain a,b");
  add_interval(cons, "--window", cwindow, "measurement window c,d");
  cons->add_option("--oracle-tol", cc.oracle_tol, "absolute tolerance of the continuous operator");
  cons->add_option("--workers", cc.workers, "concurrent cells")->check(CLI::PositiveNumber);
  cons->add_option("--out", cons_out, "CSV path, stdout when empty");
  cons->add_flag("--timings", cons_timings, "fill the wall_ms column");

  // solve
  ProblemOptions vp;
  double solve_s = 0.4, solve_h = 0.8333;
  std::vector<double> snapshots;
  std::string traj_out, log_out;
  bool full = false;
  auto* run = app.add_subcommand("solve", "single solve with trajectory and step log");
  vp.add(run);
  run->add_option("--s", solve_s, "order s");
  run->add_option("--h", solve_h, "mesh size");
  run->add_option("--snapshots", snapshots, "times to store")->delimiter(',');
  run->add_flag("--full", full, "store every step");
  run->add_option("--trajectory", traj_out, "t,x,value CSV");
  run->add_option("--log", log_out, "per-step solver log CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*study) {
      StudyConfig cfg = sp.to_config();
      cfg.s_values = study_s;
      cfg.h_values = study_h;
      cfg.workers = study_workers;
      cfg.time_floor_probe = !no_probe;
      const auto r = run_study(cfg);
      write_result(r, study_out, study_timings);
      print_rates(r);
      return r.aborted == 0 ? 0 : 1;
    }
    if (*cons) {
      if (cdomain.given()) {
        cc.a = cdomain.v[0];
        cc.b = cdomain.v[1];
      }
      if (cwindow.given()) {
        cc.c = cwindow.v[0];
        cc.d = cwindow.v[1];
      }
      const auto r = run_consistency_study(cc);
      write_result(r, cons_out, cons_timings);
      print_rates(r);
      return r.aborted == 0 ? 0 : 1;
    }
    StudyConfig cfg = vp.to_config();
    cfg.s_values = {solve_s};
    cfg.h_values = {solve_h};
    cfg.validate();
    detail::StudyRunner runner(cfg, {});
    const Mesh mesh = runner.mesh(solve_h);
    const auto problem = runner.problem(solve_s, mesh);
    SchemeConfig sc = runner.scheme(cfg.dt);
    sc.snapshot_times = snapshots;
    sc.store_full = full;
    double err = 0.0;
    std::optional<ManufacturedSolution> sol;
    if (cfg.exact_reference()) sol = runner.manufactured(solve_s);
    const auto [lo, hi] = mesh.window(cfg.c, cfg.d);
    const auto traj = solve(problem, sc, [&](std::size_t, double t, const GridFunction& u) {
      if (!sol) return;
      for (std::size_t i = lo; i < hi; ++i) err = std::max(err, std::abs(u[i] - sol->exact(t, mesh.node(i))));
    });
    if (!traj_out.empty()) {
      std::ofstream out(traj_out);
      if (!out) throw std::runtime_error("cannot open '" + traj_out + "'");
      write_trajectory_csv(traj, out);
    }
    if (!log_out.empty()) {
      std::ofstream out(log_out);
      if (!out) throw std::runtime_error("cannot open '" + log_out + "'");
      write_step_log(traj.log, out);
    }
    std::cout << "nodes=" << mesh.size() << " steps=" << traj.log.size()
              << " running_sup=" << format_real(traj.running_sup);
    if (sol) std::cout << " window_error=" << format_real(err);
    std::cout << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
