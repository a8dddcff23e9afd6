#include "cheapstack/evaluate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cheapstack {

namespace {

// Smallest and largest sqrt-eigenvalue of Dv2 over the horizon.
std::pair<double, double> fast_rate_range(const TransformedGame& tg) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  const int count = tg.is_constant() ? 1 : 11;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : tg.tf() * k / (count - 1);
    const Mat D = tg.at(t).Dv2;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
    lo = std::min(lo, std::sqrt(std::max(es.eigenvalues().minCoeff(), 0.0)));
    hi = std::max(hi, std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0)));
  }
  return {lo, hi};
}

Mat fast_input(int n, int s) {
  Mat B = Mat::Zero(n, s);
  B.bottomRows(s).setIdentity();
  return B;
}

ShootingOptions to_shooting(double tol, int max_refine, int stages) {
  ShootingOptions so;
  so.tol_ode = tol;
  so.max_refine = max_refine;
  so.stages = stages;
  return so;
}

}  // namespace

ControlPair zero_pair(const TransformedGame& tg) {
  const int r = tg.r(), s = tg.s();
  ControlPair p;
  p.u = [r](double) { return Vec::Zero(r).eval(); };
  p.v = [s](double) { return Vec::Zero(s).eval(); };
  p.label = "zero";
  return p;
}

ControlPair exact_pair(std::shared_ptr<const BvpSolution> sol) {
  ControlPair p;
  p.u = [sol](double t) { return sol->u(t); };
  p.v = [sol](double t) { return sol->v(t); };
  p.label = "exact";
  p.layer_eps = sol->eps();
  return p;
}

ControlPair hat_pair(std::shared_ptr<const Expansion> ex, double eps) {
  ControlPair p;
  p.u = [ex, eps](double t) { return hat_controls(*ex, t, eps).first; };
  p.v = [ex, eps](double t) { return hat_controls(*ex, t, eps).second; };
  p.label = "hat";
  p.layer_eps = eps;
  return p;
}

ControlPair tilde_pair(std::shared_ptr<const Expansion> ex, double eps) {
  ControlPair p;
  p.u = [ex, eps](double t) { return tilde_controls(*ex, t, eps).first; };
  p.v = [ex, eps](double t) { return tilde_controls(*ex, t, eps).second; };
  p.label = "tilde";
  p.layer_eps = eps;
  return p;
}

OpenLoopTrajectory simulate_openloop(std::shared_ptr<const TransformedGame> tg, const ControlPair& pair,
                                     const SimulationOptions& opts) {
  if (!pair.u || !pair.v) throw InputError("control pair is not defined");
  const int n = tg->n(), s = tg->s();
  const Mat Bv = fast_input(n, s);
  auto ode = std::make_shared<LinearOde>();
  ode->dim = n;
  ode->M = [tg](double t) { return tg->at(t).A; };
  ode->autonomous = tg->is_constant();
  ode->g = [tg, pair, Bv](double t) -> Vec { return tg->at(t).Bu * pair.u(t) + Bv * pair.v(t); };

  MeshPlan plan;
  plan.tf = tg->tf();
  plan.hint = opts.mesh_hint;
  plan.rho = stiffness_estimate(*ode, tg->tf());
  if (pair.layer_eps > 0.0) {
    const auto [lo, hi] = fast_rate_range(*tg);
    plan.rho = std::max(plan.rho, 2.0 * hi / pair.layer_eps);
    if (lo > 0.0) {
      const double w = layer_width(pair.layer_eps, opts.layer_kappa / lo, tg->tf());
      plan.layer_left = w;
      plan.layer_right = w;
    }
  }
  const ShootingOptions so = to_shooting(opts.tol, opts.max_refine, opts.stages);
  double defect = 0.0;
  for (int refine = 0; refine <= opts.max_refine; ++refine) {
    OpenLoopTrajectory out;
    out.trajectory = solve_ivp(ode, tg->z0(), plan, so, refine);
    out.defect = continuity_defect(out.trajectory, opts.stages);
    out.refinements = refine;
    defect = out.defect;
    if (out.defect <= opts.tol) return out;
  }
  std::ostringstream os;
  os << "open-loop simulation did not reach tolerance " << opts.tol << " (defect " << defect << ")";
  throw NumericalError(os.str());
}

Costs cost_of_pair(const TransformedGame& tg, double eps, const ControlPair& pair, const OpenLoopTrajectory& traj,
                   int points) {
  const double beta = eps * eps;
  Costs c;
  c.J_u = 0.5 * traj.trajectory.integrate(
                    [&](double t, const Vec& z) {
                      const Blocks b = tg.at(t);
                      const Vec u = pair.u(t), v = pair.v(t);
                      return z.dot(b.Du * z) + b.alpha * u.squaredNorm() + beta * v.dot(b.Guv * v);
                    },
                    points);
  c.J_v = 0.5 * traj.trajectory.integrate(
                    [&](double t, const Vec& z) {
                      const Blocks b = tg.at(t);
                      const Vec u = pair.u(t), v = pair.v(t);
                      return z.dot(b.Dv * z) + beta * v.squaredNorm() + u.dot(b.Gvu * u);
                    },
                    points);
  return c;
}

ControlErrors control_errors(const ControlPair& exact, const ControlPair& approx, const std::vector<double>& mesh,
                             int factor) {
  ControlErrors e;
  auto visit = [&](double t) {
    e.du = std::max(e.du, (exact.u(t) - approx.u(t)).norm());
    e.dv = std::max(e.dv, (exact.v(t) - approx.v(t)).norm());
  };
  if (mesh.empty()) return e;
  visit(mesh.front());
  for (size_t k = 0; k + 1 < mesh.size(); ++k) {
    for (int j = 1; j <= factor; ++j) visit(mesh[k] + (mesh[k + 1] - mesh[k]) * j / factor);
  }
  return e;
}

double relative_percent(double reference, double value) {
  if (reference == 0.0) throw NumericalError("relative error with zero reference cost");
  return std::abs(reference - value) / std::abs(reference) * 100.0;
}

EpsMetrics evaluate_eps(std::shared_ptr<const Expansion> ex, double eps, const EvaluationOptions& opts) {
  EpsMetrics m;
  m.eps = eps;
  auto tg = ex->game_ptr();
  auto sol = std::make_shared<const BvpSolution>(solve_exact(tg, eps, opts.solver));
  m.exact = sol->costs;

  const ControlPair star = exact_pair(sol);
  const ControlPair hat = hat_pair(ex, eps);
  const ControlPair tilde = tilde_pair(ex, eps);
  const int q = opts.simulation.quadrature_points;
  m.hat = cost_of_pair(*tg, eps, hat, simulate_openloop(tg, hat, opts.simulation), q);
  m.tilde = cost_of_pair(*tg, eps, tilde, simulate_openloop(tg, tilde, opts.simulation), q);
  m.eps_free = eps_free_costs(ex->outer0(), q);
  m.hat_errors = control_errors(star, hat, sol->mesh());
  m.tilde_errors = control_errors(star, tilde, sol->mesh());

  auto absdiff = [&](const Costs& c) { return Costs{std::abs(m.exact.J_u - c.J_u), std::abs(m.exact.J_v - c.J_v)}; };
  m.abs_hat = absdiff(m.hat);
  m.abs_tilde = absdiff(m.tilde);
  m.abs_eps_free = absdiff(m.eps_free);
  m.rel_hat = {relative_percent(m.exact.J_u, m.hat.J_u), relative_percent(m.exact.J_v, m.hat.J_v)};
  m.rel_tilde = {relative_percent(m.exact.J_u, m.tilde.J_u), relative_percent(m.exact.J_v, m.tilde.J_v)};
  return m;
}

std::vector<ComparisonRow> cheap_control_comparison(const GameSpec& g, const std::vector<double>& eps_grid,
                                                    const SolverOptions& opts) {
  auto solve_with = [&](double alpha, double beta) {
    GameSpec h = g;
    h.weight_u = alpha;
    h.weight_v = beta;
    return general_weight_solve(h, opts).costs;
  };
  const Costs base = solve_with(1.0, 1.0);
  if (base.J_u == 0.0 || base.J_v == 0.0) throw NumericalError("baseline cost is zero; relative comparison undefined");
  std::vector<ComparisonRow> rows;
  for (double eps : eps_grid) {
    ComparisonRow r;
    r.eps = eps;
    r.base = base;
    r.leader_cheap = eps == 1.0 ? base : solve_with(eps * eps, 1.0);
    r.follower_cheap = eps == 1.0 ? base : solve_with(1.0, eps * eps);
    r.improvement_leader = (base.J_u - r.leader_cheap.J_u) / base.J_u * 100.0;
    r.improvement_follower = (base.J_v - r.follower_cheap.J_v) / base.J_v * 100.0;
    r.deterioration_leader = (r.follower_cheap.J_u - base.J_u) / base.J_u * 100.0;
    r.deterioration_follower = (r.leader_cheap.J_v - base.J_v) / base.J_v * 100.0;
    rows.push_back(r);
  }
  return rows;
}

MetricsReport sweep(const GameSpec& g, const std::vector<double>& eps_grid, bool with_comparison,
                    const EvaluationOptions& opts) {
  MetricsReport rep;
  auto ex = Expansion::build(prepare_game(g), 1, opts.expansion);
  for (double eps : eps_grid) rep.rows.push_back(evaluate_eps(ex, eps, opts));
  if (with_comparison) rep.comparison = cheap_control_comparison(g, eps_grid, opts.solver);
  return rep;
}

FollowerResponse follower_best_response(std::shared_ptr<const TransformedGame> tg, std::function<Vec(double)> u,
                                        double eps, const SolverOptions& opts) {
  if (!(eps > 0.0)) throw InputError("follower_best_response: epsilon must be positive");
  const int n = tg->n(), s = tg->s();
  const Mat Bv = fast_input(n, s);
  const double ie = 1.0 / eps;
  // y = (z, q) with q = p / eps, p the follower costate.
  auto ode = std::make_shared<LinearOde>();
  ode->dim = 2 * n;
  ode->autonomous = tg->is_constant();
  ode->M = [tg, Bv, n, ie](double t) {
    const Blocks b = tg->at(t);
    Mat M = Mat::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = b.A;
    M.topRightCorner(n, n) = -ie * Bv * Bv.transpose();
    M.bottomLeftCorner(n, n) = -ie * b.Dv;
    M.bottomRightCorner(n, n) = -b.A.transpose();
    return M;
  };
  ode->g = [tg, u, n](double t) {
    Vec g = Vec::Zero(2 * n);
    g.head(n) = tg->at(t).Bu * u(t);
    return g;
  };

  SeparatedBc bc;
  bc.B0 = Mat::Zero(n, 2 * n);
  bc.B0.leftCols(n).setIdentity();
  bc.b0 = tg->z0();
  bc.Bf = Mat::Zero(n, 2 * n);
  bc.Bf.rightCols(n).setIdentity();
  bc.bf = Vec::Zero(n);

  MeshPlan plan;
  plan.tf = tg->tf();
  plan.hint = opts.mesh_hint;
  plan.rho = stiffness_estimate(*ode, tg->tf());
  const double lo = fast_rate_range(*tg).first;
  if (lo > 0.0) {
    plan.layer_left = plan.layer_right = layer_width(eps, opts.layer_kappa / lo, tg->tf());
  }
  const ShootingResult res = solve_shooting(ode, bc, plan, to_shooting(opts.tol_ode, opts.max_refine, opts.stages));

  FollowerResponse out;
  out.trajectory = res.trajectory;
  out.bc_residual = res.bc_residual;
  out.ode_residual = res.ode_residual;
  auto traj = std::make_shared<const DenseTrajectory>(res.trajectory);
  out.pair.u = u;
  out.pair.v = [traj, Bv, n, ie](double t) -> Vec { return -ie * Bv.transpose() * (*traj)(t).tail(n); };
  out.pair.label = "follower-response";
  out.pair.layer_eps = eps;
  return out;
}

Vec bump(int k, int dim, double t, double tf) {
  const double x = t / tf;
  const double envelope = 4.0 * x * (1.0 - x);
  Vec b(dim);
  for (int j = 0; j < dim; ++j) b(j) = envelope * std::cos(k * M_PI * x + 0.5 * j);
  return b;
}

OptimalityCheck follower_argmin_check(std::shared_ptr<const BvpSolution> sol, int count, double scale,
                                      const SimulationOptions& opts) {
  auto tg = sol->game_ptr();
  const double tf = tg->tf();
  const int s = tg->s();
  const ControlPair star = exact_pair(sol);
  OptimalityCheck out;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= count; ++k) {
    ControlPair dev = star;
    dev.v = [star, k, s, tf, scale](double t) { return (star.v(t) + scale * bump(k, s, t, tf)).eval(); };
    dev.label = "follower-deviation";
    const Costs c = cost_of_pair(*tg, sol->eps(), dev, simulate_openloop(tg, dev, opts), opts.quadrature_points);
    out.gaps.push_back(c.J_v - sol->costs.J_v);
    out.min_gap = std::min(out.min_gap, out.gaps.back());
  }
  return out;
}

OptimalityCheck leader_deviation_check(std::shared_ptr<const BvpSolution> sol, int count, double scale,
                                       const EvaluationOptions& opts) {
  auto tg = sol->game_ptr();
  const double tf = tg->tf();
  const int r = tg->r();
  OptimalityCheck out;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= count; ++k) {
    std::function<Vec(double)> u = [sol, k, r, tf, scale](double t) {
      return (sol->u(t) + scale * bump(k, r, t, tf)).eval();
    };
    const FollowerResponse resp = follower_best_response(tg, u, sol->eps(), opts.solver);
    const Costs c = cost_of_pair(*tg, sol->eps(), resp.pair, simulate_openloop(tg, resp.pair, opts.simulation),
                                 opts.simulation.quadrature_points);
    out.gaps.push_back(c.J_u - sol->costs.J_u);
    out.min_gap = std::min(out.min_gap, out.gaps.back());
  }
  return out;
}

}  // namespace cheapstack
