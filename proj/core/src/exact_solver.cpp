#include "cheapstack/exact_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cheapstack {

namespace {

double slowest_fast_rate(const TransformedGame& tg) {
  double beta = std::numeric_limits<double>::infinity();
  const int count = tg.is_constant() ? 1 : 11;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : tg.tf() * k / (count - 1);
    beta = std::min(beta, std::sqrt(std::max(min_symmetric_eigenvalue(tg.at(t).Dv2), 0.0)));
  }
  return beta;
}

MeshPlan plan_for(const LinearOde& ode, double tf, double eps, double rate, const SolverOptions& opts) {
  MeshPlan plan;
  plan.tf = tf;
  plan.rho = stiffness_estimate(ode, tf);
  plan.hint = opts.mesh_hint;
  const double w = rate > 0.0 ? layer_width(eps, opts.layer_kappa / rate, tf) : 0.0;
  plan.layer_left = w;
  plan.layer_right = w;
  return plan;
}

ShootingOptions shooting_options(const SolverOptions& opts) {
  ShootingOptions so;
  so.tol_ode = opts.tol_ode;
  so.max_refine = opts.max_refine;
  so.stages = opts.stages;
  return so;
}

SeparatedBc stackelberg_bc(int n, const Vec& z0) {
  // z and mu at t = 0, both costates lambda_u, lambda_v at t = tf.
  SeparatedBc bc;
  bc.B0 = Mat::Zero(2 * n, 4 * n);
  bc.B0.block(0, 0, n, n).setIdentity();
  bc.B0.block(n, 3 * n, n, n).setIdentity();
  bc.b0 = Vec::Zero(2 * n);
  bc.b0.head(n) = z0;
  bc.Bf = Mat::Zero(2 * n, 4 * n);
  bc.Bf.block(0, n, 2 * n, 2 * n).setIdentity();
  bc.bf = Vec::Zero(2 * n);
  return bc;
}

}  // namespace

Components Components::split(const Vec& y, int m, int s) {
  const int n = m + s;
  Components c;
  c.z1 = y.segment(0, m);
  c.z2 = y.segment(m, s);
  c.lu1 = y.segment(n, m);
  c.lu2 = y.segment(n + m, s);
  c.lv1 = y.segment(2 * n, m);
  c.lv2 = y.segment(2 * n + m, s);
  c.mu1 = y.segment(3 * n, m);
  c.mu2 = y.segment(3 * n + m, s);
  return c;
}

Vec Components::join() const {
  const Eigen::Index m = z1.size(), s = z2.size(), n = m + s;
  Vec y(4 * n);
  y << z1, z2, lu1, lu2, lv1, lv2, mu1, mu2;
  return y;
}

Vec Components::z() const {
  Vec z(z1.size() + z2.size());
  z << z1, z2;
  return z;
}

const Vec& Components::operator[](int i) const {
  switch (i) {
    case 0: return z1;
    case 1: return z2;
    case 2: return lu1;
    case 3: return lu2;
    case 4: return lv1;
    case 5: return lv2;
    case 6: return mu1;
    default: return mu2;
  }
}

Vec& Components::operator[](int i) { return const_cast<Vec&>(static_cast<const Components&>(*this)[i]); }

const char* Components::name(int i) {
  static const char* names[] = {"z1", "z2", "lambda_u1", "lambda_u2", "lambda_v1", "lambda_v2", "mu1", "mu2"};
  return names[i];
}

// ---------------------------------------------------------------------------

Mat stackelberg_matrix(const Blocks& b, double eps) {
  const int n = b.n, m = b.m, s = b.s;
  const int z1 = 0, z2 = m, lu1 = n, lu2 = n + m, lv1 = 2 * n, lv2 = 2 * n + m, mu1 = 3 * n, mu2 = 3 * n + m;
  const Mat Is = Mat::Identity(s, s);
  const double ie = 1.0 / eps;
  Mat M = Mat::Zero(4 * n, 4 * n);

  M.block(z1, z1, m, m) = b.A1;
  M.block(z1, z2, m, s) = b.A2;
  M.block(z1, lu1, m, m) = -b.Su1;
  M.block(z1, lu2, m, s) = -eps * b.Su2;

  M.block(z2, z1, s, m) = b.A3;
  M.block(z2, z2, s, s) = b.A4;
  M.block(z2, lu1, s, m) = -b.Su2.transpose();
  M.block(z2, lu2, s, s) = -eps * b.Su3;
  M.block(z2, lv2, s, s) = -ie * Is;

  M.block(lu1, z1, m, m) = -b.Du1;
  M.block(lu1, z2, m, s) = -b.Du2;
  M.block(lu1, lu1, m, m) = -b.A1.transpose();
  M.block(lu1, lu2, m, s) = -eps * b.A3.transpose();
  M.block(lu1, mu1, m, m) = b.Dv1;

  M.block(lu2, z1, s, m) = -ie * b.Du2.transpose();
  M.block(lu2, z2, s, s) = -ie * b.Du3;
  M.block(lu2, lu1, s, m) = -ie * b.A2.transpose();
  M.block(lu2, lu2, s, s) = -b.A4.transpose();
  M.block(lu2, mu2, s, s) = ie * b.Dv2;

  M.block(lv1, z1, m, m) = -b.Dv1;
  M.block(lv1, lv1, m, m) = -b.A1.transpose();
  M.block(lv1, lv2, m, s) = -eps * b.A3.transpose();

  M.block(lv2, z2, s, s) = -ie * b.Dv2;
  M.block(lv2, lv1, s, m) = -ie * b.A2.transpose();
  M.block(lv2, lv2, s, s) = -b.A4.transpose();

  M.block(mu1, mu1, m, m) = b.A1;
  M.block(mu1, mu2, m, s) = b.A2;

  M.block(mu2, lu2, s, s) = ie * Is;
  M.block(mu2, lv2, s, s) = -eps * eps * eps * b.Guv;
  M.block(mu2, mu1, s, m) = b.A3;
  M.block(mu2, mu2, s, s) = b.A4;
  return M;
}

Mat StackelbergBvp::scaled_rhs_matrix(double t) const {
  const int n = game->n(), m = game->m(), s = game->s();
  Mat K = stackelberg_matrix(game->at(t), eps);
  for (int blk = 0; blk < 4; ++blk) K.middleRows(blk * n + m, s) *= eps;
  return K;
}

StackelbergBvp assemble_bvp(std::shared_ptr<const TransformedGame> tg, double eps, const SolverOptions& opts) {
  if (!(eps > 0.0)) throw InputError("epsilon must be positive");
  StackelbergBvp bvp;
  bvp.game = tg;
  bvp.eps = eps;
  auto ode = std::make_shared<LinearOde>();
  ode->dim = 4 * tg->n();
  ode->autonomous = tg->is_constant();
  const TransformedGame* raw = tg.get();
  std::shared_ptr<const TransformedGame> keep = tg;
  ode->M = [keep, raw, eps](double t) { return stackelberg_matrix(raw->at(t), eps); };
  bvp.ode = ode;
  bvp.bc = stackelberg_bc(tg->n(), tg->z0());
  bvp.plan = plan_for(*ode, tg->tf(), eps, slowest_fast_rate(*tg), opts);
  return bvp;
}

// ---------------------------------------------------------------------------

BvpSolution::BvpSolution(std::shared_ptr<const TransformedGame> tg, double eps, DenseTrajectory traj)
    : tg_(std::move(tg)), eps_(eps), traj_(std::move(traj)) {}

Vec BvpSolution::u_from(const Components& c, double t) const {
  const Blocks b = tg_->at(t);
  return -(b.Bu1.transpose() * c.lu1 + eps_ * b.Bu2.transpose() * c.lu2) / b.alpha;
}

Vec BvpSolution::v_from(const Components& c) const { return -c.lv2 / eps_; }

Vec BvpSolution::u(double t) const { return u_from(at(t), t); }
Vec BvpSolution::v(double t) const { return v_from(at(t)); }

BvpSolution solve_linear_bvp(const StackelbergBvp& bvp, const SolverOptions& opts) {
  if (bvp.eps < opts.eps_min) {
    std::ostringstream os;
    os << "epsilon " << bvp.eps << " is below the supported minimum " << opts.eps_min;
    throw InputError(os.str());
  }
  const ShootingResult res = solve_shooting(bvp.ode, bvp.bc, bvp.plan, shooting_options(opts));
  if (res.bc_residual > opts.tol_bc) {
    std::ostringstream os;
    os << "boundary residual " << res.bc_residual << " above tolerance " << opts.tol_bc;
    throw NumericalError(os.str());
  }
  BvpSolution sol(bvp.game, bvp.eps, res.trajectory);
  sol.diagnostics.ode_residual = res.ode_residual;
  sol.diagnostics.bc_residual = res.bc_residual;
  sol.diagnostics.refinements = res.refinements;
  sol.diagnostics.mesh_size = static_cast<int>(res.trajectory.nodes().size());

  // Follower stationarity eps^2 v + Bv' lambda_v in raw costates.
  double stat = 0.0;
  for (size_t k = 0; k < sol.mesh().size(); ++k) {
    const Components c = sol.node(k);
    const Vec raw_lv2 = bvp.eps * c.lv2;
    stat = std::max(stat, (bvp.eps * bvp.eps * sol.v_from(c) + raw_lv2).cwiseAbs().maxCoeff());
  }
  sol.diagnostics.stationarity = stat;

  sol.costs = optimal_costs(sol, opts.quadrature_points);
  const Costs alt = costate_form_costs(sol, opts.quadrature_points);
  const double gu = std::abs(sol.costs.J_u - alt.J_u) / std::max(std::abs(sol.costs.J_u), 1e-300);
  const double gv = std::abs(sol.costs.J_v - alt.J_v) / std::max(std::abs(sol.costs.J_v), 1e-300);
  sol.diagnostics.costate_form_gap = (sol.costs.J_u == 0.0 && alt.J_u == 0.0) ? 0.0 : std::max(gu, gv);
  return sol;
}

BvpSolution solve_exact(std::shared_ptr<const TransformedGame> tg, double eps, const SolverOptions& opts) {
  return solve_linear_bvp(assemble_bvp(std::move(tg), eps, opts), opts);
}

ControlSamples extract_optimal_controls(const BvpSolution& sol) {
  ControlSamples out;
  for (size_t k = 0; k < sol.mesh().size(); ++k) {
    const double t = sol.mesh()[k];
    const Components c = sol.node(k);
    out.t.push_back(t);
    out.u.push_back(sol.u_from(c, t));
    out.v.push_back(sol.v_from(c));
  }
  return out;
}

Costs optimal_costs(const BvpSolution& sol, int points) {
  const TransformedGame& tg = sol.game();
  const double eps = sol.eps();
  const int m = tg.m(), s = tg.s();
  Costs c;
  c.J_u = 0.5 * sol.trajectory().integrate(
                    [&](double t, const Vec& y) {
                      const Components x = Components::split(y, m, s);
                      const Blocks b = tg.at(t);
                      const Vec z = x.z();
                      const Vec u = sol.u_from(x, t);
                      const Vec v = sol.v_from(x);
                      return z.dot(b.Du * z) + b.alpha * u.squaredNorm() + eps * eps * v.dot(b.Guv * v);
                    },
                    points);
  c.J_v = 0.5 * sol.trajectory().integrate(
                    [&](double t, const Vec& y) {
                      const Components x = Components::split(y, m, s);
                      const Blocks b = tg.at(t);
                      const Vec z = x.z();
                      const Vec u = sol.u_from(x, t);
                      const Vec v = sol.v_from(x);
                      return z.dot(b.Dv * z) + eps * eps * v.squaredNorm() + u.dot(b.Gvu * u);
                    },
                    points);
  return c;
}

Costs costate_form_costs(const BvpSolution& sol, int points) {
  const TransformedGame& tg = sol.game();
  const double eps = sol.eps();
  const int m = tg.m(), s = tg.s();
  Costs c;
  c.J_u = 0.5 * sol.trajectory().integrate(
                    [&](double t, const Vec& y) {
                      const Components x = Components::split(y, m, s);
                      const Blocks b = tg.at(t);
                      const Vec z = x.z();
                      return z.dot(b.Du * z) + x.lu1.dot(b.Su1 * x.lu1) + 2.0 * eps * x.lu1.dot(b.Su2 * x.lu2) +
                             eps * eps * x.lu2.dot(b.Su3 * x.lu2) + x.lv2.dot(b.Guv * x.lv2);
                    },
                    points);
  c.J_v = 0.5 * sol.trajectory().integrate(
                    [&](double t, const Vec& y) {
                      const Components x = Components::split(y, m, s);
                      const Blocks b = tg.at(t);
                      const Vec z = x.z();
                      const Vec w = (b.Bu1.transpose() * x.lu1 + eps * b.Bu2.transpose() * x.lu2) / b.alpha;
                      return z.dot(b.Dv * z) + x.lv2.squaredNorm() + w.dot(b.Gvu * w);
                    },
                    points);
  return c;
}

// ---------------------------------------------------------------------------

Mat fast_matrix(const Blocks& b, double eps) {
  const int s = b.s;
  const Mat I = Mat::Identity(s, s);
  Mat F = Mat::Zero(4 * s, 4 * s);
  F.block(0, 0, s, s) = eps * b.A4;
  F.block(0, s, s, s) = -eps * eps * b.Su3;
  F.block(0, 2 * s, s, s) = -I;
  F.block(s, 0, s, s) = -b.Du3;
  F.block(s, s, s, s) = -eps * b.A4.transpose();
  F.block(s, 3 * s, s, s) = b.Dv2;
  F.block(2 * s, 0, s, s) = -b.Dv2;
  F.block(2 * s, 2 * s, s, s) = -eps * b.A4.transpose();
  F.block(3 * s, s, s, s) = I;
  F.block(3 * s, 2 * s, s, s) = -std::pow(eps, 4) * b.Guv;
  F.block(3 * s, 3 * s, s, s) = eps * b.A4;
  return F;
}

SpectrumReport fast_spectrum(const TransformedGame& tg, double eps, int samples, double alpha) {
  if (eps < 0.0) throw InputError("epsilon must be non-negative");
  SpectrumReport rep;
  rep.eps = eps;
  rep.alpha = alpha;
  const int s = tg.s();
  double largest = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    SpectrumSample smp;
    smp.t = samples == 1 ? 0.0 : tg.tf() * k / (samples - 1);
    const Mat F = fast_matrix(tg.at(smp.t), eps);
    if (eps == 0.0) {
      // Block triangular in (z2, lv2 | lu2, mu2) with equal spectra: the full
      // matrix is defective, the diagonal blocks are not.
      Mat B1(2 * s, 2 * s), B2(2 * s, 2 * s);
      B1 << F.block(0, 0, s, s), F.block(0, 2 * s, s, s), F.block(2 * s, 0, s, s), F.block(2 * s, 2 * s, s, s);
      B2 << F.block(s, s, s, s), F.block(s, 3 * s, s, s), F.block(3 * s, s, s, s), F.block(3 * s, 3 * s, s, s);
      Eigen::EigenSolver<Mat> e1(B1, false), e2(B2, false);
      smp.eigenvalues.resize(4 * s);
      smp.eigenvalues << e1.eigenvalues(), e2.eigenvalues();
    } else {
      Eigen::EigenSolver<Mat> es(F, false);
      smp.eigenvalues = es.eigenvalues();
    }
    int pos = 0, neg = 0;
    double min_abs_re = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < smp.eigenvalues.size(); ++i) {
      const double re = smp.eigenvalues(i).real();
      if (re >= alpha) ++smp.above;
      if (re <= -alpha) ++smp.below;
      if (re > 0) ++pos;
      if (re < 0) ++neg;
      min_abs_re = std::min(min_abs_re, std::abs(re));
    }
    smp.split = (pos == 2 * s && neg == 2 * s) ? min_abs_re : 0.0;
    largest = std::min(largest, smp.split);
    if (smp.above != 2 * s || smp.below != 2 * s) rep.dichotomy = false;
    rep.samples.push_back(smp);
  }
  rep.largest_alpha = samples > 0 ? largest : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

Mat general_matrix(const Blocks& b, double beta) {
  const int n = b.n, m = b.m, s = b.s;
  const Mat Su = b.Bu * b.Bu.transpose() / b.alpha;
  Mat Sv = Mat::Zero(n, n);
  Sv.bottomRightCorner(s, s) = Mat::Identity(s, s) / beta;
  (void)m;
  Mat M = Mat::Zero(4 * n, 4 * n);
  M.block(0, 0, n, n) = b.A;
  M.block(0, n, n, n) = -Su;
  M.block(0, 2 * n, n, n) = -Sv;
  M.block(n, 0, n, n) = -b.Du;
  M.block(n, n, n, n) = -b.A.transpose();
  M.block(n, 3 * n, n, n) = b.Dv;
  M.block(2 * n, 0, n, n) = -b.Dv;
  M.block(2 * n, 2 * n, n, n) = -b.A.transpose();
  M.block(3 * n, n, n, n) = Sv;
  M.block(3 * n, 3 * n, n, n) = b.A;
  return M;
}

}  // namespace

Vec GeneralSolution::u(double t) const {
  const Vec y = trajectory(t);
  const int n = game->n();
  const Blocks b = game->at(t);
  return -b.Bu.transpose() * y.segment(n, n) / alpha;
}

Vec GeneralSolution::v(double t) const {
  const Vec y = trajectory(t);
  const int n = game->n(), m = game->m(), s = game->s();
  return -y.segment(2 * n + m, s) / beta;
}

GeneralSolution general_weight_solve(const GameSpec& g, const SolverOptions& opts) {
  for (int k = 0; k <= 20; ++k) {
    if (!g.Guv(g.tf * k / 20.0).isZero(0.0))
      throw InputError("unsupported configuration: general weights require Guv = 0");
  }
  GeneralSolution out;
  out.alpha = g.weight_u;
  out.beta = g.weight_v;
  out.game = prepare_game(g);
  const auto tg = out.game;
  const double beta = out.beta;
  auto ode = std::make_shared<LinearOde>();
  ode->dim = 4 * tg->n();
  ode->autonomous = tg->is_constant();
  ode->M = [tg, beta](double t) { return general_matrix(tg->at(t), beta); };

  const double eps_eff = std::sqrt(std::min({out.alpha, out.beta, 1.0}));
  if (eps_eff < opts.eps_min) throw InputError("control weight below the supported minimum");
  const MeshPlan plan = plan_for(*ode, tg->tf(), eps_eff, slowest_fast_rate(*tg), opts);
  const ShootingResult res = solve_shooting(ode, stackelberg_bc(tg->n(), tg->z0()), plan, shooting_options(opts));
  out.trajectory = res.trajectory;
  out.diagnostics.ode_residual = res.ode_residual;
  out.diagnostics.bc_residual = res.bc_residual;
  out.diagnostics.refinements = res.refinements;
  out.diagnostics.mesh_size = static_cast<int>(res.trajectory.nodes().size());

  const int n = tg->n(), m = tg->m(), s = tg->s();
  const double alpha = out.alpha;
  out.costs.J_u = 0.5 * out.trajectory.integrate(
                            [&](double t, const Vec& y) {
                              const Blocks b = tg->at(t);
                              const Vec z = y.head(n);
                              const Vec u = -b.Bu.transpose() * y.segment(n, n) / alpha;
                              return z.dot(b.Du * z) + alpha * u.squaredNorm();
                            },
                            opts.quadrature_points);
  out.costs.J_v = 0.5 * out.trajectory.integrate(
                            [&](double t, const Vec& y) {
                              const Blocks b = tg->at(t);
                              const Vec z = y.head(n);
                              const Vec u = -b.Bu.transpose() * y.segment(n, n) / alpha;
                              const Vec v = -y.segment(2 * n + m, s) / beta;
                              return z.dot(b.Dv * z) + beta * v.squaredNorm() + u.dot(b.Gvu * u);
                            },
                            opts.quadrature_points);
  return out;
}

}  // namespace cheapstack
