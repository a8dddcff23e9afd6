#include "cheapstack/asymptotics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cheapstack {

std::pair<Mat, Mat> sqrt_spd(const Mat& M) {
  if (M.rows() != M.cols()) throw InputError("sqrt_spd: matrix is not square");
  const Mat sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= definiteness_tolerance(sym))
    throw InputError("sqrt_spd: matrix is not positive definite");
  const Vec r = es.eigenvalues().cwiseSqrt();
  const Mat& V = es.eigenvectors();
  return {V * r.asDiagonal() * V.transpose(), V * r.cwiseInverse().asDiagonal() * V.transpose()};
}

Mat lyapunov_layer_integral(const Mat& S, const Mat& D) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw InputError("lyapunov_layer_integral: S is not positive definite");
  const Mat& V = es.eigenvectors();
  const Vec& l = es.eigenvalues();
  Mat Dt = V.transpose() * D * V;
  for (Eigen::Index i = 0; i < Dt.rows(); ++i)
    for (Eigen::Index j = 0; j < Dt.cols(); ++j) Dt(i, j) /= l(i) + l(j);
  return V * Dt * V.transpose();
}

namespace {

Mat spd_inverse(const Mat& M) { return M.llt().solve(Mat::Identity(M.rows(), M.cols())); }

Mat inverse_of(const SpectralBasis& b) { return b.V * b.lambda.cwiseInverse().asDiagonal() * b.V.transpose(); }

ShootingOptions shooting_opts(const ExpansionOptions& o) {
  ShootingOptions so;
  so.tol_ode = o.tol;
  so.max_refine = o.max_refine;
  so.stages = o.stages;
  return so;
}

MeshPlan slow_plan(const LinearOde& ode, double tf, const ExpansionOptions& o) {
  MeshPlan plan;
  plan.tf = tf;
  plan.rho = stiffness_estimate(ode, tf);
  plan.hint = o.mesh_hint;
  return plan;
}

SeparatedBc outer_bc(int m, const Vec& z_init, const Vec& mu_init) {
  SeparatedBc bc;
  bc.B0 = Mat::Zero(2 * m, 4 * m);
  bc.B0.block(0, 0, m, m).setIdentity();
  bc.B0.block(m, 3 * m, m, m).setIdentity();
  bc.b0.resize(2 * m);
  bc.b0 << z_init, mu_init;
  bc.Bf = Mat::Zero(2 * m, 4 * m);
  bc.Bf.block(0, m, 2 * m, 2 * m).setIdentity();
  bc.bf = Vec::Zero(2 * m);
  return bc;
}

std::pair<DenseTrajectory, OuterDiagnostics> solve_outer_bvp(std::shared_ptr<const TransformedGame> tg,
                                                             const Vec& z_init, const Vec& mu_init,
                                                             const ExpansionOptions& opts) {
  auto ode = std::make_shared<LinearOde>();
  ode->dim = 4 * tg->m();
  ode->autonomous = tg->is_constant();
  ode->M = [tg](double t) { return outer_matrix(tg->at(t)); };
  ShootingResult res;
  try {
    res = solve_shooting(ode, outer_bc(tg->m(), z_init, mu_init), slow_plan(*ode, tg->tf(), opts), shooting_opts(opts));
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("reduced outer problem: ") + e.what());
  }
  OuterDiagnostics d;
  d.ode_residual = res.ode_residual;
  d.bc_residual = res.bc_residual;
  d.mesh_size = static_cast<int>(res.trajectory.nodes().size());
  return {res.trajectory, d};
}

// Fast algebraic recovery shared by both outer orders.
void recover_fast(const Blocks& b, Components& c) {
  const Mat Dv2inv = spd_inverse(b.Dv2);
  c.z2 = -Dv2inv * b.A2.transpose() * c.lv1;
  c.mu2 = Dv2inv * (b.Du2.transpose() * c.z1 + b.Du3 * c.z2 + b.A2.transpose() * c.lu1);
}

Components split_slow(const Vec& w, int m, int s) {
  Components c;
  c.z1 = w.segment(0, m);
  c.lu1 = w.segment(m, m);
  c.lv1 = w.segment(2 * m, m);
  c.mu1 = w.segment(3 * m, m);
  c.z2 = Vec::Zero(s);
  c.mu2 = Vec::Zero(s);
  c.lu2 = Vec::Zero(s);
  c.lv2 = Vec::Zero(s);
  return c;
}

struct OuterPoint {
  Components c;
  Vec dz2, dmu2;
};

OuterPoint outer_point(const TransformedGame& tg, const Vec& w, double t) {
  const int m = tg.m(), s = tg.s();
  const Blocks b = tg.at(t);
  OuterPoint p;
  p.c = split_slow(w, m, s);
  recover_fast(b, p.c);
  const Components d = split_slow(outer_matrix(b) * w, m, s);
  const Mat Dv2inv = spd_inverse(b.Dv2);
  const Vec A2tlv = b.A2.transpose() * p.c.lv1;
  p.dz2 = Dv2inv * (b.dDv2 * (Dv2inv * A2tlv)) - Dv2inv * (b.dA2.transpose() * p.c.lv1) -
          Dv2inv * (b.A2.transpose() * d.lv1);
  const Vec dX = b.dDu2.transpose() * p.c.z1 + b.Du2.transpose() * d.z1 + b.dDu3 * p.c.z2 + b.Du3 * p.dz2 +
                 b.dA2.transpose() * p.c.lu1 + b.A2.transpose() * d.lu1;
  p.dmu2 = Dv2inv * (dX - b.dDv2 * p.c.mu2);
  return p;
}

}  // namespace

Mat outer_matrix(const Blocks& b) {
  const int m = b.m;
  const Mat Dv2inv = spd_inverse(b.Dv2);
  const Mat K = Dv2inv * b.A2.transpose();  // s x m
  const Mat W = b.A2 * K;
  Mat M = Mat::Zero(4 * m, 4 * m);
  M.block(0, 0, m, m) = b.A1;
  M.block(0, m, m, m) = -b.Su1;
  M.block(0, 2 * m, m, m) = -W;
  M.block(m, 0, m, m) = -b.Du1;
  M.block(m, m, m, m) = -b.A1.transpose();
  M.block(m, 2 * m, m, m) = b.Du2 * K;
  M.block(m, 3 * m, m, m) = b.Dv1;
  M.block(2 * m, 0, m, m) = -b.Dv1;
  M.block(2 * m, 2 * m, m, m) = -b.A1.transpose();
  M.block(3 * m, 0, m, m) = b.A2 * Dv2inv * b.Du2.transpose();
  M.block(3 * m, m, m, m) = W;
  M.block(3 * m, 2 * m, m, m) = -K.transpose() * b.Du3 * K;
  M.block(3 * m, 3 * m, m, m) = b.A1;
  return M;
}

// ---------------------------------------------------------------------------

OuterZero::OuterZero(std::shared_ptr<const TransformedGame> tg, DenseTrajectory w, OuterDiagnostics diag)
    : tg_(std::move(tg)), w_(std::move(w)), diag_(diag) {}

Components OuterZero::from_slow(double t, const Vec& w) const {
  Components c = split_slow(w, tg_->m(), tg_->s());
  recover_fast(tg_->at(t), c);
  return c;
}

Components OuterZero::at(double t) const { return from_slow(t, w_(t)); }
Vec OuterZero::dz2(double t) const { return outer_point(*tg_, w_(t), t).dz2; }
Vec OuterZero::dmu2(double t) const { return outer_point(*tg_, w_(t), t).dmu2; }

Vec OuterZero::lv21(double t) const {
  const OuterPoint p = outer_point(*tg_, w_(t), t);
  const Blocks b = tg_->at(t);
  return b.A3 * p.c.z1 + b.A4 * p.c.z2 - b.Su2.transpose() * p.c.lu1 - p.dz2;
}

Vec OuterZero::lu21(double t) const {
  const OuterPoint p = outer_point(*tg_, w_(t), t);
  const Blocks b = tg_->at(t);
  return p.dmu2 - b.A3 * p.c.mu1 - b.A4 * p.c.mu2;
}

OuterFirst::OuterFirst(std::shared_ptr<const OuterZero> zero, DenseTrajectory w, OuterDiagnostics diag)
    : zero_(std::move(zero)), w_(std::move(w)), diag_(diag) {}

Components OuterFirst::at(double t) const {
  const TransformedGame& tg = zero_->game();
  Components c = split_slow(w_(t), tg.m(), tg.s());
  recover_fast(tg.at(t), c);
  c.lu2 = zero_->lu21(t);
  c.lv2 = zero_->lv21(t);
  return c;
}

std::shared_ptr<const OuterZero> solve_outer_zero(std::shared_ptr<const TransformedGame> tg,
                                                  const ExpansionOptions& opts) {
  const int m = tg->m();
  auto [w, d] = solve_outer_bvp(tg, tg->z0().head(m), Vec::Zero(m), opts);
  return std::make_shared<OuterZero>(tg, std::move(w), d);
}

// ---------------------------------------------------------------------------

ReducedOcpReport reduced_ocp_check(const OuterZero& outer, const ExpansionOptions& opts) {
  const TransformedGame& tg = outer.game();
  const int m = tg.m();
  const double tf = tg.tf();
  struct Data {
    Mat A1, W, Dv1, Su1, Bu1, Q;
    double alpha;
  };
  auto data = [&tg, m](double t) {
    const Blocks b = tg.at(t);
    const Mat Dv2inv = spd_inverse(b.Dv2);
    Data d;
    d.A1 = b.A1;
    d.W = b.A2 * Dv2inv * b.A2.transpose();
    d.Dv1 = b.Dv1;
    d.Su1 = b.Bu1 * b.Bu1.transpose() / b.alpha;
    d.Bu1 = b.Bu1;
    d.alpha = b.alpha;
    d.Q = Mat::Zero(2 * m, 2 * m);
    d.Q.block(0, 0, m, m) = b.Du1;
    d.Q.block(0, m, m, m) = -b.Du2 * Dv2inv * b.A2.transpose();
    d.Q.block(m, 0, m, m) = d.Q.block(0, m, m, m).transpose();
    d.Q.block(m, m, m, m) = b.A2 * Dv2inv * b.Du3 * Dv2inv * b.A2.transpose();
    return d;
  };

  // Hamiltonian system in (z, lambda_v, p, q); p, q adjoint to z, lambda_v.
  auto ham = std::make_shared<LinearOde>();
  ham->dim = 4 * m;
  ham->autonomous = tg.is_constant();
  ham->M = [data, m](double t) {
    const Data d = data(t);
    const Mat Q12 = d.Q.block(0, m, m, m), Q22 = d.Q.block(m, m, m, m);
    Mat H = Mat::Zero(4 * m, 4 * m);
    H.block(0, 0, m, m) = d.A1;
    H.block(0, m, m, m) = -d.W;
    H.block(0, 2 * m, m, m) = -d.Su1;
    H.block(m, 0, m, m) = -d.Dv1;
    H.block(m, m, m, m) = -d.A1.transpose();
    H.block(2 * m, 0, m, m) = -d.Q.block(0, 0, m, m);
    H.block(2 * m, m, m, m) = -Q12;
    H.block(2 * m, 2 * m, m, m) = -d.A1.transpose();
    H.block(2 * m, 3 * m, m, m) = d.Dv1;
    H.block(3 * m, 0, m, m) = -Q12.transpose();
    H.block(3 * m, m, m, m) = -Q22;
    H.block(3 * m, 2 * m, m, m) = d.W;
    H.block(3 * m, 3 * m, m, m) = d.A1;
    return H;
  };
  SeparatedBc hbc;
  hbc.B0 = Mat::Zero(2 * m, 4 * m);
  hbc.B0.block(0, 0, m, m).setIdentity();
  hbc.B0.block(m, 3 * m, m, m).setIdentity();
  hbc.b0 = Vec::Zero(2 * m);
  hbc.b0.head(m) = tg.z0().head(m);
  hbc.Bf = Mat::Zero(2 * m, 4 * m);
  hbc.Bf.block(0, m, m, m).setIdentity();
  hbc.Bf.block(m, 2 * m, m, m).setIdentity();
  hbc.bf = Vec::Zero(2 * m);
  const ShootingResult hres = solve_shooting(ham, hbc, slow_plan(*ham, tf, opts), shooting_opts(opts));
  const DenseTrajectory htraj = hres.trajectory;
  auto u_bar = [htraj, data, m](double t) {
    const Data d = data(t);
    return Vec(-d.Bu1.transpose() * htraj(t).segment(2 * m, m) / d.alpha);
  };

  // State problem driven by u_bar*.
  auto st = std::make_shared<LinearOde>();
  st->dim = 2 * m;
  st->autonomous = false;
  st->M = [data, m](double t) {
    const Data d = data(t);
    Mat F = Mat::Zero(2 * m, 2 * m);
    F.block(0, 0, m, m) = d.A1;
    F.block(0, m, m, m) = -d.W;
    F.block(m, 0, m, m) = -d.Dv1;
    F.block(m, m, m, m) = -d.A1.transpose();
    return F;
  };
  st->g = [data, u_bar, m](double t) {
    Vec g = Vec::Zero(2 * m);
    g.head(m) = data(t).Bu1 * u_bar(t);
    return g;
  };
  SeparatedBc sbc;
  sbc.B0 = Mat::Zero(m, 2 * m);
  sbc.B0.block(0, 0, m, m).setIdentity();
  sbc.b0 = tg.z0().head(m);
  sbc.Bf = Mat::Zero(m, 2 * m);
  sbc.Bf.block(0, m, m, m).setIdentity();
  sbc.bf = Vec::Zero(m);
  const ShootingResult sres = solve_shooting(st, sbc, slow_plan(*st, tf, opts), shooting_opts(opts));

  ReducedOcpReport rep;
  rep.J_star = 0.5 * sres.trajectory.integrate(
                         [&](double t, const Vec& x) {
                           const Data d = data(t);
                           const Vec u = u_bar(t);
                           return x.dot(d.Q * x) + d.alpha * u.squaredNorm();
                         },
                         opts.quadrature_points);
  rep.J_outer = eps_free_costs(outer, opts.quadrature_points).J_u;
  rep.min_state_form = std::numeric_limits<double>::infinity();
  const int samples = 201;
  for (int k = 0; k < samples; ++k) {
    const double t = tf * k / (samples - 1);
    const Data d = data(t);
    const Components c = outer.at(t);
    const Vec tilde = -d.Bu1.transpose() * c.lu1 / d.alpha;
    rep.control_gap = std::max(rep.control_gap, (u_bar(t) - tilde).cwiseAbs().maxCoeff());
    const Vec x = sres.trajectory(t);
    rep.min_state_form = std::min(rep.min_state_form, x.dot(d.Q * x));
  }
  return rep;
}

// ---------------------------------------------------------------------------

LeftLayerZero left_layer_zero(const OuterZero& outer, const Vec& z02) {
  const TransformedGame& tg = outer.game();
  const Blocks b = tg.at(0.0);
  LeftLayerZero L;
  L.basis = SpectralBasis::make(sqrt_spd(b.Dv2).first);
  const Mat& S = L.basis->S;
  const Mat Sinv = inverse_of(*L.basis);
  const Components o = outer.at(0.0);
  L.delta = z02 - o.z2;
  L.P = lyapunov_layer_integral(S, b.Du3);
  L.fast.z2 = ExpPoly::exp_times(L.basis, L.delta);
  L.fast.lv2 = S * L.fast.z2;
  L.zeta = (-b.Du3 * L.fast.z2).solve_growing();
  L.eta = (0.5 * Sinv * b.Du3 * L.fast.z2).solve_decaying(-o.mu2 - 0.5 * Sinv * L.zeta(0.0));
  L.fast.lu2 = -S * L.eta + L.zeta * 0.5;
  L.fast.mu2 = L.eta + (0.5 * Sinv) * L.zeta;
  L.beta = L.basis->min_rate();
  return L;
}

LeftLayerSlow left_layer_first_slow(const TransformedGame& tg, const LeftLayerZero& l0) {
  const Blocks b = tg.at(0.0);
  const ExpPoly tz = l0.fast.z2.tail();
  LeftLayerSlow s;
  s.z1 = -b.A2 * tz;
  s.lu1 = b.Du2 * tz;
  s.mu1 = -b.A2 * l0.fast.mu2.tail();
  return s;
}

std::shared_ptr<const OuterFirst> solve_outer_first(std::shared_ptr<const OuterZero> outer, const LeftLayerZero& l0,
                                                    const ExpansionOptions& opts) {
  const TransformedGame& tg = outer->game();
  const Blocks b = tg.at(0.0);
  const Vec z_init = b.A2 * l0.fast.z2.integral();
  const Vec mu_init = b.A2 * l0.mu2_integral();
  auto [w, d] = solve_outer_bvp(outer->game_ptr(), z_init, mu_init, opts);
  return std::make_shared<OuterFirst>(std::move(outer), std::move(w), d);
}

LeftLayerFirst left_layer_first_fast(const TransformedGame& tg, const OuterFirst& outer1, const LeftLayerZero& l0,
                                     const LeftLayerSlow& slow) {
  const Blocks b = tg.at(0.0);
  const Mat& S = l0.basis->S;
  const Mat Sinv = inverse_of(*l0.basis);
  const LayerFast& z = l0.fast;
  const ExpPoly xz = z.z2.times_x();
  const ExpPoly xmu = z.mu2.times_x();

  // Order-one forcing of the layer system in (z2, lambda_v2, mu2, lambda_u2).
  const ExpPoly Fz = b.A4 * z.z2;
  const ExpPoly Fv = -(b.dDv2 * xz) - b.A4.transpose() * z.lv2;
  const ExpPoly Fmu = b.A4 * z.mu2;
  const ExpPoly Fu = -(b.Du2.transpose() * slow.z1) - b.dDu3 * xz - b.A2.transpose() * slow.lu1 -
                     b.A4.transpose() * z.lu2 + b.dDv2 * xmu;

  LeftLayerFirst L;
  L.fx = (Fz - Sinv * Fv) * 0.5;
  L.fy = S * Fz + Fv;
  L.feta = (Fmu - Sinv * Fu) * 0.5;
  L.fzeta = S * Fmu + Fu;

  const Components o1 = outer1.at(0.0);
  L.x = L.fx.solve_growing();
  L.y = L.fy.solve_decaying(2.0 * S * (-o1.z2 - L.x(0.0)));
  const ExpPoly geta = (0.5 * Sinv * b.Du3) * L.x + (0.25 * Sinv * b.Du3 * Sinv) * L.y + L.feta;
  const ExpPoly gzeta = -(b.Du3 * L.x) - (0.5 * b.Du3 * Sinv) * L.y + L.fzeta;
  L.zeta = gzeta.solve_growing();
  L.eta = geta.solve_decaying(-o1.mu2 - 0.5 * Sinv * L.zeta(0.0));

  L.fast.z2 = L.x + (0.5 * Sinv) * L.y;
  L.fast.lv2 = -S * L.x + L.y * 0.5;
  L.fast.lu2 = -S * L.eta + L.zeta * 0.5;
  L.fast.mu2 = L.eta + (0.5 * Sinv) * L.zeta;
  return L;
}

RightLayerFirst right_layer_first_fast(const OuterZero& outer) {
  const TransformedGame& tg = outer.game();
  const double tf = tg.tf();
  const Blocks b = tg.at(tf);
  RightLayerFirst R;
  R.basis = SpectralBasis::make(sqrt_spd(b.Dv2).first);
  const Mat& S = R.basis->S;
  const Mat Sinv = inverse_of(*R.basis);
  const Vec lv21 = outer.lv21(tf);
  const Vec lu21 = outer.lu21(tf);
  R.x = ExpPoly::exp_times(R.basis, Sinv * lv21);
  R.eta = ((-0.5 * Sinv * b.Du3) * R.x).solve_growing();
  R.zeta = (b.Du3 * R.x).solve_decaying(2.0 * (S * R.eta(0.0) - lu21));
  R.fast.z2 = R.x;
  R.fast.lv2 = -S * R.x;
  R.fast.lu2 = -S * R.eta + R.zeta * 0.5;
  R.fast.mu2 = R.eta + (0.5 * Sinv) * R.zeta;
  R.beta = R.basis->min_rate();
  return R;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Expansion> Expansion::build(std::shared_ptr<const TransformedGame> tg, int order,
                                                  const ExpansionOptions& opts) {
  if (order != 0 && order != 1) throw InputError("expansion order must be 0 or 1");
  std::shared_ptr<Expansion> ex(new Expansion());
  ex->tg_ = tg;
  ex->order_ = order;
  ex->outer0_ = solve_outer_zero(tg, opts);
  ex->left0_ = left_layer_zero(*ex->outer0_, tg->z0().tail(tg->s()));
  if (order == 1) {
    ex->left_slow_ = left_layer_first_slow(*tg, ex->left0_);
    ex->outer1_ = solve_outer_first(ex->outer0_, ex->left0_, opts);
    ex->left1_ = left_layer_first_fast(*tg, *ex->outer1_, ex->left0_, ex->left_slow_);
    ex->right1_ = right_layer_first_fast(*ex->outer0_);
  }
  return ex;
}

Components Expansion::compose(double t, double eps) const {
  if (!(t >= 0.0 && t <= tg_->tf())) throw InputError("compose: t outside [0, tf]");
  if (eps < 0.0) throw InputError("compose: negative epsilon");
  Components c = outer0_->at(t);
  if (eps > 0.0) {
    const double xi = t / eps;
    c.z2 += left0_.fast.z2(xi);
    c.lu2 += left0_.fast.lu2(xi);
    c.lv2 += left0_.fast.lv2(xi);
    c.mu2 += left0_.fast.mu2(xi);
  }
  if (order_ == 0 || eps == 0.0) return c;

  const double xi = t / eps;
  const double sg = (tg_->tf() - t) / eps;
  const Components o1 = outer1_->at(t);
  const LayerFast& L = left1_.fast;
  const LayerFast& R = right1_.fast;
  c.z1 += eps * (o1.z1 + left_slow_.z1(xi));
  c.z2 += eps * (o1.z2 + L.z2(xi) + R.z2(sg));
  c.lu1 += eps * (o1.lu1 + left_slow_.lu1(xi));
  c.lu2 += eps * (o1.lu2 + L.lu2(xi) + R.lu2(sg));
  c.lv1 += eps * o1.lv1;
  c.lv2 += eps * (o1.lv2 + L.lv2(xi) + R.lv2(sg));
  c.mu1 += eps * (o1.mu1 + left_slow_.mu1(xi));
  c.mu2 += eps * (o1.mu2 + L.mu2(xi) + R.mu2(sg));
  return c;
}

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

nlohmann::json basis_json(const SpectralBasis& b) {
  return {{"S", mat_json(b.S)}, {"eigenvalues", vec_json(b.lambda)}, {"eigenvectors", mat_json(b.V)}, {"rates", b.rates}};
}

nlohmann::json fast_json(const LayerFast& f) {
  return {{"z2", f.z2.to_json()}, {"lambda_u2", f.lu2.to_json()}, {"lambda_v2", f.lv2.to_json()}, {"mu2", f.mu2.to_json()}};
}

nlohmann::json outer_json(const std::vector<double>& mesh, const std::function<Components(double)>& at) {
  nlohmann::json j;
  for (int i = 0; i < Components::kCount; ++i) j[Components::name(i)] = nlohmann::json::array();
  for (double t : mesh) {
    const Components c = at(t);
    for (int i = 0; i < Components::kCount; ++i) j[Components::name(i)].push_back(vec_json(c[i]));
  }
  return j;
}

}  // namespace

nlohmann::json Expansion::dump(int mesh_points) const {
  std::vector<double> mesh(static_cast<size_t>(std::max(mesh_points, 2)));
  for (size_t k = 0; k < mesh.size(); ++k) mesh[k] = tg_->tf() * static_cast<double>(k) / (mesh.size() - 1);
  nlohmann::json j;
  j["order"] = order_;
  j["tf"] = tg_->tf();
  j["n"] = tg_->n();
  j["s"] = tg_->s();
  j["z0"] = vec_json(tg_->z0());
  j["mesh"] = mesh;
  j["outer0"] = outer_json(mesh, [this](double t) { return outer0_->at(t); });
  j["left0"] = {{"basis", basis_json(*left0_.basis)},
                {"delta", vec_json(left0_.delta)},
                {"beta", left0_.beta},
                {"fast", fast_json(left0_.fast)}};
  if (order_ == 1) {
    j["outer1"] = outer_json(mesh, [this](double t) { return outer1_->at(t); });
    j["left_slow1"] = {{"z1", left_slow_.z1.to_json()}, {"lambda_u1", left_slow_.lu1.to_json()}, {"mu1", left_slow_.mu1.to_json()}};
    j["left1"] = {{"fast", fast_json(left1_.fast)}};
    j["right1"] = {{"basis", basis_json(*right1_.basis)},
                   {"beta", right1_.beta},
                   {"coordinate", "sigma = (tf - t) / eps"},
                   {"fast", fast_json(right1_.fast)}};
  }
  return j;
}

std::pair<Vec, Vec> hat_controls(const Expansion& ex, double t, double eps) {
  if (!(eps > 0.0)) throw InputError("hat_controls: epsilon must be positive");
  const Components c = ex.compose(t, eps);
  const Blocks b = ex.game().at(t);
  Vec u = -(b.Bu1.transpose() * c.lu1 + eps * b.Bu2.transpose() * c.lu2) / b.alpha;
  Vec v = -c.lv2 / eps;
  return {u, v};
}

std::pair<Vec, Vec> tilde_controls(const Expansion& ex, double t, double eps) {
  if (!(eps > 0.0)) throw InputError("tilde_controls: epsilon must be positive");
  const Components o = ex.outer0().at(t);
  const Blocks b = ex.game().at(t);
  Vec u = -b.Bu1.transpose() * o.lu1 / b.alpha;
  Vec v = -ex.left0().fast.lv2(t / eps) / eps - ex.outer0().lv21(t);
  return {u, v};
}

Costs eps_free_costs(const OuterZero& outer, int points) {
  const TransformedGame& tg = outer.game();
  Costs c;
  c.J_u = 0.5 * outer.trajectory().integrate(
                    [&](double t, const Vec& w) {
                      const Components o = outer.from_slow(t, w);
                      const Blocks b = tg.at(t);
                      const Vec z = o.z();
                      return z.dot(b.Du * z) + o.lu1.dot(b.Su1 * o.lu1);
                    },
                    points);
  c.J_v = 0.5 * outer.trajectory().integrate(
                    [&](double t, const Vec& w) {
                      const Components o = outer.from_slow(t, w);
                      const Blocks b = tg.at(t);
                      const Vec z = o.z();
                      const Vec u = -b.Bu1.transpose() * o.lu1 / b.alpha;
                      return z.dot(b.Dv * z) + u.dot(b.Gvu * u);
                    },
                    points);
  return c;
}

}  // namespace cheapstack
