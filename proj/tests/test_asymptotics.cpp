#include "support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

using namespace cheapstack;
using namespace testing_support;

namespace {

// (z2, lu2, lv2, mu2), the ordering of fast_matrix.
Vec stack(const LayerFast& f, double x) {
  Vec w(4 * f.z2.dim());
  w << f.z2(x), f.lu2(x), f.lv2(x), f.mu2(x);
  return w;
}

Vec stack_derivative(const LayerFast& f, double x) {
  Vec w(4 * f.z2.dim());
  w << f.z2.derivative()(x), f.lu2.derivative()(x), f.lv2.derivative()(x), f.mu2.derivative()(x);
  return w;
}

// 50 stretched check points on [0, 20], denser near the boundary.
std::vector<double> layer_points() {
  std::vector<double> xs;
  for (int k = 0; k < 50; ++k) {
    const double u = k / 49.0;
    xs.push_back(20.0 * u * u);
  }
  return xs;
}

// Uniform grid plus refined points in both eps-layers.
std::vector<double> error_grid(double tf, double eps) {
  std::vector<double> ts;
  for (int k = 0; k <= 2000; ++k) ts.push_back(tf * k / 2000);
  for (int k = 0; k <= 400; ++k) {
    ts.push_back(std::min(tf, 12.0 * eps * k / 400));
    ts.push_back(std::max(0.0, tf - 12.0 * eps * k / 400));
  }
  return ts;
}

std::array<double, 8> component_errors(const Expansion& ex, const BvpSolution& sol) {
  std::array<double, 8> e{};
  for (double t : error_grid(ex.game().tf(), sol.eps())) {
    const Components c = sol.at(t), a = ex.compose(t, sol.eps());
    for (int i = 0; i < 8; ++i) e[i] = std::max(e[i], (c[i] - a[i]).cwiseAbs().maxCoeff());
  }
  return e;
}

Vec ode_fd(const std::function<Vec(double)>& f, double t, double h, double tf) {
  const double a = std::max(0.0, t - h), b = std::min(tf, t + h);
  return (f(b) - f(a)) / (b - a);
}

}  // namespace

TEST(Asymptotics, SqrtSpd) {
  Mat M(3, 3);
  M << 4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0;
  const auto [R, Ri] = sqrt_spd(M);
  EXPECT_LT((R * R - M).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((R * Ri - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((R - R.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(sqrt_spd(-M), InputError);
  EXPECT_NEAR(sqrt_spd(Mat::Constant(1, 1, 1.8)).first(0, 0), 1.3416407864998738, 1e-15);
}

TEST(Asymptotics, LyapunovIdentityCase) {
  Mat D(2, 2);
  D << 1.0, 0.3, 0.3, 2.0;
  EXPECT_LT((lyapunov_layer_integral(Mat::Identity(2, 2), D) - 0.5 * D).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Asymptotics, LyapunovMatchesTruncatedQuadrature) {
  Mat S(3, 3), D(3, 3);
  S << 2.0, 0.3, 0.1, 0.3, 1.2, -0.2, 0.1, -0.2, 0.8;
  D << 1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 0.3;
  const Mat P = lyapunov_layer_integral(S, D);
  EXPECT_LT((S * P + P * S - D).cwiseAbs().maxCoeff(), 1e-13);
  const Mat Q = integrate_matrix([&](double s) { return Mat(expm(-S * s) * D * expm(-S * s)); }, 0.0, 60.0, 600);
  EXPECT_LT((P - Q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Asymptotics, LayerLyapunovMatchesQuadrature) {
  const auto ex = supply_chain_expansion();
  const auto& L = ex->left0();
  const Mat& S = L.basis->S;
  const Mat D = ex->game().at(0.0).Du3;
  const Mat Q = integrate_matrix([&](double s) { return Mat(expm(-S * s) * D * expm(-S * s)); }, 0.0, 60.0, 600);
  EXPECT_LT((L.P - Q).cwiseAbs().maxCoeff(), 1e-10);
  const Mat I = integrate_matrix([&](double s) { return Mat(L.fast.mu2(s)); }, 0.0, 60.0, 600);
  EXPECT_LT((L.mu2_integral() - I).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Asymptotics, OuterAlgebraicRowsVanish) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto outer = solve_outer_zero(tg);
    double worst = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double t = tg->tf() * k / 100;
      const Components c = outer->at(t);
      const Blocks b = tg->at(t);
      const Vec r4 = -b.Du2.transpose() * c.z1 - b.Du3 * c.z2 - b.A2.transpose() * c.lu1 + b.Dv2 * c.mu2;
      const Vec r6 = -b.Dv2 * c.z2 - b.A2.transpose() * c.lv1;
      worst = std::max({worst, r4.cwiseAbs().maxCoeff(), r6.cwiseAbs().maxCoeff()});
      EXPECT_EQ(c.lu2.cwiseAbs().maxCoeff() + c.lv2.cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_LE(worst, 1e-10);
  }
}

TEST(Asymptotics, OuterSlowRowsHold) {
  // Slow rows of the full system with eps = 0 and the recovered fast parts.
  const auto tg = time_varying();
  const auto outer = solve_outer_zero(tg);
  const double tf = tg->tf(), h = 1e-5;
  for (double t : {0.1, 0.6, 1.2}) {
    const Components c = outer->at(t);
    const Blocks b = tg->at(t);
    auto comp = [&](int i) { return [&, i](double s) { return Vec(outer->at(s)[i]); }; };
    const Vec dz1 = ode_fd(comp(0), t, h, tf), dlu1 = ode_fd(comp(2), t, h, tf);
    const Vec dlv1 = ode_fd(comp(4), t, h, tf), dmu1 = ode_fd(comp(6), t, h, tf);
    EXPECT_LT((dz1 - (b.A1 * c.z1 + b.A2 * c.z2 - b.Su1 * c.lu1)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((dlu1 - (-b.Du1 * c.z1 - b.Du2 * c.z2 - b.A1.transpose() * c.lu1 + b.Dv1 * c.mu1)).cwiseAbs().maxCoeff(),
              1e-8);
    EXPECT_LT((dlv1 - (-b.Dv1 * c.z1 - b.A1.transpose() * c.lv1)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((dmu1 - (b.A1 * c.mu1 + b.A2 * c.mu2)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Asymptotics, OuterBoundaryConditions) {
  const auto tg = time_varying();
  const auto outer = solve_outer_zero(tg);
  const Components c0 = outer->at(0.0), cf = outer->at(tg->tf());
  EXPECT_LT((c0.z1 - tg->z0().head(tg->m())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(c0.mu1.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(cf.lu1.cwiseAbs().maxCoeff() + cf.lv1.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Asymptotics, AlgebraicDerivativesMatchCentralDifference) {
  const auto tg = time_varying();
  const auto outer = solve_outer_zero(tg);
  const double h = 1e-6 * tg->tf();
  for (double t : {0.2, 0.75, 1.3}) {
    const Vec fz = (outer->at(t + h).z2 - outer->at(t - h).z2) / (2 * h);
    const Vec fm = (outer->at(t + h).mu2 - outer->at(t - h).mu2) / (2 * h);
    EXPECT_LT((outer->dz2(t) - fz).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT((outer->dmu2(t) - fm).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Asymptotics, FirstOrderFastOuterTerms) {
  // Order-eps balance of the z2 and mu2 rows.
  const auto tg = time_varying();
  const auto outer = solve_outer_zero(tg);
  for (double t : {0.0, 0.5, 1.5}) {
    const Components c = outer->at(t);
    const Blocks b = tg->at(t);
    EXPECT_LT((outer->lv21(t) - (b.A3 * c.z1 + b.A4 * c.z2 - b.Su2.transpose() * c.lu1 - outer->dz2(t)))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    EXPECT_LT((outer->lu21(t) - (outer->dmu2(t) - b.A3 * c.mu1 - b.A4 * c.mu2)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Asymptotics, ReducedOptimalControlProblem) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto outer = solve_outer_zero(tg);
    const auto rep = reduced_ocp_check(*outer);
    EXPECT_NEAR(rep.J_star, rep.J_outer, 1e-8);
    EXPECT_LE(rep.control_gap, 1e-8);
    EXPECT_GE(rep.min_state_form, -1e-12);
    EXPECT_NEAR(eps_free_costs(*outer).J_u, rep.J_star, 1e-8);
  }
}

TEST(Asymptotics, SupplyChainOuterStructure) {
  // Dv1 = 0 here, so lambda_v1,0 and hence z2,0 vanish identically.
  const auto ex = supply_chain_expansion();
  for (double t : {0.0, 1.0, 2.0}) {
    const Components c = ex->outer0().at(t);
    EXPECT_LT(c.lv1.cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(c.z2.cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_NEAR(eps_free_costs(ex->outer0()).J_u, 2.03372357, 5e-8);
}

TEST(Asymptotics, LeftLayerZeroSatisfiesLayerSystem) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    const Mat Phi = fast_matrix(tg->at(0.0), 0.0);
    for (double x : layer_points())
      EXPECT_LT((stack_derivative(ex->left0().fast, x) - Phi * stack(ex->left0().fast, x)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Asymptotics, LeftLayerFirstSatisfiesForcedLayerSystem) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    const Blocks b = tg->at(0.0);
    const Mat Phi = fast_matrix(b, 0.0);
    const LayerFast& L0 = ex->left0().fast;
    const LeftLayerSlow& sl = ex->left_slow();
    const int s = tg->s();
    for (double x : layer_points()) {
      // Order-eps part of eps * M(eps x, eps) applied to the zero-order layer.
      Vec F(4 * s);
      F.segment(0, s) = b.A4 * L0.z2(x);
      F.segment(s, s) = -b.Du2.transpose() * sl.z1(x) - x * b.dDu3 * L0.z2(x) - b.A2.transpose() * sl.lu1(x) -
                        b.A4.transpose() * L0.lu2(x) + x * b.dDv2 * L0.mu2(x);
      F.segment(2 * s, s) = -x * b.dDv2 * L0.z2(x) - b.A4.transpose() * L0.lv2(x);
      F.segment(3 * s, s) = b.A4 * L0.mu2(x);
      const LayerFast& L1 = ex->left1().fast;
      EXPECT_LT((stack_derivative(L1, x) - Phi * stack(L1, x) - F).cwiseAbs().maxCoeff(), 1e-9) << x;
    }
  }
}

TEST(Asymptotics, LeftLayerModesSatisfyTheirEquations) {
  const auto ex = supply_chain_expansion();
  const auto& L = ex->left1();
  const Mat& S = ex->left0().basis->S;
  for (double x : layer_points()) {
    EXPECT_LT((L.x.derivative()(x) - S * L.x(x) - L.fx(x)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((L.y.derivative()(x) + S * L.y(x) - L.fy(x)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Asymptotics, LeftSlowCorrections) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    const Blocks b = tg->at(0.0);
    const LayerFast& L0 = ex->left0().fast;
    const LeftLayerSlow& sl = ex->left_slow();
    for (double x : layer_points()) {
      EXPECT_LT((sl.z1.derivative()(x) - b.A2 * L0.z2(x)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((sl.lu1.derivative()(x) + b.Du2 * L0.z2(x)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((sl.mu1.derivative()(x) - b.A2 * L0.mu2(x)).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_LT(sl.z1(60.0).cwiseAbs().maxCoeff() + sl.lu1(60.0).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Asymptotics, RightLayerSatisfiesLayerSystem) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    const Mat Phi = fast_matrix(tg->at(tg->tf()), 0.0);
    const LayerFast& R = ex->right1().fast;
    for (double x : layer_points())
      EXPECT_LT((stack_derivative(R, x) + Phi * stack(R, x)).cwiseAbs().maxCoeff(), 1e-9) << x;
  }
}

TEST(Asymptotics, LayerInitialValues) {
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    const int m = tg->m(), s = tg->s();
    const Components o0 = ex->outer0().at(0.0), o1 = ex->outer1().at(0.0);
    const LayerFast &L0 = ex->left0().fast, &L1 = ex->left1().fast;
    EXPECT_LT((o0.z2 + L0.z2(0.0) - tg->z0().tail(s)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o0.mu2 + L0.mu2(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o1.z1 + ex->left_slow().z1(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o1.mu1 + ex->left_slow().mu1(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o1.z2 + L1.z2(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o1.mu2 + L1.mu2(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    const double tf = tg->tf();
    const LayerFast& R = ex->right1().fast;
    EXPECT_LT((ex->outer0().lv21(tf) + R.lv2(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ex->outer0().lu21(tf) + R.lu2(0.0)).cwiseAbs().maxCoeff(), 1e-12);
    (void)m;
  }
}

TEST(Asymptotics, CompositeSatisfiesBoundaryConditions) {
  const auto tg = time_varying();
  const auto ex = Expansion::build(tg, 1);
  const double eps = 0.02;
  const Components c0 = ex->compose(0.0, eps), cf = ex->compose(tg->tf(), eps);
  EXPECT_LT((c0.z() - tg->z0()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(c0.mu1.cwiseAbs().maxCoeff() + c0.mu2.cwiseAbs().maxCoeff(), 1e-12);
  for (int i : {2, 3, 4, 5}) EXPECT_LT(cf[i].cwiseAbs().maxCoeff(), 1e-12) << Components::name(i);
}

TEST(Asymptotics, LayerTermsDecay) {
  // |term(x)| exp(beta x / 2) stays bounded: its maximum over [20, 30] does
  // not exceed its maximum over [0, 20]. Half the rate leaves room for the
  // secular x^k factors of resonant terms.
  for (const auto& tg : {supply_chain(), time_varying()}) {
    const auto ex = Expansion::build(tg, 1);
    struct Term {
      const char* name;
      const ExpPoly* f;
      double beta;
    };
    const double bl = ex->left0().beta, br = ex->right1().beta;
    const auto &L0 = ex->left0().fast, &L1 = ex->left1().fast, &R = ex->right1().fast;
    const auto& sl = ex->left_slow();
    const std::vector<Term> terms = {
        {"left0.z2", &L0.z2, bl},   {"left0.lu2", &L0.lu2, bl}, {"left0.lv2", &L0.lv2, bl},
        {"left0.mu2", &L0.mu2, bl}, {"left1.z2", &L1.z2, bl},   {"left1.lu2", &L1.lu2, bl},
        {"left1.lv2", &L1.lv2, bl}, {"left1.mu2", &L1.mu2, bl}, {"slow.z1", &sl.z1, bl},
        {"slow.lu1", &sl.lu1, bl},  {"slow.mu1", &sl.mu1, bl},  {"right.z2", &R.z2, br},
        {"right.lu2", &R.lu2, br},  {"right.lv2", &R.lv2, br},  {"right.mu2", &R.mu2, br}};
    for (const auto& term : terms) {
      double head = 0.0, tailmax = 0.0;
      for (int k = 0; k <= 600; ++k) {
        const double u = k / 600.0, x = 30.0 * u * u;
        const double w = (*term.f)(x).cwiseAbs().maxCoeff() * std::exp(0.5 * term.beta * x);
        (x <= 20.0 ? head : tailmax) = std::max(x <= 20.0 ? head : tailmax, w);
      }
      EXPECT_LE(tailmax, head + 1e-300) << term.name;
      EXPECT_LT((*term.f)(60.0).cwiseAbs().maxCoeff(), 1e-12) << term.name;
    }
  }
}

TEST(Asymptotics, ZeroInitialStateGivesZeroExpansion) {
  const auto ex = Expansion::build(prepare_game(supply_chain_with_z0(0.0, 0.0)), 1);
  for (double t : {0.0, 0.01, 1.0, 2.0}) EXPECT_EQ(ex->compose(t, 0.05).join().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Asymptotics, LambdaV1HasNoLayerContent) {
  const auto ex = Expansion::build(time_varying(), 1);
  for (double t : {0.0, 0.01, 0.7, 1.5}) {
    const Vec expect = ex->outer0().at(t).lv1 + 0.05 * ex->outer1().at(t).lv1;
    EXPECT_EQ((ex->compose(t, 0.05).lv1 - expect).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Asymptotics, TildeLeaderControlIsEpsilonFree) {
  const auto ex = Expansion::build(time_varying(), 1);
  const auto rep = reduced_ocp_check(ex->outer0());
  EXPECT_LE(rep.control_gap, 1e-10);
  for (double t : {0.0, 0.3, 1.5}) {
    const Vec a = tilde_controls(*ex, t, 0.2).first;
    const Vec b = tilde_controls(*ex, t, 0.01).first;
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Asymptotics, OrderZeroOmitsFirstOrderTerms) {
  const auto tg = supply_chain();
  const auto ex0 = Expansion::build(tg, 0);
  const auto ex1 = supply_chain_expansion();
  EXPECT_EQ(ex0->order(), 0);
  for (double t : {0.05, 1.0}) {
    const Components a = ex0->compose(t, 0.1);
    Components b = ex1->outer0().at(t);
    const LayerFast& L = ex1->left0().fast;
    b.z2 += L.z2(t / 0.1);
    b.lu2 += L.lu2(t / 0.1);
    b.lv2 += L.lv2(t / 0.1);
    b.mu2 += L.mu2(t / 0.1);
    EXPECT_LT((a.join() - b.join()).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(Expansion::build(tg, 2), InputError);
  EXPECT_THROW(ex1->compose(-0.1, 0.1), InputError);
}

TEST(Asymptotics, DumpContainsAllTerms) {
  const auto j = supply_chain_expansion()->dump(11);
  for (const char* key : {"outer0", "left0", "outer1", "left_slow1", "left1", "right1", "mesh"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["mesh"].size(), 11u);
}

TEST(Asymptotics, CompositeResidualInLayer) {
  // E y' - K(t) y along the composite inside the left layer: the fast rows
  // are balanced to O(eps^2); the slow rows keep an O(eps) residual that lives
  // on an eps-wide interval, which is why the solution error is still O(eps^2).
  const auto tg = time_varying();
  const auto ex = Expansion::build(tg, 1);
  std::vector<double> fast, slow;
  for (double eps : {0.02, 0.01}) {
    const auto bvp = assemble_bvp(tg, eps);
    const int n = tg->n(), m = tg->m(), s = tg->s();
    Mat E = Mat::Identity(4 * n, 4 * n);
    for (int blk = 0; blk < 4; ++blk) E.block(blk * n + m, blk * n + m, s, s) *= eps;
    double wf = 0.0, ws = 0.0;
    for (int k = 1; k < 80; ++k) {
      const double t = 8.0 * eps * k / 80.0, h = 1e-4 * eps;
      const Vec dy = (ex->compose(t + h, eps).join() - ex->compose(t - h, eps).join()) / (2 * h);
      const Vec r = E * dy - bvp.scaled_rhs_matrix(t) * ex->compose(t, eps).join();
      for (int blk = 0; blk < 4; ++blk) {
        ws = std::max(ws, r.segment(blk * n, m).cwiseAbs().maxCoeff());
        wf = std::max(wf, r.segment(blk * n + m, s).cwiseAbs().maxCoeff());
      }
    }
    fast.push_back(wf);
    slow.push_back(ws);
  }
  EXPECT_GT(fast[0] / fast[1], 3.0);
  EXPECT_LT(fast[0] / fast[1], 5.0);
  EXPECT_GT(slow[0] / slow[1], 1.6);
  EXPECT_LT(slow[0] / slow[1], 2.6);
}

TEST(Asymptotics, ComponentErrorsAreSecondOrder) {
  // Rate property on the supply-chain game for eps in {0.2, 0.1, 0.05}.
  const auto tg = supply_chain();
  const auto ex = supply_chain_expansion();
  std::vector<std::array<double, 8>> errs;
  const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
  for (double e : eps) errs.push_back(component_errors(*ex, solve_exact(tg, e)));
  for (size_t k = 0; k + 1 < eps.size(); ++k)
    for (int i = 0; i < 8; ++i) {
      const double r = errs[k][i] / errs[k + 1][i];
      EXPECT_GE(r, 3.0) << Components::name(i) << " eps " << eps[k];
      EXPECT_LE(r, 5.0) << Components::name(i) << " eps " << eps[k];
    }
}

TEST(Asymptotics, ComponentErrorsAreSecondOrderTimeVarying) {
  const auto tg = time_varying();
  const auto ex = Expansion::build(tg, 1);
  std::vector<std::array<double, 8>> errs;
  const std::vector<double> eps = {0.1, 0.05, 0.025};
  for (double e : eps) errs.push_back(component_errors(*ex, solve_exact(tg, e)));
  for (size_t k = 0; k + 1 < eps.size(); ++k)
    for (int i = 0; i < 8; ++i) {
      const double r = errs[k][i] / errs[k + 1][i];
      EXPECT_GE(r, 3.0) << Components::name(i) << " eps " << eps[k];
      EXPECT_LE(r, 5.0) << Components::name(i) << " eps " << eps[k];
    }
}
