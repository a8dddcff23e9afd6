#pragma once

#include "cheapstack/exact_solver.hpp"
#include "cheapstack/exp_poly.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <utility>

namespace cheapstack {

// Symmetric positive definite square root and its inverse.
std::pair<Mat, Mat> sqrt_spd(const Mat& M);

// P = int_0^inf e^{-S s} D e^{-S s} ds, i.e. the solution of S P + P S = D.
Mat lyapunov_layer_integral(const Mat& S, const Mat& D);

struct ExpansionOptions {
  double tol = 1e-11;
  int mesh_hint = 32;
  int max_refine = 6;
  int stages = 4;
  int quadrature_points = 8;
};

// Reduced 4(n-s) system shared by the zero- and first-order outer problems,
// state (z1, lambda_u1, lambda_v1, mu1).
Mat outer_matrix(const Blocks& b);

struct OuterDiagnostics {
  double ode_residual = 0.0;
  double bc_residual = 0.0;
  int mesh_size = 0;
};

// Zero-order outer solution. The slow part is stored as a trajectory; the fast
// algebraic parts are recovered on evaluation.
class OuterZero {
 public:
  OuterZero(std::shared_ptr<const TransformedGame> tg, DenseTrajectory w, OuterDiagnostics diag);

  const TransformedGame& game() const { return *tg_; }
  std::shared_ptr<const TransformedGame> game_ptr() const { return tg_; }
  const DenseTrajectory& trajectory() const { return w_; }
  const OuterDiagnostics& diagnostics() const { return diag_; }

  // All eight components; lambda_u2 and lambda_v2 are zero.
  Components at(double t) const;
  Components from_slow(double t, const Vec& w) const;
  // Time derivatives of the algebraic components z2 and mu2.
  Vec dz2(double t) const;
  Vec dmu2(double t) const;
  // First-order fast outer terms, which only need zero-order data.
  Vec lv21(double t) const;
  Vec lu21(double t) const;

 private:
  std::shared_ptr<const TransformedGame> tg_;
  DenseTrajectory w_;
  OuterDiagnostics diag_;
};

class OuterFirst {
 public:
  OuterFirst(std::shared_ptr<const OuterZero> zero, DenseTrajectory w, OuterDiagnostics diag);

  const DenseTrajectory& trajectory() const { return w_; }
  const OuterDiagnostics& diagnostics() const { return diag_; }
  Components at(double t) const;

 private:
  std::shared_ptr<const OuterZero> zero_;
  DenseTrajectory w_;
  OuterDiagnostics diag_;
};

std::shared_ptr<const OuterZero> solve_outer_zero(std::shared_ptr<const TransformedGame> tg,
                                                  const ExpansionOptions& opts = {});

struct ReducedOcpReport {
  double J_star = 0.0;         // optimal value of the reduced problem
  double J_outer = 0.0;        // eps-free leader cost from the outer solution
  double control_gap = 0.0;    // max |u_bar* + Bu1' lambda_u1,0 / alpha|
  double min_state_form = 0.0; // smallest value of the state quadratic form
};

// Solves the reduced optimal control problem in (z1, lambda_v1) through its own
// Hamiltonian system and compares with the zero-order outer solution.
ReducedOcpReport reduced_ocp_check(const OuterZero& outer, const ExpansionOptions& opts = {});

// Fast left-layer terms in xi = t/eps.
struct LayerFast {
  ExpPoly z2, lu2, lv2, mu2;
};

struct LeftLayerZero {
  std::shared_ptr<const SpectralBasis> basis;  // S = Dv2(0)^{1/2}
  Vec delta;                                   // z02 - z2_bar,0(0)
  Mat P;                                       // S P + P S = Du3(0)
  ExpPoly eta, zeta;
  LayerFast fast;
  double beta = 0.0;
  Vec lu2_at_zero() const { return fast.lu2(0.0); }
  Vec mu2_integral() const { return fast.mu2.integral(); }
};

LeftLayerZero left_layer_zero(const OuterZero& outer, const Vec& z02);

// Slow first-order left corrections; lambda_v1 is identically zero.
struct LeftLayerSlow {
  ExpPoly z1, lu1, mu1;
};

LeftLayerSlow left_layer_first_slow(const TransformedGame& tg, const LeftLayerZero& l0);

std::shared_ptr<const OuterFirst> solve_outer_first(std::shared_ptr<const OuterZero> outer, const LeftLayerZero& l0,
                                                    const ExpansionOptions& opts = {});

struct LeftLayerFirst {
  ExpPoly fx, fy, feta, fzeta;
  ExpPoly x, y, eta, zeta;
  LayerFast fast;
};

LeftLayerFirst left_layer_first_fast(const TransformedGame& tg, const OuterFirst& outer1, const LeftLayerZero& l0,
                                     const LeftLayerSlow& slow);

// Right layer in sigma = (tf - t)/eps >= 0.
struct RightLayerFirst {
  std::shared_ptr<const SpectralBasis> basis;  // Sf = Dv2(tf)^{1/2}
  ExpPoly x, eta, zeta;
  LayerFast fast;
  double beta = 0.0;
};

RightLayerFirst right_layer_first_fast(const OuterZero& outer);

// Zero- or first-order composite approximation.
class Expansion {
 public:
  static std::shared_ptr<const Expansion> build(std::shared_ptr<const TransformedGame> tg, int order = 1,
                                                const ExpansionOptions& opts = {});

  int order() const { return order_; }
  const TransformedGame& game() const { return *tg_; }
  std::shared_ptr<const TransformedGame> game_ptr() const { return tg_; }
  const OuterZero& outer0() const { return *outer0_; }
  const OuterFirst& outer1() const { return *outer1_; }
  const LeftLayerZero& left0() const { return left0_; }
  const LeftLayerSlow& left_slow() const { return left_slow_; }
  const LeftLayerFirst& left1() const { return left1_; }
  const RightLayerFirst& right1() const { return right1_; }

  Components compose(double t, double eps) const;

  nlohmann::json dump(int mesh_points = 201) const;

 private:
  Expansion() = default;

  std::shared_ptr<const TransformedGame> tg_;
  int order_ = 1;
  std::shared_ptr<const OuterZero> outer0_;
  std::shared_ptr<const OuterFirst> outer1_;
  LeftLayerZero left0_;
  LeftLayerSlow left_slow_;
  LeftLayerFirst left1_;
  RightLayerFirst right1_;
};

// u_hat, v_hat from the composite costates.
std::pair<Vec, Vec> hat_controls(const Expansion& ex, double t, double eps);
// u_tilde (eps-free) and v_tilde.
std::pair<Vec, Vec> tilde_controls(const Expansion& ex, double t, double eps);

// Eps-free cost approximations from the zero-order outer solution.
Costs eps_free_costs(const OuterZero& outer, int points = 8);

}  // namespace cheapstack
