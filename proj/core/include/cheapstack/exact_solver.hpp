#pragma once

#include "cheapstack/game.hpp"
#include "cheapstack/linear_ode.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace cheapstack {

struct SolverOptions {
  double tol_ode = 1e-10;
  double tol_bc = 1e-12;
  int mesh_hint = 32;
  int max_refine = 6;
  double eps_min = 1e-3;
  // Layer zones span layer_kappa * eps * ln(1/eps) / (slowest fast rate).
  double layer_kappa = 4.0;
  int quadrature_points = 8;
  int stages = 4;
};

// The eight blocks of the 4n state (z1, z2, lu1, lu2, lv1, lv2, mu1, mu2).
struct Components {
  Vec z1, z2, lu1, lu2, lv1, lv2, mu1, mu2;

  static Components split(const Vec& y, int m, int s);
  Vec join() const;
  Vec z() const;
  static constexpr int kCount = 8;
  const Vec& operator[](int i) const;
  Vec& operator[](int i);
  static const char* name(int i);
};

struct Costs {
  double J_u = 0.0;
  double J_v = 0.0;
};

// Scaled necessary-condition system with lambda_u2, lambda_v2 carrying a
// factor 1/eps relative to the raw costates.
struct StackelbergBvp {
  std::shared_ptr<const TransformedGame> game;
  double eps = 0.0;
  std::shared_ptr<const LinearOde> ode;
  SeparatedBc bc;
  MeshPlan plan;

  // Eps-multiplied form: E y' = K(t) y with E = diag(1, eps, 1, eps, 1, eps, 1, eps).
  Mat scaled_rhs_matrix(double t) const;
};

StackelbergBvp assemble_bvp(std::shared_ptr<const TransformedGame> tg, double eps, const SolverOptions& opts = {});
// System matrix M(t) of y' = M y for the scaled variables.
Mat stackelberg_matrix(const Blocks& b, double eps);

struct BvpDiagnostics {
  double ode_residual = 0.0;
  double bc_residual = 0.0;
  double stationarity = 0.0;
  int mesh_size = 0;
  int refinements = 0;
  double costate_form_gap = 0.0;  // relative gap between the two cost formulas
};

class BvpSolution {
 public:
  BvpSolution() = default;
  BvpSolution(std::shared_ptr<const TransformedGame> tg, double eps, DenseTrajectory traj);

  double eps() const { return eps_; }
  const TransformedGame& game() const { return *tg_; }
  std::shared_ptr<const TransformedGame> game_ptr() const { return tg_; }
  const DenseTrajectory& trajectory() const { return traj_; }
  const std::vector<double>& mesh() const { return traj_.nodes(); }
  Components at(double t) const { return Components::split(traj_(t), tg_->m(), tg_->s()); }
  Components node(size_t k) const { return Components::split(traj_.values()[k], tg_->m(), tg_->s()); }

  Vec u(double t) const;
  Vec v(double t) const;
  Vec u_from(const Components& c, double t) const;
  Vec v_from(const Components& c) const;

  Costs costs;
  BvpDiagnostics diagnostics;

 private:
  std::shared_ptr<const TransformedGame> tg_;
  double eps_ = 0.0;
  DenseTrajectory traj_;
};

BvpSolution solve_linear_bvp(const StackelbergBvp& bvp, const SolverOptions& opts = {});
// assemble_bvp followed by solve_linear_bvp.
BvpSolution solve_exact(std::shared_ptr<const TransformedGame> tg, double eps, const SolverOptions& opts = {});

struct ControlSamples {
  std::vector<double> t;
  std::vector<Vec> u;
  std::vector<Vec> v;
};
ControlSamples extract_optimal_controls(const BvpSolution& sol);

// Direct quadrature of both cost integrands along the optimal trajectory.
Costs optimal_costs(const BvpSolution& sol, int points = 8);
// Same costs written through the costates.
Costs costate_form_costs(const BvpSolution& sol, int points = 8);

// Fast block of the scaled system, ordered (z2, lu2, lv2, mu2).
Mat fast_matrix(const Blocks& b, double eps);

struct SpectrumSample {
  double t = 0.0;
  Eigen::VectorXcd eigenvalues;
  int above = 0;  // Re >= alpha
  int below = 0;  // Re <= -alpha
  double split = 0.0;
};

struct SpectrumReport {
  double eps = 0.0;
  double alpha = 0.0;
  std::vector<SpectrumSample> samples;
  bool dichotomy = true;
  // Largest alpha for which every sample splits 2s / 2s.
  double largest_alpha = 0.0;
};

SpectrumReport fast_spectrum(const TransformedGame& tg, double eps, int samples, double alpha);

// Same necessary conditions in raw costates with arbitrary own-control
// weights alpha = g.weight_u, beta = g.weight_v. Requires Guv = 0.
struct GeneralSolution {
  double alpha = 1.0;
  double beta = 1.0;
  std::shared_ptr<const TransformedGame> game;
  DenseTrajectory trajectory;
  Costs costs;
  BvpDiagnostics diagnostics;

  Vec u(double t) const;
  Vec v(double t) const;
};

GeneralSolution general_weight_solve(const GameSpec& g, const SolverOptions& opts = {});

}  // namespace cheapstack
