#pragma once

#include "cheapstack/matrix_function.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace cheapstack {

// y' = M(t) y + g(t); g may be empty.
struct LinearOde {
  int dim = 0;
  std::function<Mat(double)> M;
  std::function<Vec(double)> g;
  bool autonomous = false;  // M independent of t
};

// Gauss-Legendre nodes and weights on [0, 1].
struct QuadratureRule {
  Vec nodes;
  Vec weights;
};
const QuadratureRule& gauss_legendre(int points);

// Implicit Gauss-Legendre Runge-Kutta (order 2*stages) for linear systems.
class Propagator {
 public:
  Propagator(std::shared_ptr<const LinearOde> ode, double max_step, int stages = 4);

  // Affine map over [t0, t1]: y(t1) = T y(t0) + p.
  void transfer(double t0, double t1, Mat& T, Vec& p) const;
  Vec propagate(double t0, double t1, const Vec& y0) const;

  const LinearOde& ode() const { return *ode_; }
  double max_step() const { return max_step_; }

 private:
  void step(double t, double h, const Vec* y0, Mat* T, Vec* out, Vec* p) const;

  std::shared_ptr<const LinearOde> ode_;
  double max_step_;
  int stages_;
  Mat a_;
  Vec b_, c_;
};

// Largest eigenvalue modulus of M(t) over equally spaced samples.
double stiffness_estimate(const LinearOde& ode, double tf, int samples = 9);

// Three zones: [0, w0] and [tf - wf, tf] with spacing 0.5/rho, the interior
// with spacing 2/rho; every spacing is capped by tf/hint and halved per
// refinement level.
struct MeshPlan {
  double tf = 1.0;
  double rho = 0.0;
  double layer_left = 0.0;
  double layer_right = 0.0;
  int hint = 32;
};
std::vector<double> build_mesh(const MeshPlan& plan, int refine);

// Layer zone width kappa * eps * ln(1/eps), clipped to tf/3.
double layer_width(double eps, double kappa, double tf);

// Solution on nodes; evaluation elsewhere by propagating from the left node.
class DenseTrajectory {
 public:
  DenseTrajectory() = default;
  DenseTrajectory(std::shared_ptr<const LinearOde> ode, std::vector<double> nodes, std::vector<Vec> y,
                  double max_step);

  Vec operator()(double t) const;
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<Vec>& values() const { return y_; }
  int dim() const { return y_.empty() ? 0 : static_cast<int>(y_[0].size()); }
  double max_step() const { return max_step_; }
  std::shared_ptr<const LinearOde> ode_ptr() const { return ode_; }
  // States at increasing times inside [nodes[k], nodes[k+1]].
  std::vector<Vec> sample_interval(size_t k, const std::vector<double>& times) const;

  // Composite Gauss-Legendre quadrature of f(t, y(t)) over the node mesh.
  double integrate(const std::function<double(double, const Vec&)>& f, int points = 8) const;

 private:
  size_t interval_of(double t) const;

  std::shared_ptr<const LinearOde> ode_;
  std::vector<double> nodes_;
  std::vector<Vec> y_;
  double max_step_ = 0.0;
};

// Separated linear boundary conditions B0 y(0) = b0, Bf y(tf) = bf.
struct SeparatedBc {
  Mat B0;
  Vec b0;
  Mat Bf;
  Vec bf;
};

struct ShootingOptions {
  double tol_ode = 1e-10;
  int max_refine = 6;
  int stages = 4;
  double step_factor = 0.4;  // integrator step <= step_factor / rho
};

struct ShootingResult {
  DenseTrajectory trajectory;
  double ode_residual = 0.0;
  double bc_residual = 0.0;
  int refinements = 0;
};

// Multiple shooting with one transfer matrix per mesh interval and a global
// sparse solve of the continuity and boundary equations.
ShootingResult solve_shooting(std::shared_ptr<const LinearOde> ode, const SeparatedBc& bc, const MeshPlan& plan,
                              const ShootingOptions& opts);

// Forward integration of an initial-value problem on the plan's mesh.
DenseTrajectory solve_ivp(std::shared_ptr<const LinearOde> ode, const Vec& y0, const MeshPlan& plan,
                          const ShootingOptions& opts, int refine = 0);

// Max over intervals of the midpoint mismatch between forward and backward
// propagation with a halved step, relative to max(1, max |y|).
double continuity_defect(const DenseTrajectory& traj, int stages = 4);

}  // namespace cheapstack
