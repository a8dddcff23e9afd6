#pragma once

#include "cheapstack/asymptotics.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cheapstack {

// Open-loop control pair on [0, tf]. layer_eps > 0 marks eps-scale features
// near the endpoints so the simulation mesh resolves them.
struct ControlPair {
  std::function<Vec(double)> u;
  std::function<Vec(double)> v;
  std::string label = "custom";
  double layer_eps = 0.0;
};

ControlPair zero_pair(const TransformedGame& tg);
ControlPair exact_pair(std::shared_ptr<const BvpSolution> sol);
ControlPair hat_pair(std::shared_ptr<const Expansion> ex, double eps);
ControlPair tilde_pair(std::shared_ptr<const Expansion> ex, double eps);

struct SimulationOptions {
  double tol = 1e-10;
  int mesh_hint = 32;
  int max_refine = 8;
  int stages = 4;
  double layer_kappa = 4.0;
  int quadrature_points = 8;
};

// State trajectory of z' = A z + Bu u + Bv v in transformed coordinates.
struct OpenLoopTrajectory {
  DenseTrajectory trajectory;
  double defect = 0.0;
  int refinements = 0;
  Vec z(double t) const { return trajectory(t); }
};

// Throws NumericalError when the tolerance is not met after max_refine levels.
OpenLoopTrajectory simulate_openloop(std::shared_ptr<const TransformedGame> tg, const ControlPair& pair,
                                     const SimulationOptions& opts = {});

// Both functionals with follower weight eps^2.
Costs cost_of_pair(const TransformedGame& tg, double eps, const ControlPair& pair, const OpenLoopTrajectory& traj,
                   int points = 8);

struct ControlErrors {
  double du = 0.0;
  double dv = 0.0;
};

// Max over t of the Euclidean error, on `mesh` subdivided `factor` times.
ControlErrors control_errors(const ControlPair& exact, const ControlPair& approx, const std::vector<double>& mesh,
                             int factor = 4);

double relative_percent(double reference, double value);

struct EpsMetrics {
  double eps = 0.0;
  Costs exact, hat, tilde, eps_free;
  ControlErrors hat_errors, tilde_errors;
  Costs abs_hat, abs_tilde, abs_eps_free;  // |J* - J|
  Costs rel_hat, rel_tilde;                // percent of J*
};

struct ComparisonRow {
  double eps = 0.0;
  Costs base;            // (alpha, beta) = (1, 1)
  Costs leader_cheap;    // (eps^2, 1)
  Costs follower_cheap;  // (1, eps^2)
  double improvement_leader = 0.0;     // percent
  double improvement_follower = 0.0;
  double deterioration_leader = 0.0;   // leader cost when the follower is cheap
  double deterioration_follower = 0.0; // follower cost when the leader is cheap
};

struct MetricsReport {
  std::vector<EpsMetrics> rows;
  std::vector<ComparisonRow> comparison;
};

struct EvaluationOptions {
  SolverOptions solver;
  SimulationOptions simulation;
  ExpansionOptions expansion;
};

EpsMetrics evaluate_eps(std::shared_ptr<const Expansion> ex, double eps, const EvaluationOptions& opts = {});

// Requires Guv = 0.
std::vector<ComparisonRow> cheap_control_comparison(const GameSpec& g, const std::vector<double>& eps_grid,
                                                    const SolverOptions& opts = {});

MetricsReport sweep(const GameSpec& g, const std::vector<double>& eps_grid, bool with_comparison = true,
                    const EvaluationOptions& opts = {});

// Follower's optimal response to a fixed leader control, from its own
// two-point problem.
struct FollowerResponse {
  DenseTrajectory trajectory;  // (z, p / eps)
  ControlPair pair;
  double bc_residual = 0.0;
  double ode_residual = 0.0;
};

FollowerResponse follower_best_response(std::shared_ptr<const TransformedGame> tg, std::function<Vec(double)> u,
                                        double eps, const SolverOptions& opts = {});

// Smooth deterministic perturbation shapes on [0, tf].
Vec bump(int k, int dim, double t, double tf);

struct OptimalityCheck {
  std::vector<double> gaps;  // J(deviation) - J*
  double min_gap = 0.0;
};

// J_v(u*, v* + scale * bump_k) - J_v* for k = 1..count.
OptimalityCheck follower_argmin_check(std::shared_ptr<const BvpSolution> sol, int count = 5, double scale = 1e-2,
                                      const SimulationOptions& opts = {});
// J_u(u* + scale * bump_k, v0(.)) - J_u* with re-optimized follower.
OptimalityCheck leader_deviation_check(std::shared_ptr<const BvpSolution> sol, int count = 5, double scale = 1e-2,
                                       const EvaluationOptions& opts = {});

}  // namespace cheapstack
