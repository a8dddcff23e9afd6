// Acceptance run: one PASS/FAIL line per criterion, details indented below.
#include "cheapstack/evaluate.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace cheapstack;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void note(const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    notes.emplace_back(buf);
  }
  // Records a check; a failing check fails the criterion.
  void check(bool ok, const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    notes.emplace_back(std::string(ok ? "ok   " : "MISS ") + buf);
    pass = pass && ok;
  }
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::shared_ptr<const TransformedGame> game() {
  static const auto tg = prepare_game(supply_chain_game());
  return tg;
}

std::shared_ptr<const Expansion> expansion() {
  static const auto ex = Expansion::build(game(), 1);
  return ex;
}

const BvpSolution& exact(double eps) {
  static std::map<double, BvpSolution> cache;
  auto it = cache.find(eps);
  if (it == cache.end()) it = cache.emplace(eps, solve_exact(game(), eps)).first;
  return it->second;
}

const EpsMetrics& metrics(double eps) {
  static std::map<double, EpsMetrics> cache;
  auto it = cache.find(eps);
  if (it == cache.end()) it = cache.emplace(eps, evaluate_eps(expansion(), eps)).first;
  return it->second;
}

std::array<double, 8> component_errors(double eps) {
  const BvpSolution sol = solve_exact(game(), eps);
  const double tf = game()->tf();
  std::vector<double> ts;
  for (int k = 0; k <= 2000; ++k) ts.push_back(tf * k / 2000);
  for (int k = 0; k <= 400; ++k) {
    ts.push_back(std::min(tf, 12.0 * eps * k / 400));
    ts.push_back(std::max(0.0, tf - 12.0 * eps * k / 400));
  }
  std::array<double, 8> e{};
  for (double t : ts) {
    const Components c = sol.at(t), a = expansion()->compose(t, eps);
    for (int i = 0; i < 8; ++i) e[i] = std::max(e[i], (c[i] - a[i]).cwiseAbs().maxCoeff());
  }
  return e;
}

bool in(double x, double lo, double hi) { return x >= lo && x <= hi; }

Outcome criterion1() {
  Outcome o;
  for (double eps : {0.2, 0.1, 0.05, 0.01}) {
    const BvpSolution& sol = exact(eps);
    const auto& d = sol.diagnostics;
    // Off-node residual: transport by the exact flow of the constant system.
    const Mat M = stackelberg_matrix(game()->at(0.0), eps);
    double scale = 1.0, off = 0.0;
    for (const auto& y : sol.trajectory().values()) scale = std::max(scale, y.cwiseAbs().maxCoeff());
    const auto& mesh = sol.mesh();
    for (size_t k = 0; k + 1 < mesh.size(); ++k) {
      const double a = mesh[k] + 0.25 * (mesh[k + 1] - mesh[k]), b = mesh[k] + 0.75 * (mesh[k + 1] - mesh[k]);
      const Vec pred = (M * (b - a)).exp() * sol.trajectory()(a);
      off = std::max(off, (sol.trajectory()(b) - pred).cwiseAbs().maxCoeff() / scale);
    }
    o.check(std::max(d.ode_residual, off) <= 1e-8 && d.bc_residual <= 1e-10 && d.stationarity <= 1e-10,
            "eps %-5g ode %.2e (off-node %.2e)  bc %.2e  stationarity %.2e  nodes %d", eps, d.ode_residual, off,
            d.bc_residual, d.stationarity, d.mesh_size);
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  const std::vector<double> eps = {0.2, 0.1, 0.05};
  std::vector<std::array<double, 8>> e;
  for (double x : eps) e.push_back(component_errors(x));
  for (size_t k = 0; k + 1 < eps.size(); ++k) {
    for (int i = 0; i < 8; ++i) {
      const double r = e[k][i] / e[k + 1][i];
      o.check(in(r, 3.0, 5.0), "%-9s eps %-4g -> %-4g  err %.3e -> %.3e  ratio %.2f (need [3, 5])", Components::name(i),
              eps[k], eps[k + 1], e[k][i], e[k + 1][i], r);
    }
  }
  return o;
}

Outcome criterion3() {
  Outcome o;
  const std::vector<double> eps = {0.2, 0.1, 0.05};
  for (size_t k = 0; k + 1 < eps.size(); ++k) {
    const auto &a = metrics(eps[k]).hat_errors, &b = metrics(eps[k + 1]).hat_errors;
    o.check(in(a.du / b.du, 3.0, 5.0), "du  eps %-4g -> %-4g  %.3e -> %.3e  ratio %.2f (need [3, 5])", eps[k],
            eps[k + 1], a.du, b.du, a.du / b.du);
    o.check(in(a.dv / b.dv, 1.6, 2.6), "dv  eps %-4g -> %-4g  %.3e -> %.3e  ratio %.2f (need [1.6, 2.6])", eps[k],
            eps[k + 1], a.dv, b.dv, a.dv / b.dv);
  }
  for (double x : eps) {
    const auto& e = metrics(x).hat_errors;
    o.check(e.dv > e.du, "eps %-4g  dv %.3e > du %.3e", x, e.dv, e.du);
  }
  return o;
}

Outcome criterion4() {
  Outcome o;
  const std::vector<double> eps = {0.2, 0.1, 0.05};
  for (size_t k = 0; k + 1 < eps.size(); ++k) {
    const auto &a = metrics(eps[k]), &b = metrics(eps[k + 1]);
    const std::vector<std::tuple<const char*, double, double>> rows = {
        {"|J_u* - J_u hat|  ", a.abs_hat.J_u, b.abs_hat.J_u},
        {"|J_v* - J_v hat|  ", a.abs_hat.J_v, b.abs_hat.J_v},
        {"|J_u* - J_u tilde|", a.abs_tilde.J_u, b.abs_tilde.J_u},
        {"|J_v* - J_v tilde|", a.abs_tilde.J_v, b.abs_tilde.J_v},
        {"|J_u* - J_u bar0| ", a.abs_eps_free.J_u, b.abs_eps_free.J_u},
        {"|J_v* - J_v bar0| ", a.abs_eps_free.J_v, b.abs_eps_free.J_v},
    };
    for (const auto& [name, x, y] : rows)
      o.check(in(x / y, 1.6, 2.6), "%s eps %-4g -> %-4g  %.3e -> %.3e  ratio %.2f (need [1.6, 2.6])", name, eps[k],
              eps[k + 1], x, y, x / y);
  }
  return o;
}

Outcome criterion5() {
  Outcome o;
  const std::map<double, std::array<double, 4>> printed = {{0.2, {1.4368, 0.4867, 2.1032, 1.2561}},
                                                           {0.1, {0.7868, 0.2630, 1.1215, 0.6390}},
                                                           {0.05, {0.4114, 0.0040, 0.5791, 0.1245}},
                                                           {0.01, {0.0857, 1.038, 0.1195, 1.4233}}};
  int matched = 0, total = 0;
  // Computed afresh so the runtime covers the whole table.
  for (double eps : {0.2, 0.1, 0.05, 0.01}) {
    const EpsMetrics m = evaluate_eps(expansion(), eps);
    const std::array<double, 4> ours = {m.rel_hat.J_u, m.rel_hat.J_v, m.rel_tilde.J_u, m.rel_tilde.J_v};
    const bool order = ours[2] > ours[0] && ours[3] > ours[1];
    const bool small = eps < 0.01 || *std::max_element(ours.begin(), ours.end()) < 2.5;
    o.check(order && small, "eps %-4g  dJhat_M %.4f  dJhat_R %.4f  dJtilde_M %.4f  dJtilde_R %.4f  (%%)", eps, ours[0],
            ours[1], ours[2], ours[3]);
    const auto& p = printed.at(eps);
    for (int i = 0; i < 4; ++i) {
      ++total;
      if (std::abs(ours[i] - p[i]) <= 0.25 * p[i]) ++matched;
    }
    o.note("     printed     %.4f          %.4f          %.4f            %.4f", p[0], p[1], p[2], p[3]);
  }
  o.note("quantitative match within 25%%: %d of %d values (reported, not gating)", matched, total);
  if (matched < total)
    o.note("the printed table depends on an unreported Z0; values here use Z0 = (1, 1)");
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto rep = reduced_ocp_check(expansion()->outer0());
  const Costs bar = eps_free_costs(expansion()->outer0());
  o.check(std::abs(bar.J_u - rep.J_star) <= 1e-8, "J_u bar0 %.12f vs reduced optimum %.12f  diff %.2e", bar.J_u,
          rep.J_star, std::abs(bar.J_u - rep.J_star));

  for (double eps : {0.2, 0.1, 0.05, 0.01}) {
    auto g = supply_chain_game();
    g.weight_v = eps * eps;
    const auto gen = general_weight_solve(g);
    const Costs& ded = exact(eps).costs;
    const double d = std::max(rel(gen.costs.J_u, ded.J_u), rel(gen.costs.J_v, ded.J_v));
    o.check(d <= 1e-12, "general weights (1, eps^2) vs dedicated path, eps %-4g  rel diff %.2e", eps, d);
  }

  for (double eps : {0.1, 0.05}) {
    auto g = supply_chain_game();
    const Costs& ref = exact(eps).costs;
    double worst = 0.0;
    for (Mat c : {Mat{{1.0}, {0.0}}, Mat{{0.3}, {0.7}}, Mat{{-2.0}, {1.5}}}) {
      g.Bc = MatrixFunction::constant(c);
      const auto sol = solve_exact(prepare_game(g), eps);
      worst = std::max({worst, rel(sol.costs.J_u, ref.J_u), rel(sol.costs.J_v, ref.J_v)});
    }
    o.check(worst <= 1e-8, "complement invariance, eps %-4g  max rel diff %.2e", eps, worst);
  }

  const Mat& S = expansion()->left0().basis->S;
  const Mat D = game()->at(0.0).Du3;
  const Mat P = lyapunov_layer_integral(S, D);
  // Truncated composite Gauss-Legendre quadrature on [0, 60].
  const auto& q = gauss_legendre(8);
  Mat Q = Mat::Zero(P.rows(), P.cols());
  const int panels = 600;
  const double h = 60.0 / panels;
  for (int p = 0; p < panels; ++p)
    for (int i = 0; i < q.nodes.size(); ++i) {
      const double s = (p + q.nodes(i)) * h;
      const Mat E = (-S * s).exp();
      Q += h * q.weights(i) * E * D * E;
    }
  const double dq = (P - Q).cwiseAbs().maxCoeff();
  o.check(dq <= 1e-10, "Lyapunov layer integral vs truncated quadrature  diff %.2e", dq);
  return o;
}

Outcome criterion7() {
  Outcome o;
  const double S = std::sqrt(1.8), alpha = 0.9 * 1.3416;
  const auto rep = fast_spectrum(*game(), 0.05, 11, alpha);
  int good = 0;
  for (const auto& smp : rep.samples) good += (smp.above == 2 && smp.below == 2);
  o.check(rep.samples.size() == 11 && good == 11, "eps 0.05: %d of 11 samples split 2 / 2 at alpha = %.5f", good,
          alpha);
  const auto zero = fast_spectrum(*game(), 0.0, 11, alpha);
  double worst = 0.0;
  for (const auto& smp : zero.samples)
    for (Eigen::Index i = 0; i < smp.eigenvalues.size(); ++i)
      worst = std::max(worst, std::abs(std::abs(smp.eigenvalues(i)) - S) + std::abs(smp.eigenvalues(i).imag()));
  o.check(worst <= 1e-10, "eps 0: eigenvalues +-%.10f (double)  max deviation %.2e", S, worst);
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto rows = cheap_control_comparison(supply_chain_game(), {0.01, 0.05, 0.1, 0.2});
  for (const auto& r : rows) {
    o.check(r.leader_cheap.J_u < r.base.J_u && r.follower_cheap.J_v < r.base.J_v && r.deterioration_leader > 0 &&
                r.deterioration_follower > 0 && r.deterioration_follower > r.deterioration_leader,
            "eps %-4g  J_M %.6f < %.6f  J_R %.6f < %.6f  deterioration M %.3f  R %.3f", r.eps, r.leader_cheap.J_u,
            r.base.J_u, r.follower_cheap.J_v, r.base.J_v, r.deterioration_leader, r.deterioration_follower);
  }
  return o;
}

Outcome criterion9() {
  Outcome o;
  const std::filesystem::path log =
      std::filesystem::temp_directory_path() / ("cheapstack_properties_" + std::to_string(::getpid()) + ".txt");
  const std::string cmd = std::string(CHEAPSTACK_UNIT_TESTS) + " --gtest_brief=1 > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::string line;
  std::set<std::string> failed;
  std::string summary;
  while (std::getline(is, line)) {
    if (line.rfind("[  FAILED  ] ", 0) == 0 && line.find(" test") == std::string::npos) {
      std::string name = line.substr(13);
      name = name.substr(0, name.find(' '));
      if (!name.empty() && failed.insert(name).second) o.note("failed: %s", name.c_str());
    }
    if (line.rfind("[  PASSED  ]", 0) == 0 || line.rfind("[==========]", 0) == 0) summary += line.substr(13) + "; ";
  }
  std::filesystem::remove(log);
  o.check(status == 0 && failed.empty(), "property and unit suite: %s%zu failing", summary.c_str(), failed.size());
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double budget;  // seconds
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "exact-solver soundness", 30.0, criterion1},
      {2, "second-order component errors", 60.0, criterion2},
      {3, "control error rates", 0.0, criterion3},
      {4, "cost error rates", 0.0, criterion4},
      {5, "relative cost errors, Z0 = (1, 1)", 60.0, criterion5},
      {6, "internal consistency", 0.0, criterion6},
      {7, "fast spectral dichotomy", 0.0, criterion7},
      {8, "cheap-control orderings", 60.0, criterion8},
      {9, "property suite", 0.0, criterion9},
  };
  int failures = 0;
  std::vector<std::string> lines;
  for (const auto& c : all) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note("exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.budget > 0.0) o.check(secs <= c.budget, "runtime %.1f s (budget %.0f s)", secs, c.budget);
    char head[160];
    std::snprintf(head, sizeof head, "%s criterion %d: %s (%.1f s)", o.pass ? "PASS" : "FAIL", c.id, c.title, secs);
    std::printf("%s\n", head);
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    lines.emplace_back(head);
    failures += o.pass ? 0 : 1;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("  %s\n", l.c_str());
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failures, all.size());
  return failures == 0 ? 0 : 1;
}
