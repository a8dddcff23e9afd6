#include "cheapstack/evaluate.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cheapstack;

namespace {

struct RunConfig {
  std::string game = "supply_chain";
  std::vector<double> eps;
  int order = 1;
  double tol = 1e-10;
  int mesh = 32;
  std::string out = "out";
  std::string format = "csv";
  std::vector<double> z0;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

std::string eps_tag(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", e);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_table(const RunConfig& cfg, const std::string& stem, const Table& t) {
  const fs::path dir(cfg.out);
  if (cfg.format == "csv") {
    std::ofstream os(dir / (stem + ".csv"));
    if (!os) throw UsageError("cannot write to output directory '" + cfg.out + "'");
    for (size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
    os << "\n";
    for (const auto& r : t.rows) {
      for (size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << num(r[i]);
      os << "\n";
    }
  } else {
    nlohmann::ordered_json j;
    j["columns"] = t.header;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) rows.push_back(r);
    j["rows"] = rows;
    std::ofstream os(dir / (stem + ".json"));
    if (!os) throw UsageError("cannot write to output directory '" + cfg.out + "'");
    os << j.dump(2) << "\n";
  }
}

void write_json(const RunConfig& cfg, const std::string& name, const nlohmann::json& j) {
  std::ofstream os(fs::path(cfg.out) / name);
  if (!os) throw UsageError("cannot write to output directory '" + cfg.out + "'");
  os << j.dump(2) << "\n";
}

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) throw UsageError("cannot create output directory '" + cfg.out + "'");
}

Vec vec_of(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

GameSpec load_config_game(const RunConfig& cfg) {
  GameSpec g;
  if (cfg.game == "supply_chain") {
    g = cfg.z0.empty() ? supply_chain_game() : supply_chain_game({}, vec_of(cfg.z0));
  } else {
    if (!fs::exists(cfg.game)) throw UsageError("game file '" + cfg.game + "' not found");
    g = load_game(cfg.game);
    if (!cfg.z0.empty()) g.Z0 = vec_of(cfg.z0);
  }
  return g;
}

SolverOptions solver_options(const RunConfig& cfg) {
  SolverOptions o;
  o.tol_ode = cfg.tol;
  o.mesh_hint = cfg.mesh;
  return o;
}

EvaluationOptions evaluation_options(const RunConfig& cfg) {
  EvaluationOptions o;
  o.solver = solver_options(cfg);
  o.simulation.tol = cfg.tol;
  o.simulation.mesh_hint = cfg.mesh;
  o.expansion.mesh_hint = cfg.mesh;
  return o;
}

void check_eps(const RunConfig& cfg, const SolverOptions& o, bool single) {
  if (cfg.eps.empty()) throw UsageError("at least one --epsilon is required");
  if (single && cfg.eps.size() != 1) throw UsageError("solve takes exactly one --epsilon");
  for (double e : cfg.eps)
    if (!(e > o.eps_min && e <= 1.0))
      throw UsageError("epsilon " + eps_tag(e) + " outside (" + eps_tag(o.eps_min) + ", 1]");
}

std::vector<double> uniform(double tf, int n) {
  std::vector<double> t(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) t[static_cast<size_t>(k)] = tf * k / (n - 1);
  return t;
}

void append(std::vector<double>& row, const Vec& v) { row.insert(row.end(), v.data(), v.data() + v.size()); }

void push_names(std::vector<std::string>& h, const std::string& base, int count) {
  for (int i = 0; i < count; ++i) h.push_back(base + "_" + std::to_string(i + 1));
}

int cmd_solve(const RunConfig& cfg) {
  const SolverOptions so = solver_options(cfg);
  check_eps(cfg, so, true);
  prepare_output(cfg);
  const GameSpec g = load_config_game(cfg);
  auto tg = prepare_game(g);
  const double eps = cfg.eps.front();
  const BvpSolution sol = solve_exact(tg, eps, so);

  const int n = tg->n(), s = tg->s();
  Table traj;
  traj.header = {"t"};
  for (const char* base : {"Z", "z", "lambda_u", "lambda_v", "mu"}) push_names(traj.header, base, n);
  push_names(traj.header, "u", tg->r());
  push_names(traj.header, "v", s);
  for (size_t k = 0; k < sol.mesh().size(); ++k) {
    const double t = sol.mesh()[k];
    const Components c = sol.node(k);
    std::vector<double> row{t};
    append(row, tg->to_original(t, c.z()));
    for (int i = 0; i < Components::kCount; ++i) append(row, c[i]);
    append(row, sol.u_from(c, t));
    append(row, sol.v_from(c));
    traj.rows.push_back(row);
  }
  write_table(cfg, "trajectory", traj);
  const BvpDiagnostics& d = sol.diagnostics;
  write_table(cfg, "costs",
              {{"epsilon", "J_u", "J_v", "ode_residual", "bc_residual", "stationarity", "costate_form_gap", "mesh_size",
                "refinements"},
               {{eps, sol.costs.J_u, sol.costs.J_v, d.ode_residual, d.bc_residual, d.stationarity, d.costate_form_gap,
                 double(d.mesh_size), double(d.refinements)}}});
  std::cout << "J_u = " << num(sol.costs.J_u) << "\nJ_v = " << num(sol.costs.J_v) << "\n";
  return 0;
}

int cmd_asymptotic(const RunConfig& cfg) {
  const SolverOptions so = solver_options(cfg);
  check_eps(cfg, so, false);
  if (cfg.order != 0 && cfg.order != 1) throw UsageError("--order must be 0 or 1");
  prepare_output(cfg);
  const GameSpec g = load_config_game(cfg);
  auto tg = prepare_game(g);
  auto ex = Expansion::build(tg, cfg.order, evaluation_options(cfg).expansion);
  write_json(cfg, "expansion.json", ex->dump());

  const Costs free = eps_free_costs(ex->outer0());
  write_table(cfg, "eps_free_costs", {{"Jbar_u0", "Jbar_v0"}, {{free.J_u, free.J_v}}});

  const int r = tg->r(), s = tg->s();
  for (double eps : cfg.eps) {
    Table t;
    t.header = {"t"};
    push_names(t.header, "u_hat", r);
    push_names(t.header, "v_hat", s);
    push_names(t.header, "u_tilde", r);
    push_names(t.header, "v_tilde", s);
    // Resolve the layers: 400 uniform points plus dense points near each end.
    std::vector<double> times = uniform(tg->tf(), 401);
    const double w = std::min(tg->tf() / 4, 10.0 * eps);
    for (int k = 1; k < 100; ++k) {
      times.push_back(w * k / 100.0);
      times.push_back(tg->tf() - w * k / 100.0);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (double time : times) {
      std::vector<double> row{time};
      const auto [uh, vh] = hat_controls(*ex, time, eps);
      const auto [ut, vt] = tilde_controls(*ex, time, eps);
      append(row, uh);
      append(row, vh);
      append(row, ut);
      append(row, vt);
      t.rows.push_back(row);
    }
    write_table(cfg, "controls_eps" + eps_tag(eps), t);
  }
  std::cout << "Jbar_u0 = " << num(free.J_u) << "\nJbar_v0 = " << num(free.J_v) << "\n";
  return 0;
}

Table metrics_table(const MetricsReport& rep) {
  Table t;
  t.header = {"epsilon",       "J_u_star",     "J_v_star",     "J_u_hat",        "J_v_hat",        "J_u_tilde",
              "J_v_tilde",     "Jbar_u0",      "Jbar_v0",      "du_hat",         "dv_hat",         "du_tilde",
              "dv_tilde",      "abs_J_u_hat",  "abs_J_v_hat",  "abs_J_u_tilde",  "abs_J_v_tilde",  "rel_J_u_hat_pct",
              "rel_J_v_hat_pct", "rel_J_u_tilde_pct", "rel_J_v_tilde_pct"};
  for (const auto& m : rep.rows) {
    t.rows.push_back({m.eps,
                      m.exact.J_u,
                      m.exact.J_v,
                      m.hat.J_u,
                      m.hat.J_v,
                      m.tilde.J_u,
                      m.tilde.J_v,
                      m.eps_free.J_u,
                      m.eps_free.J_v,
                      m.hat_errors.du,
                      m.hat_errors.dv,
                      m.tilde_errors.du,
                      m.tilde_errors.dv,
                      m.abs_hat.J_u,
                      m.abs_hat.J_v,
                      m.abs_tilde.J_u,
                      m.abs_tilde.J_v,
                      m.rel_hat.J_u,
                      m.rel_hat.J_v,
                      m.rel_tilde.J_u,
                      m.rel_tilde.J_v});
  }
  return t;
}

Table comparison_table(const std::vector<ComparisonRow>& rows) {
  Table t;
  t.header = {"epsilon",           "J_u_1_1",           "J_v_1_1",           "J_u_eps2_1",
              "J_v_eps2_1",        "J_u_1_eps2",        "J_v_1_eps2",        "improvement_leader_pct",
              "improvement_follower_pct", "deterioration_leader_pct", "deterioration_follower_pct"};
  for (const auto& r : rows) {
    t.rows.push_back({r.eps, r.base.J_u, r.base.J_v, r.leader_cheap.J_u, r.leader_cheap.J_v, r.follower_cheap.J_u,
                      r.follower_cheap.J_v, r.improvement_leader, r.improvement_follower, r.deterioration_leader,
                      r.deterioration_follower});
  }
  return t;
}

int cmd_compare(const RunConfig& cfg) {
  const SolverOptions so = solver_options(cfg);
  check_eps(cfg, so, false);
  prepare_output(cfg);
  write_table(cfg, "comparison", comparison_table(cheap_control_comparison(load_config_game(cfg), cfg.eps, so)));
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const EvaluationOptions eo = evaluation_options(cfg);
  check_eps(cfg, eo.solver, false);
  prepare_output(cfg);
  const MetricsReport rep = sweep(load_config_game(cfg), cfg.eps, false, eo);
  write_table(cfg, "metrics", metrics_table(rep));
  return 0;
}

int cmd_reproduce(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.game = "supply_chain";
  const EvaluationOptions eo = evaluation_options(cfg);
  prepare_output(cfg);
  const GameSpec g = load_config_game(cfg);
  std::cout << "Z0 = (" << g.Z0(0) << ", " << g.Z0(1) << ")\n"
            << "note: the initial state of the published experiment is not reported; relative cost errors depend on "
               "the direction of Z0, so a quantitative Table 1 comparison is sensitive to this choice.\n";

  const std::vector<double> table_eps{0.2, 0.1, 0.05, 0.01};
  const std::vector<double> curve_eps{0.2, 0.1, 0.05, 0.025, 0.01};
  auto tg = prepare_game(g);
  auto ex = Expansion::build(tg, 1, eo.expansion);
  MetricsReport rep;
  for (double e : curve_eps) rep.rows.push_back(evaluate_eps(ex, e, eo));

  Table t1{{"epsilon", "dJhat_M_pct", "dJhat_R_pct", "dJtilde_M_pct", "dJtilde_R_pct"}, {}};
  Table f1{{"epsilon", "du_hat", "dv_hat"}, {}};
  Table f2{{"epsilon", "abs_J_M_hat", "abs_J_R_hat", "abs_J_M_tilde", "abs_J_R_tilde"}, {}};
  for (const auto& m : rep.rows) {
    if (std::find(table_eps.begin(), table_eps.end(), m.eps) != table_eps.end())
      t1.rows.push_back({m.eps, m.rel_hat.J_u, m.rel_hat.J_v, m.rel_tilde.J_u, m.rel_tilde.J_v});
    f1.rows.push_back({m.eps, m.hat_errors.du, m.hat_errors.dv});
    f2.rows.push_back({m.eps, m.abs_hat.J_u, m.abs_hat.J_v, m.abs_tilde.J_u, m.abs_tilde.J_v});
  }
  write_table(cfg, "table1", t1);
  write_table(cfg, "fig1", f1);
  write_table(cfg, "fig2", f2);
  write_table(cfg, "metrics", metrics_table(rep));

  // Optimal SB badwill, second original state component.
  const std::vector<double> badwill_eps{0.2, 0.1, 0.05};
  Table f3{{"t"}, {}};
  std::vector<BvpSolution> sols;
  for (double e : badwill_eps) {
    f3.header.push_back("B_SB_eps" + eps_tag(e));
    sols.push_back(solve_exact(tg, e, eo.solver));
  }
  for (double t : uniform(tg->tf(), 401)) {
    std::vector<double> row{t};
    for (const auto& sol : sols) row.push_back(tg->to_original(t, sol.at(t).z())(1));
    f3.rows.push_back(row);
  }
  write_table(cfg, "fig3", f3);

  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(0.01 * k);
  const auto cmp = cheap_control_comparison(g, grid, eo.solver);
  Table f4{{"epsilon", "J_M_1_1", "J_M_eps2_1", "J_R_1_1", "J_R_1_eps2"}, {}};
  Table f5{{"epsilon", "improvement_M_pct", "improvement_R_pct"}, {}};
  Table f6{{"epsilon", "deterioration_M_pct", "deterioration_R_pct"}, {}};
  for (const auto& r : cmp) {
    f4.rows.push_back({r.eps, r.base.J_u, r.leader_cheap.J_u, r.base.J_v, r.follower_cheap.J_v});
    f5.rows.push_back({r.eps, r.improvement_leader, r.improvement_follower});
    f6.rows.push_back({r.eps, r.deterioration_leader, r.deterioration_follower});
  }
  write_table(cfg, "fig4", f4);
  write_table(cfg, "fig5", f5);
  write_table(cfg, "fig6", f6);
  write_table(cfg, "comparison", comparison_table(cmp));

  std::printf("%-8s %12s %12s %12s %12s\n", "eps", "dJhat_M", "dJhat_R", "dJtilde_M", "dJtilde_R");
  for (const auto& r : t1.rows) std::printf("%-8g %12.4f %12.4f %12.4f %12.4f\n", r[0], r[1], r[2], r[3], r[4]);
  return 0;
}

void add_common(CLI::App* sub, RunConfig& cfg, bool eps, bool game) {
  if (game) sub->add_option("--game", cfg.game, "Game file path or 'supply_chain'");
  if (eps) sub->add_option("--epsilon", cfg.eps, "Cheap-control parameter (repeatable)")->take_all();
  sub->add_option("--tol", cfg.tol, "ODE residual tolerance")->check(CLI::PositiveNumber);
  sub->add_option("--mesh", cfg.mesh, "Mesh hint (minimum intervals)")->check(CLI::PositiveNumber);
  sub->add_option("--out", cfg.out, "Output directory");
  sub->add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"csv", "text"}));
  sub->add_option("--z0", cfg.z0, "Override the initial state Z0");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-loop Stackelberg games with a cheap-control follower"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* solve = app.add_subcommand("solve", "Solve the boundary-value problem for one epsilon");
  add_common(solve, cfg, true, true);
  auto* asym = app.add_subcommand("asymptotic", "Build the asymptotic expansion and suboptimal controls");
  add_common(asym, cfg, true, true);
  asym->add_option("--order", cfg.order, "Expansion order (0 or 1)");
  auto* compare = app.add_subcommand("compare", "Leader-cheap vs follower-cheap vs no-cheap costs");
  add_common(compare, cfg, true, true);
  auto* sw = app.add_subcommand("sweep", "Error metrics over an epsilon list");
  add_common(sw, cfg, true, true);
  auto* repro = app.add_subcommand("reproduce", "Reproduce an embedded experiment");
  std::string which;
  repro->add_option("experiment", which, "Experiment name")->required()->check(CLI::IsMember({"supply-chain"}));
  add_common(repro, cfg, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve) return cmd_solve(cfg);
    if (*asym) return cmd_asymptotic(cfg);
    if (*compare) return cmd_compare(cfg);
    if (*sw) return cmd_sweep(cfg);
    if (*repro) return cmd_reproduce(cfg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
