#include "cheapstack/linear_ode.hpp"

#include "cheapstack/game.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cheapstack {

namespace {

constexpr int kMaxRulePoints = 32;

QuadratureRule compute_rule(int points) {
  // Newton iteration on the Legendre polynomial, mapped from [-1, 1] to [0, 1].
  QuadratureRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  for (int i = 0; i < points; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (points == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= points; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (points == 1) p0 = 1.0, p1 = x;
    dp = points * (x * p1 - p0) / (x * x - 1.0);
    // Ascending order on [0, 1].
    rule.nodes(points - 1 - i) = 0.5 * (1.0 + x);
    rule.weights(points - 1 - i) = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

struct RkTableau {
  Mat a;
  Vec b, c;
};

RkTableau compute_tableau(int stages) {
  const QuadratureRule& rule = gauss_legendre(stages);
  RkTableau tab;
  tab.c = rule.nodes;
  tab.b = rule.weights;
  tab.a.resize(stages, stages);
  // a_ij = int_0^{c_i} l_j, integrated exactly by the same rule on [0, c_i].
  for (int i = 0; i < stages; ++i) {
    for (int j = 0; j < stages; ++j) {
      double acc = 0.0;
      for (int q = 0; q < stages; ++q) {
        const double tau = tab.c(i) * rule.nodes(q);
        double l = 1.0;
        for (int k = 0; k < stages; ++k)
          if (k != j) l *= (tau - tab.c(k)) / (tab.c(j) - tab.c(k));
        acc += rule.weights(q) * l;
      }
      tab.a(i, j) = tab.c(i) * acc;
    }
  }
  return tab;
}

const RkTableau& tableau(int stages) {
  static const std::vector<RkTableau> table = [] {
    std::vector<RkTableau> t(9);
    for (int s = 1; s <= 8; ++s) t[s] = compute_tableau(s);
    return t;
  }();
  if (stages < 1 || stages > 8) throw std::invalid_argument("Gauss-Legendre stages must be in 1..8");
  return table[stages];
}

}  // namespace

const QuadratureRule& gauss_legendre(int points) {
  static const std::vector<QuadratureRule> table = [] {
    std::vector<QuadratureRule> t(kMaxRulePoints + 1);
    for (int p = 1; p <= kMaxRulePoints; ++p) t[p] = compute_rule(p);
    return t;
  }();
  if (points < 1 || points > kMaxRulePoints) throw std::invalid_argument("unsupported quadrature order");
  return table[points];
}

// ---------------------------------------------------------------------------

Propagator::Propagator(std::shared_ptr<const LinearOde> ode, double max_step, int stages)
    : ode_(std::move(ode)), max_step_(max_step), stages_(stages) {
  const RkTableau& tab = tableau(stages);
  a_ = tab.a;
  b_ = tab.b;
  c_ = tab.c;
}

void Propagator::step(double t, double h, const Vec* y0, Mat* T, Vec* out, Vec* p) const {
  const int N = ode_->dim;
  const int s = stages_;
  std::vector<Mat> Ms(s);
  std::vector<Vec> gs(s);
  const bool forced = static_cast<bool>(ode_->g);
  if (ode_->autonomous) {
    const Mat M = ode_->M(t);
    for (int i = 0; i < s; ++i) Ms[i] = M;
  } else {
    for (int i = 0; i < s; ++i) Ms[i] = ode_->M(t + c_(i) * h);
  }
  for (int i = 0; i < s; ++i) gs[i] = forced ? ode_->g(t + c_(i) * h) : Vec::Zero(N);

  Mat K = Mat::Identity(s * N, s * N);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) K.block(i * N, j * N, N, N).noalias() -= (h * a_(i, j)) * Ms[j];
  const Eigen::PartialPivLU<Mat> lu(K);

  Vec forcing(s * N);
  for (int i = 0; i < s; ++i) {
    Vec acc = Vec::Zero(N);
    for (int j = 0; j < s; ++j) acc += a_(i, j) * gs[j];
    forcing.segment(i * N, N) = h * acc;
  }

  if (T) {
    Mat rhs(s * N, N + 1);
    for (int i = 0; i < s; ++i) {
      rhs.block(i * N, 0, N, N).setIdentity();
      rhs.block(i * N, N, N, 1) = forcing.segment(i * N, N);
    }
    const Mat Y = lu.solve(rhs);
    Mat Ts = Mat::Identity(N, N);
    Vec ps = Vec::Zero(N);
    for (int i = 0; i < s; ++i) {
      const Mat MY = Ms[i] * Y.middleRows(i * N, N);
      Ts += (h * b_(i)) * MY.leftCols(N);
      ps += (h * b_(i)) * (MY.col(N) + gs[i]);
    }
    *T = Ts;
    *p = ps;
  } else {
    Vec rhs(s * N);
    for (int i = 0; i < s; ++i) rhs.segment(i * N, N) = *y0 + forcing.segment(i * N, N);
    const Vec Y = lu.solve(rhs);
    Vec y1 = *y0;
    for (int i = 0; i < s; ++i) y1 += (h * b_(i)) * (Ms[i] * Y.segment(i * N, N) + gs[i]);
    *out = y1;
  }
}

void Propagator::transfer(double t0, double t1, Mat& T, Vec& p) const {
  const int N = ode_->dim;
  const double len = t1 - t0;
  const int nsteps = std::max(1, static_cast<int>(std::ceil(std::abs(len) / max_step_ - 1e-9)));
  const double h = len / nsteps;
  T = Mat::Identity(N, N);
  p = Vec::Zero(N);
  if (len == 0.0) return;
  if (ode_->autonomous && !ode_->g) {
    Mat Ts;
    Vec ps;
    step(t0, h, nullptr, &Ts, nullptr, &ps);
    for (int k = 0; k < nsteps; ++k) T = Ts * T;
    return;
  }
  for (int k = 0; k < nsteps; ++k) {
    Mat Ts;
    Vec ps;
    step(t0 + k * h, h, nullptr, &Ts, nullptr, &ps);
    T = Ts * T;
    p = Ts * p + ps;
  }
}

Vec Propagator::propagate(double t0, double t1, const Vec& y0) const {
  const double len = t1 - t0;
  if (len == 0.0) return y0;
  const int nsteps = std::max(1, static_cast<int>(std::ceil(std::abs(len) / max_step_ - 1e-9)));
  const double h = len / nsteps;
  Vec y = y0;
  for (int k = 0; k < nsteps; ++k) {
    Vec next;
    step(t0 + k * h, h, &y, nullptr, &next, nullptr);
    y = std::move(next);
  }
  return y;
}

double stiffness_estimate(const LinearOde& ode, double tf, int samples) {
  double rho = 0.0;
  const int count = ode.autonomous ? 1 : samples;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : tf * k / (count - 1);
    Eigen::EigenSolver<Mat> es(ode.M(t), false);
    rho = std::max(rho, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return rho;
}

// ---------------------------------------------------------------------------

double layer_width(double eps, double kappa, double tf) {
  if (!(eps > 0.0) || eps >= 1.0) return 0.0;
  return std::min(tf / 3.0, kappa * eps * std::log(1.0 / eps));
}

std::vector<double> build_mesh(const MeshPlan& plan, int refine) {
  const double tf = plan.tf;
  const double cap = tf / std::max(1, plan.hint);
  const double scale = std::ldexp(1.0, -refine);
  const double rho = std::max(plan.rho, 1e-300);
  const double h_layer = std::min(0.5 / rho, cap) * scale;
  const double h_inner = std::min(2.0 / rho, cap) * scale;
  const double wl = std::clamp(plan.layer_left, 0.0, tf / 3.0);
  const double wr = std::clamp(plan.layer_right, 0.0, tf / 3.0);

  std::vector<double> nodes{0.0};
  auto zone = [&](double a, double b, double h) {
    if (b - a <= 0.0) return;
    const int count = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    for (int i = 1; i <= count; ++i) nodes.push_back(i == count ? b : a + (b - a) * i / count);
  };
  zone(0.0, wl, h_layer);
  zone(wl, tf - wr, h_inner);
  zone(tf - wr, tf, h_layer);
  nodes.back() = tf;
  return nodes;
}

// ---------------------------------------------------------------------------

DenseTrajectory::DenseTrajectory(std::shared_ptr<const LinearOde> ode, std::vector<double> nodes, std::vector<Vec> y,
                                 double max_step)
    : ode_(std::move(ode)), nodes_(std::move(nodes)), y_(std::move(y)), max_step_(max_step) {}

size_t DenseTrajectory::interval_of(double t) const {
  if (nodes_.size() < 2) return 0;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  size_t k = it == nodes_.begin() ? 0 : static_cast<size_t>(it - nodes_.begin()) - 1;
  return std::min(k, nodes_.size() - 2);
}

Vec DenseTrajectory::operator()(double t) const {
  if (nodes_.size() == 1) return y_[0];
  const size_t k = interval_of(t);
  if (t == nodes_[k]) return y_[k];
  if (t == nodes_[k + 1]) return y_[k + 1];
  Propagator prop(ode_, max_step_);
  return prop.propagate(nodes_[k], t, y_[k]);
}

std::vector<Vec> DenseTrajectory::sample_interval(size_t k, const std::vector<double>& times) const {
  Propagator prop(ode_, max_step_);
  std::vector<Vec> out;
  out.reserve(times.size());
  double t = nodes_[k];
  Vec y = y_[k];
  for (double ti : times) {
    y = prop.propagate(t, ti, y);
    t = ti;
    out.push_back(y);
  }
  return out;
}

double DenseTrajectory::integrate(const std::function<double(double, const Vec&)>& f, int points) const {
  const QuadratureRule& rule = gauss_legendre(points);
  double total = 0.0;
  std::vector<double> ts(points);
  for (size_t k = 0; k + 1 < nodes_.size(); ++k) {
    const double a = nodes_[k], h = nodes_[k + 1] - nodes_[k];
    for (int q = 0; q < points; ++q) ts[q] = a + h * rule.nodes(q);
    const auto ys = sample_interval(k, ts);
    double acc = 0.0;
    for (int q = 0; q < points; ++q) acc += rule.weights(q) * f(ts[q], ys[q]);
    total += h * acc;
  }
  return total;
}

double continuity_defect(const DenseTrajectory& traj, int stages) {
  const auto& t = traj.nodes();
  const auto& y = traj.values();
  double scale = 1.0;
  for (const auto& v : y) scale = std::max(scale, v.cwiseAbs().maxCoeff());
  const Propagator fine(traj.ode_ptr(), 0.5 * traj.max_step(), stages);
  double worst = 0.0;
  for (size_t k = 0; k + 1 < t.size(); ++k) {
    const double mid = 0.5 * (t[k] + t[k + 1]);
    const Vec fwd = fine.propagate(t[k], mid, y[k]);
    const Vec bwd = fine.propagate(t[k + 1], mid, y[k + 1]);
    worst = std::max(worst, (fwd - bwd).cwiseAbs().maxCoeff());
  }
  return worst / scale;
}


namespace {

double step_for(const MeshPlan& plan, const ShootingOptions& opts, int refine) {
  const double cap = plan.tf / std::max(1, plan.hint);
  const double stiff = plan.rho > 0.0 ? opts.step_factor / plan.rho : cap;
  return std::min(stiff, cap) * std::ldexp(1.0, -refine);
}

}  // namespace

ShootingResult solve_shooting(std::shared_ptr<const LinearOde> ode, const SeparatedBc& bc, const MeshPlan& plan,
                              const ShootingOptions& opts) {
  const int N = ode->dim;
  if (bc.B0.rows() + bc.Bf.rows() != N || bc.B0.cols() != N || bc.Bf.cols() != N)
    throw std::invalid_argument("boundary conditions do not match the system dimension");

  double achieved = 0.0;
  for (int refine = 0; refine <= opts.max_refine; ++refine) {
    const auto nodes = build_mesh(plan, refine);
    const double h = step_for(plan, opts, refine);
    const Propagator prop(ode, h, opts.stages);
    const int K = static_cast<int>(nodes.size()) - 1;
    const int unknowns = (K + 1) * N;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(K) * N * (N + 1) + 2 * N * N);
    Vec rhs = Vec::Zero(unknowns);
    int row = 0;
    for (int i = 0; i < bc.B0.rows(); ++i, ++row) {
      for (int j = 0; j < N; ++j)
        if (bc.B0(i, j) != 0.0) trip.emplace_back(row, j, bc.B0(i, j));
      rhs(row) = bc.b0(i);
    }
    // Identical interval lengths share one transfer for autonomous, unforced systems.
    std::map<long long, std::pair<Mat, Vec>> cache;
    const bool reuse = ode->autonomous && !ode->g;
    for (int k = 0; k < K; ++k) {
      Mat T;
      Vec p;
      const double len = nodes[k + 1] - nodes[k];
      const long long key = std::llround(len / plan.tf * 1e12);
      auto it = reuse ? cache.find(key) : cache.end();
      if (it != cache.end()) {
        T = it->second.first;
        p = it->second.second;
      } else {
        prop.transfer(nodes[k], nodes[k + 1], T, p);
        if (reuse) cache.emplace(key, std::make_pair(T, p));
      }
      for (int i = 0; i < N; ++i) {
        trip.emplace_back(row + i, (k + 1) * N + i, 1.0);
        for (int j = 0; j < N; ++j)
          if (T(i, j) != 0.0) trip.emplace_back(row + i, k * N + j, -T(i, j));
        rhs(row + i) = p(i);
      }
      row += N;
    }
    for (int i = 0; i < bc.Bf.rows(); ++i, ++row) {
      for (int j = 0; j < N; ++j)
        if (bc.Bf(i, j) != 0.0) trip.emplace_back(row, K * N + j, bc.Bf(i, j));
      rhs(row) = bc.bf(i);
    }

    Eigen::SparseMatrix<double> G(unknowns, unknowns);
    G.setFromTriplets(trip.begin(), trip.end());
    G.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(G);
    if (lu.info() != Eigen::Success)
      throw NumericalError("reduced problem unsolvable or non-unique: singular shooting matrix");
    const Vec sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite())
      throw NumericalError("reduced problem unsolvable or non-unique: shooting solve failed");

    std::vector<Vec> y(K + 1);
    for (int k = 0; k <= K; ++k) y[k] = sol.segment(k * N, N);

    ShootingResult res;
    res.trajectory = DenseTrajectory(ode, nodes, y, h);
    res.refinements = refine;
    double scale = 1.0;
    for (const auto& v : y) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    const double r0 = bc.B0.rows() ? (bc.B0 * y.front() - bc.b0).cwiseAbs().maxCoeff() : 0.0;
    const double rf = bc.Bf.rows() ? (bc.Bf * y.back() - bc.bf).cwiseAbs().maxCoeff() : 0.0;
    res.bc_residual = std::max(r0, rf) / scale;
    res.ode_residual = continuity_defect(res.trajectory, opts.stages);
    achieved = res.ode_residual;
    if (res.ode_residual <= opts.tol_ode) return res;
  }
  std::ostringstream os;
  os << "shooting did not converge: residual " << achieved << " above tolerance " << opts.tol_ode
     << " after " << opts.max_refine << " refinements";
  throw NumericalError(os.str());
}

DenseTrajectory solve_ivp(std::shared_ptr<const LinearOde> ode, const Vec& y0, const MeshPlan& plan,
                          const ShootingOptions& opts, int refine) {
  const auto nodes = build_mesh(plan, refine);
  const double h = step_for(plan, opts, refine);
  const Propagator prop(ode, h, opts.stages);
  std::vector<Vec> y{y0};
  y.reserve(nodes.size());
  for (size_t k = 0; k + 1 < nodes.size(); ++k) {
    Vec next = prop.propagate(nodes[k], nodes[k + 1], y.back());
    if (!next.allFinite()) throw NumericalError("initial-value integration produced non-finite values");
    y.push_back(std::move(next));
  }
  return DenseTrajectory(ode, nodes, std::move(y), h);
}

}  // namespace cheapstack
