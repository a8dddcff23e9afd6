#include "cheapstack/game.hpp"

#include <fstream>
#include <sstream>

namespace cheapstack {

namespace {

std::vector<double> sample_times(double tf, int samples) {
  std::vector<double> t;
  if (samples < 2) return {0.0};
  for (int k = 0; k < samples; ++k) t.push_back(tf * k / (samples - 1));
  return t;
}

void expect_shape(const MatrixFunction& f, int rows, int cols, const char* name) {
  if (f.rows() != rows || f.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << f.rows() << "x" << f.cols() << ", expected " << rows << "x" << cols;
    throw InputError(os.str());
  }
}

// Matrix entries are numbers (constants) or arrays of polynomial coefficients.
MatrixFunction matrix_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw InputError(std::string(name) + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  size_t degree = 0;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw InputError(std::string(name) + " has ragged rows");
    for (const auto& e : row) {
      if (e.is_array()) {
        if (e.empty()) throw InputError(std::string(name) + " has an empty coefficient list");
        degree = std::max(degree, e.size() - 1);
      } else if (!e.is_number()) {
        throw InputError(std::string(name) + " entries must be numbers or coefficient arrays");
      }
    }
  }
  std::vector<Mat> coeffs(degree + 1, Mat::Zero(rows, cols));
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < cols; ++k) {
      const auto& e = j[i][k];
      if (e.is_array()) {
        for (size_t p = 0; p < e.size(); ++p) coeffs[p](i, k) = e[p].get<double>();
      } else {
        coeffs[0](i, k) = e.get<double>();
      }
    }
  }
  return MatrixFunction(std::move(coeffs));
}

nlohmann::json matrix_to_json(const MatrixFunction& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < f.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < f.cols(); ++k) {
      if (f.is_constant()) {
        row.push_back(f.coefficients()[0](i, k));
      } else {
        nlohmann::json c = nlohmann::json::array();
        for (const auto& m : f.coefficients()) c.push_back(m(i, k));
        row.push_back(c);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

Mat symmetric_part(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void GameSpec::check_structure() const {
  if (n <= 0 || r <= 0 || s <= 0) throw InputError("dimensions n, r, s must be positive");
  if (r > n) throw InputError("r must not exceed n");
  if (s >= n) throw InputError("s must be smaller than n");
  if (!(tf > 0.0)) throw InputError("horizon tf must be positive");
  if (!(weight_u > 0.0) || !(weight_v > 0.0)) throw InputError("control weights must be positive");
  expect_shape(A, n, n, "A");
  expect_shape(Bu, n, r, "Bu");
  expect_shape(Bv, n, s, "Bv");
  expect_shape(Du, n, n, "Du");
  expect_shape(Dv, n, n, "Dv");
  expect_shape(Guv, s, s, "Guv");
  expect_shape(Gvu, r, r, "Gvu");
  if (Bc) expect_shape(*Bc, n, n - s, "Bc");
  if (Z0.size() != n) throw InputError("Z0 must have n entries");
  if (!Z0.allFinite()) throw InputError("Z0 must be finite");
}

GameSpec game_from_json(const nlohmann::json& doc) {
  GameSpec g;
  try {
    g.n = doc.at("n").get<int>();
    g.r = doc.at("r").get<int>();
    g.s = doc.at("s").get<int>();
    g.tf = doc.at("tf").get<double>();
    g.weight_u = doc.value("weight_u", 1.0);
    g.weight_v = doc.value("weight_v", 1.0);
    const auto z0 = doc.at("Z0").get<std::vector<double>>();
    g.Z0 = Eigen::Map<const Vec>(z0.data(), static_cast<Eigen::Index>(z0.size()));
    g.A = matrix_from_json(doc.at("A"), "A");
    g.Bu = matrix_from_json(doc.at("Bu"), "Bu");
    g.Bv = matrix_from_json(doc.at("Bv"), "Bv");
    g.Du = matrix_from_json(doc.at("Du"), "Du");
    g.Dv = matrix_from_json(doc.at("Dv"), "Dv");
    g.Guv = doc.contains("Guv") ? matrix_from_json(doc.at("Guv"), "Guv") : MatrixFunction::zero(g.s, g.s);
    g.Gvu = doc.contains("Gvu") ? matrix_from_json(doc.at("Gvu"), "Gvu") : MatrixFunction::zero(g.r, g.r);
    if (doc.contains("Bc")) g.Bc = matrix_from_json(doc.at("Bc"), "Bc");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed game document: ") + e.what());
  }
  g.check_structure();
  return g;
}

nlohmann::json game_to_json(const GameSpec& g) {
  nlohmann::json doc;
  doc["n"] = g.n;
  doc["r"] = g.r;
  doc["s"] = g.s;
  doc["tf"] = g.tf;
  doc["weight_u"] = g.weight_u;
  doc["weight_v"] = g.weight_v;
  doc["Z0"] = std::vector<double>(g.Z0.data(), g.Z0.data() + g.Z0.size());
  doc["A"] = matrix_to_json(g.A);
  doc["Bu"] = matrix_to_json(g.Bu);
  doc["Bv"] = matrix_to_json(g.Bv);
  doc["Du"] = matrix_to_json(g.Du);
  doc["Dv"] = matrix_to_json(g.Dv);
  doc["Guv"] = matrix_to_json(g.Guv);
  doc["Gvu"] = matrix_to_json(g.Gvu);
  if (g.Bc) doc["Bc"] = matrix_to_json(*g.Bc);
  return doc;
}

GameSpec load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open game file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse game file '" + path + "': " + e.what());
  }
  return game_from_json(doc);
}

GameSpec supply_chain_game(const SupplyChainParams& p, const Vec& Z0) {
  GameSpec g;
  g.n = 2;
  g.r = 1;
  g.s = 1;
  g.tf = p.tf;
  Mat A(2, 2), Bu(2, 1), Bv(2, 1), Du = Mat::Zero(2, 2), Dv = Mat::Zero(2, 2), Bc(2, 1);
  A << p.a1, 0.0, p.a2, 0.0;
  Bu << -p.b1, p.b2;
  Bv << p.c1, -p.c2;
  Du(0, 0) = p.kM;
  Dv(1, 1) = p.kR;
  Bc << p.c2, p.c1;
  g.A = MatrixFunction::constant(A);
  g.Bu = MatrixFunction::constant(Bu);
  g.Bv = MatrixFunction::constant(Bv);
  g.Du = MatrixFunction::constant(Du);
  g.Dv = MatrixFunction::constant(Dv);
  g.Guv = MatrixFunction::zero(1, 1);
  g.Gvu = MatrixFunction::zero(1, 1);
  g.Bc = MatrixFunction::constant(Bc);
  g.Z0 = Z0;
  return g;
}

// ---------------------------------------------------------------------------

bool AssumptionReport::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

const AssumptionCheck* AssumptionReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.passed) return &c;
  return nullptr;
}

double definiteness_tolerance(const Mat& m) { return 1e-10 * (1.0 + m.cwiseAbs().maxCoeff()); }

double min_symmetric_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetric_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

AssumptionReport validate_assumptions(const GameSpec& g, int samples) {
  g.check_structure();
  AssumptionReport rep;
  const auto times = sample_times(g.tf, samples);

  auto worst_over = [&](const char* name, auto&& metric, auto&& ok, const char* what) {
    AssumptionCheck c;
    c.name = name;
    bool first = true;
    for (double t : times) {
      const double v = metric(t);
      if (!ok(v, t)) {
        if (c.passed) {
          c.passed = false;
          c.worst_t = t;
          c.worst_value = v;
        }
      } else if (c.passed && (first || v < c.worst_value)) {
        c.worst_t = t;
        c.worst_value = v;
      }
      first = false;
    }
    std::ostringstream os;
    os << what << " = " << c.worst_value << " at t = " << c.worst_t;
    c.detail = os.str();
    rep.checks.push_back(c);
  };

  // A1: Bv(t) full column rank, measured by its smallest singular value.
  worst_over(
      "A1", [&](double t) {
        Eigen::JacobiSVD<Mat> svd(g.Bv(t));
        return svd.singularValues()(g.s - 1);
      },
      [&](double v, double t) { return v > definiteness_tolerance(g.Bv(t)); }, "smallest singular value of Bv");

  // Symmetry is part of the weight assumptions.
  auto symmetric = [&](const MatrixFunction& f, double t) {
    const Mat m = f(t);
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= definiteness_tolerance(m);
  };

  worst_over(
      "A2", [&](double t) { return std::min(min_symmetric_eigenvalue(g.Du(t)), min_symmetric_eigenvalue(g.Dv(t))); },
      [&](double v, double t) {
        const double tol = std::max(definiteness_tolerance(g.Du(t)), definiteness_tolerance(g.Dv(t)));
        return v >= -tol && symmetric(g.Du, t) && symmetric(g.Dv, t);
      },
      "smallest eigenvalue of Du, Dv");

  // A3: own-control weights are positive scalars; cross weights Guv, Gvu are
  // accepted when positive semi-definite (zero in the supply-chain game).
  worst_over(
      "A3",
      [&](double t) {
        return std::min({g.weight_u, g.weight_v, min_symmetric_eigenvalue(g.Guv(t)), min_symmetric_eigenvalue(g.Gvu(t))});
      },
      [&](double v, double t) {
        const double tol = std::max(definiteness_tolerance(g.Guv(t)), definiteness_tolerance(g.Gvu(t)));
        return g.weight_u > 0 && g.weight_v > 0 && v >= -tol && symmetric(g.Guv, t) && symmetric(g.Gvu, t);
      },
      "smallest control weight eigenvalue");

  worst_over(
      "A4",
      [&](double t) {
        const Mat Bv = g.Bv(t);
        return min_symmetric_eigenvalue(Bv.transpose() * g.Dv(t) * Bv);
      },
      [&](double v, double t) {
        const Mat Bv = g.Bv(t);
        return v > definiteness_tolerance(Bv.transpose() * g.Dv(t) * Bv);
      },
      "smallest eigenvalue of Bv'Dv Bv");

  for (const char* name : {"A5", "A6"}) {
    AssumptionCheck c;
    c.name = name;
    c.structural = true;
    c.detail = "polynomial coefficients are smooth";
    rep.checks.push_back(c);
  }
  return rep;
}

MatrixFunction auto_complement(const GameSpec& g) {
  const Mat Bv0 = g.Bv(0.0);
  Eigen::ColPivHouseholderQR<Mat> qr(Bv0);
  const Mat Q = qr.householderQ() * Mat::Identity(g.n, g.n);
  return MatrixFunction::constant(Q.rightCols(g.n - g.s));
}

// ---------------------------------------------------------------------------

Reduction::Reduction(const GameSpec& g, MatrixFunction complement)
    : Bv_(g.Bv), Dv_(g.Dv), Bc_(std::move(complement)) {}

Jet Reduction::L(double t) const {
  const Jet Bv = Jet::of(Bv_, t);
  const Jet Dv = Jet::of(Dv_, t);
  const Jet Bc = Jet::of(Bc_, t);
  const Jet BvtDv = Bv.transpose() * Dv;
  const Jet K = (BvtDv * Bv).inverse();
  return Bc - Bv * (K * (BvtDv * Bc));
}

Jet Reduction::R(double t) const { return hcat(L(t), Jet::of(Bv_, t)); }

Mat Reduction::Rv_inverse(double t) const { return Rv(t).partialPivLu().inverse(); }

Reduction build_reduction(const GameSpec& g, const std::optional<MatrixFunction>& complement, int samples) {
  g.check_structure();
  MatrixFunction Bc = complement ? *complement : (g.Bc ? *g.Bc : auto_complement(g));
  if (Bc.rows() != g.n || Bc.cols() != g.n - g.s) throw InputError("complement has the wrong shape");
  for (double t : sample_times(g.tf, samples)) {
    Mat full(g.n, g.n);
    full << Bc(t), g.Bv(t);
    Eigen::JacobiSVD<Mat> svd(full);
    const Vec sv = svd.singularValues();
    if (sv(g.n - 1) <= 1e-10 * (1.0 + sv(0))) {
      std::ostringstream os;
      os << "invalid complement: (Bc, Bv) is singular at t = " << t;
      throw InputError(os.str());
    }
  }
  Reduction red(g, Bc);
  for (double t : sample_times(g.tf, samples)) {
    const Mat R = red.Rv(t);
    Eigen::JacobiSVD<Mat> svd(R);
    const Vec sv = svd.singularValues();
    if (sv(g.n - 1) <= 1e-10 * (1.0 + sv(0))) {
      std::ostringstream os;
      os << "invalid complement: Rv is singular at t = " << t;
      throw InputError(os.str());
    }
  }
  return red;
}

// ---------------------------------------------------------------------------

TransformedGame::TransformedGame(GameSpec g, Reduction red) : g_(std::move(g)), red_(std::move(red)) {
  z0_ = red_.Rv_inverse(0.0) * g_.Z0;
  constant_ = g_.A.is_constant() && g_.Bu.is_constant() && g_.Bv.is_constant() && g_.Du.is_constant() &&
              g_.Dv.is_constant() && g_.Guv.is_constant() && g_.Gvu.is_constant() &&
              red_.complement().is_constant();
  if (constant_) cached_ = compute(0.0);
}

Blocks TransformedGame::at(double t) const { return constant_ ? cached_ : compute(t); }

Blocks TransformedGame::compute(double t) const {
  const int n = g_.n, s = g_.s, m = n - s;
  const Jet L = red_.L(t);
  const Jet Bvj = Jet::of(g_.Bv, t);
  const Jet R = hcat(L, Bvj);
  const Jet Ri = R.inverse();
  const Jet Ac = Jet::of(g_.A, t);
  const Jet A = Ri * (Ac * R - R.shift());
  const Jet Bu = Ri * Jet::of(g_.Bu, t);
  const Jet Du = R.transpose() * Jet::of(g_.Du, t) * R;
  const Jet Dvc = Jet::of(g_.Dv, t);
  const Jet Dv1 = L.transpose() * Dvc * L;
  const Jet Dv2 = Bvj.transpose() * Dvc * Bvj;

  Blocks b;
  b.n = n;
  b.m = m;
  b.s = s;
  b.r = g_.r;
  b.alpha = g_.weight_u;
  b.A = A.value();
  b.dA = A.first();
  b.Bu = Bu.value();
  b.dBu = Bu.first();
  b.Du = 0.5 * (Du.value() + Du.value().transpose());
  b.dDu = 0.5 * (Du.first() + Du.first().transpose());
  b.Dv = Mat::Zero(n, n);
  b.dDv = Mat::Zero(n, n);
  b.Dv.topLeftCorner(m, m) = 0.5 * (Dv1.value() + Dv1.value().transpose());
  b.Dv.bottomRightCorner(s, s) = 0.5 * (Dv2.value() + Dv2.value().transpose());
  b.dDv.topLeftCorner(m, m) = 0.5 * (Dv1.first() + Dv1.first().transpose());
  b.dDv.bottomRightCorner(s, s) = 0.5 * (Dv2.first() + Dv2.first().transpose());
  b.Guv = g_.Guv(t);
  b.Gvu = g_.Gvu(t);

  b.A1 = b.A.topLeftCorner(m, m);
  b.A2 = b.A.topRightCorner(m, s);
  b.A3 = b.A.bottomLeftCorner(s, m);
  b.A4 = b.A.bottomRightCorner(s, s);
  b.Bu1 = b.Bu.topRows(m);
  b.Bu2 = b.Bu.bottomRows(s);
  b.Du1 = b.Du.topLeftCorner(m, m);
  b.Du2 = b.Du.topRightCorner(m, s);
  b.Du3 = b.Du.bottomRightCorner(s, s);
  b.Dv1 = b.Dv.topLeftCorner(m, m);
  b.Dv2 = b.Dv.bottomRightCorner(s, s);
  const Mat Su = b.Bu * b.Bu.transpose() / b.alpha;
  b.Su1 = Su.topLeftCorner(m, m);
  b.Su2 = Su.topRightCorner(m, s);
  b.Su3 = Su.bottomRightCorner(s, s);
  b.dA2 = b.dA.topRightCorner(m, s);
  b.dDu2 = b.dDu.topRightCorner(m, s);
  b.dDu3 = b.dDu.bottomRightCorner(s, s);
  b.dDv2 = b.dDv.bottomRightCorner(s, s);
  return b;
}

Mat TransformedGame::transformed_Bv(double t) const { return red_.Rv_inverse(t) * g_.Bv(t); }

std::shared_ptr<const TransformedGame> transform_game(const GameSpec& g, const Reduction& red) {
  return std::make_shared<const TransformedGame>(g, red);
}

std::shared_ptr<const TransformedGame> prepare_game(const GameSpec& g) {
  const auto rep = validate_assumptions(g);
  if (const auto* f = rep.first_failure()) throw InputError("assumption " + f->name + " fails: " + f->detail);
  auto tg = transform_game(g, build_reduction(g));
  for (int k = 0; k <= 20; ++k) {
    const double t = g.tf * k / 20.0;
    const Blocks b = tg->at(t);
    if (min_symmetric_eigenvalue(b.Dv2) <= definiteness_tolerance(b.Dv2))
      throw InputError("transformed Dv2 is not positive definite");
  }
  return tg;
}

std::vector<Vec> map_state_back(const TransformedGame& tg, const std::vector<double>& t, const std::vector<Vec>& z) {
  if (t.size() != z.size()) throw InputError("time and state sequences differ in length");
  std::vector<Vec> Z;
  Z.reserve(z.size());
  for (size_t k = 0; k < t.size(); ++k) Z.push_back(tg.to_original(t[k], z[k]));
  return Z;
}

}  // namespace cheapstack
