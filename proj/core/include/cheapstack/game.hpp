#pragma once

#include "cheapstack/matrix_function.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cheapstack {

// Malformed input: wrong shapes, missing fields, violated assumptions.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: singular systems, residuals above tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Open-loop Stackelberg game in original coordinates:
//   Z' = A Z + Bu u + Bv v,  Z(0) = Z0
//   Ju = 1/2 int Z'Du Z + weight_u u'u + weight_v v'Guv v
//   Jv = 1/2 int Z'Dv Z + weight_v v'v + u'Gvu u
// weight_v plays the role of eps^2 for the cheap follower.
struct GameSpec {
  int n = 0;
  int r = 0;
  int s = 0;
  double tf = 1.0;
  MatrixFunction A, Bu, Bv, Du, Dv, Guv, Gvu;
  Vec Z0;
  double weight_u = 1.0;
  double weight_v = 1.0;
  // Optional complement to Bv; the orthogonal completion is used when absent.
  std::optional<MatrixFunction> Bc;

  // Shape and range checks; throws InputError.
  void check_structure() const;
};

GameSpec game_from_json(const nlohmann::json& doc);
nlohmann::json game_to_json(const GameSpec& g);
GameSpec load_game(const std::string& path);

struct SupplyChainParams {
  double a1 = 0.1, a2 = 0.2, b1 = 0.5, b2 = 0.4, c1 = 0.2, c2 = 0.6;
  double kM = 1.0, kR = 5.0, tf = 2.0;
};

// Badwill model: state (B_NB, B_SB), leader = manufacturer, follower = retailer.
GameSpec supply_chain_game(const SupplyChainParams& p = {}, const Vec& Z0 = Vec::Ones(2));

struct AssumptionCheck {
  std::string name;
  bool passed = true;
  bool structural = false;
  double worst_t = 0.0;
  double worst_value = 0.0;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool all_passed() const;
  const AssumptionCheck* first_failure() const;
};

// Tolerance used for definiteness tests: 1e-10 (1 + max-norm).
double definiteness_tolerance(const Mat& m);
double min_symmetric_eigenvalue(const Mat& m);

AssumptionReport validate_assumptions(const GameSpec& g, int samples = 21);

// Deterministic constant complement: orthonormal basis of range(Bv(0))^perp.
MatrixFunction auto_complement(const GameSpec& g);

// Lv = Bc - Bv (Bv'Dv Bv)^{-1} Bv'Dv Bc and Rv = (Lv, Bv). Rational in t, so both
// are evaluated pointwise together with exact derivatives.
class Reduction {
 public:
  Reduction(const GameSpec& g, MatrixFunction complement);

  Jet L(double t) const;
  Jet R(double t) const;
  Mat Rv(double t) const { return R(t).value(); }
  Mat Lv(double t) const { return L(t).value(); }
  Mat Rv_inverse(double t) const;
  const MatrixFunction& complement() const { return Bc_; }

 private:
  MatrixFunction Bv_, Dv_, Bc_;
};

// Throws InputError when (Bc, Bv) is singular at a sampled time.
Reduction build_reduction(const GameSpec& g, const std::optional<MatrixFunction>& complement = std::nullopt,
                          int samples = 21);

// Coefficients of the transformed game at one time instant, partitioned into
// slow (m = n - s) and fast (s) blocks. Derivatives carry the prefix d.
struct Blocks {
  int n = 0, m = 0, s = 0, r = 0;
  double alpha = 1.0;  // leader control weight
  Mat A, Bu, Du, Dv, Guv, Gvu;
  Mat dA, dBu, dDu, dDv;

  Mat A1, A2, A3, A4;
  Mat Bu1, Bu2;
  Mat Du1, Du2, Du3;
  Mat Dv1, Dv2;
  Mat Su1, Su2, Su3;  // blocks of Bu Bu' / alpha
  Mat dA2, dDu2, dDu3, dDv2;
};

// The game after Z = Rv z. Bv becomes (0; I_s) and Dv block diagonal.
class TransformedGame {
 public:
  TransformedGame(GameSpec g, Reduction red);

  const GameSpec& game() const { return g_; }
  const Reduction& reduction() const { return red_; }
  int n() const { return g_.n; }
  int m() const { return g_.n - g_.s; }
  int s() const { return g_.s; }
  int r() const { return g_.r; }
  double tf() const { return g_.tf; }
  double alpha() const { return g_.weight_u; }
  const Vec& z0() const { return z0_; }
  bool is_constant() const { return constant_; }

  Blocks at(double t) const;
  // Rv(t)^{-1} Bv(t); equals (0; I) up to rounding.
  Mat transformed_Bv(double t) const;
  Vec to_original(double t, const Vec& z) const { return red_.Rv(t) * z; }

 private:
  Blocks compute(double t) const;

  GameSpec g_;
  Reduction red_;
  Vec z0_;
  bool constant_ = false;
  Blocks cached_;
};

std::shared_ptr<const TransformedGame> transform_game(const GameSpec& g, const Reduction& red);
// Validate, reduce with the configured complement, transform.
std::shared_ptr<const TransformedGame> prepare_game(const GameSpec& g);

// Z(t_k) = Rv(t_k) z(t_k) on every node.
std::vector<Vec> map_state_back(const TransformedGame& tg, const std::vector<double>& t,
                                const std::vector<Vec>& z);

}  // namespace cheapstack
