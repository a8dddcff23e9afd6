#pragma once

#include "cheapstack/matrix_function.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <utility>
#include <vector>

namespace cheapstack {

// Eigen-decomposition S = V diag(lambda) V' of a symmetric positive definite
// matrix. Eigenvalues closer than 1e-9 relative are merged into one rate.
struct SpectralBasis {
  Mat S;
  Mat V;
  Vec lambda;
  std::vector<double> rates;  // distinct merged eigenvalues, ascending
  std::vector<int> rate_of;   // eigenvalue index -> rate index

  static std::shared_ptr<const SpectralBasis> make(const Mat& S);
  double min_rate() const { return rates.front(); }
  // e^{-S x}
  Mat exp_neg(double x) const;
};

// Vector function sum_{j,k} c_{j,k} x^k exp(-r_j x) on x >= 0 with rates r_j
// taken from a SpectralBasis.
class ExpPoly {
 public:
  using Key = std::pair<int, int>;  // (rate index, power)

  ExpPoly() = default;
  ExpPoly(std::shared_ptr<const SpectralBasis> basis, int dim);

  // exp(-S x) v
  static ExpPoly exp_times(std::shared_ptr<const SpectralBasis> basis, const Vec& v);

  int dim() const { return dim_; }
  const SpectralBasis& basis() const { return *basis_; }
  std::shared_ptr<const SpectralBasis> basis_ptr() const { return basis_; }
  const std::map<Key, Vec>& terms() const { return terms_; }
  bool is_zero() const;

  Vec operator()(double x) const;
  ExpPoly derivative() const;
  ExpPoly times_x() const;
  // x -> int_x^inf f
  ExpPoly tail() const;
  Vec integral() const { return tail()(0.0); }

  // Decaying solution of x' = S x + f, with f = *this.
  ExpPoly solve_growing() const;
  // Solution of y' = -S y + f with y(0) = y0, f = *this.
  ExpPoly solve_decaying(const Vec& y0) const;

  ExpPoly operator+(const ExpPoly& o) const;
  ExpPoly operator-(const ExpPoly& o) const;
  ExpPoly operator-() const;
  ExpPoly operator*(double a) const;
  friend ExpPoly operator*(const Mat& m, const ExpPoly& f);

  void add_term(int rate, int power, const Vec& c);
  nlohmann::json to_json() const;

 private:
  std::shared_ptr<const SpectralBasis> basis_;
  int dim_ = 0;
  std::map<Key, Vec> terms_;
};

}  // namespace cheapstack
