#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace cheapstack {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Matrix-valued polynomial in t. coefficients()[k] multiplies t^k.
class MatrixFunction {
 public:
  MatrixFunction() = default;
  MatrixFunction(int rows, int cols);
  explicit MatrixFunction(std::vector<Mat> coefficients);

  static MatrixFunction constant(const Mat& value);
  static MatrixFunction zero(int rows, int cols) { return MatrixFunction(rows, cols); }
  static MatrixFunction identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_constant() const { return coeffs_.size() <= 1; }
  bool is_zero() const;
  const std::vector<Mat>& coefficients() const { return coeffs_; }

  Mat operator()(double t) const { return derivative(t, 0); }
  // order-th derivative evaluated at t.
  Mat derivative(double t, int order) const;
  MatrixFunction differentiate() const;
  MatrixFunction transpose() const;

  friend MatrixFunction operator+(const MatrixFunction& a, const MatrixFunction& b);
  friend MatrixFunction operator-(const MatrixFunction& a, const MatrixFunction& b);
  friend MatrixFunction operator*(const MatrixFunction& a, const MatrixFunction& b);
  friend MatrixFunction operator*(double c, const MatrixFunction& a);

 private:
  void trim();

  int rows_ = 0;
  int cols_ = 0;
  std::vector<Mat> coeffs_;
};

// Truncated Taylor jet: d[k] holds the k-th derivative, valid for k <= order.
struct Jet {
  static constexpr int kMaxOrder = 3;
  std::array<Mat, kMaxOrder + 1> d;
  int order = kMaxOrder;

  const Mat& value() const { return d[0]; }
  const Mat& first() const { return d[1]; }
  int rows() const { return static_cast<int>(d[0].rows()); }
  int cols() const { return static_cast<int>(d[0].cols()); }

  static Jet of(const MatrixFunction& f, double t);
  static Jet constant(const Mat& value);

  Jet transpose() const;
  Jet inverse() const;
  // Drops the value: the jet of the first derivative, one order shorter.
  Jet shift() const;
  Jet block(int i, int j, int rows, int cols) const;

  friend Jet operator+(const Jet& a, const Jet& b);
  friend Jet operator-(const Jet& a, const Jet& b);
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator*(double c, const Jet& a);
};

Jet hcat(const Jet& a, const Jet& b);

}  // namespace cheapstack
