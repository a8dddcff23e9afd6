#include "cheapstack/matrix_function.hpp"

#include <algorithm>
#include <stdexcept>

namespace cheapstack {

MatrixFunction::MatrixFunction(int rows, int cols)
    : rows_(rows), cols_(cols), coeffs_{Mat::Zero(rows, cols)} {}

MatrixFunction::MatrixFunction(std::vector<Mat> coefficients) : coeffs_(std::move(coefficients)) {
  if (coeffs_.empty()) throw std::invalid_argument("matrix function needs at least one coefficient");
  rows_ = static_cast<int>(coeffs_[0].rows());
  cols_ = static_cast<int>(coeffs_[0].cols());
  for (const auto& c : coeffs_) {
    if (c.rows() != rows_ || c.cols() != cols_)
      throw std::invalid_argument("matrix function coefficients differ in shape");
  }
  trim();
}

MatrixFunction MatrixFunction::constant(const Mat& value) { return MatrixFunction(std::vector<Mat>{value}); }

MatrixFunction MatrixFunction::identity(int n) { return constant(Mat::Identity(n, n)); }

void MatrixFunction::trim() {
  while (coeffs_.size() > 1 && coeffs_.back().isZero(0.0)) coeffs_.pop_back();
}

bool MatrixFunction::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](const Mat& c) { return c.isZero(0.0); });
}

Mat MatrixFunction::derivative(double t, int order) const {
  Mat out = Mat::Zero(rows_, cols_);
  const int deg = degree();
  // Horner on the differentiated coefficients.
  for (int k = deg; k >= order; --k) {
    double falling = 1.0;
    for (int j = 0; j < order; ++j) falling *= static_cast<double>(k - j);
    out = out * t + falling * coeffs_[k];
  }
  return out;
}

MatrixFunction MatrixFunction::differentiate() const {
  if (degree() == 0) return zero(rows_, cols_);
  std::vector<Mat> c;
  for (int k = 1; k <= degree(); ++k) c.push_back(static_cast<double>(k) * coeffs_[k]);
  return MatrixFunction(std::move(c));
}

MatrixFunction MatrixFunction::transpose() const {
  std::vector<Mat> c;
  for (const auto& m : coeffs_) c.push_back(m.transpose());
  return MatrixFunction(std::move(c));
}

MatrixFunction operator+(const MatrixFunction& a, const MatrixFunction& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("shape mismatch in sum");
  std::vector<Mat> c(std::max(a.coeffs_.size(), b.coeffs_.size()), Mat::Zero(a.rows_, a.cols_));
  for (size_t k = 0; k < a.coeffs_.size(); ++k) c[k] += a.coeffs_[k];
  for (size_t k = 0; k < b.coeffs_.size(); ++k) c[k] += b.coeffs_[k];
  return MatrixFunction(std::move(c));
}

MatrixFunction operator-(const MatrixFunction& a, const MatrixFunction& b) { return a + (-1.0) * b; }

MatrixFunction operator*(double c, const MatrixFunction& a) {
  std::vector<Mat> out;
  for (const auto& m : a.coeffs_) out.push_back(c * m);
  return MatrixFunction(std::move(out));
}

MatrixFunction operator*(const MatrixFunction& a, const MatrixFunction& b) {
  if (a.cols_ != b.rows_) throw std::invalid_argument("shape mismatch in product");
  std::vector<Mat> c(a.coeffs_.size() + b.coeffs_.size() - 1, Mat::Zero(a.rows_, b.cols_));
  for (size_t i = 0; i < a.coeffs_.size(); ++i)
    for (size_t j = 0; j < b.coeffs_.size(); ++j) c[i + j] += a.coeffs_[i] * b.coeffs_[j];
  return MatrixFunction(std::move(c));
}

// ---------------------------------------------------------------------------

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

Jet Jet::of(const MatrixFunction& f, double t) {
  Jet j;
  for (int k = 0; k <= kMaxOrder; ++k) j.d[k] = f.derivative(t, k);
  return j;
}

Jet Jet::constant(const Mat& value) {
  Jet j;
  j.d[0] = value;
  for (int k = 1; k <= kMaxOrder; ++k) j.d[k] = Mat::Zero(value.rows(), value.cols());
  return j;
}

Jet Jet::transpose() const {
  Jet j;
  j.order = order;
  for (int k = 0; k <= order; ++k) j.d[k] = d[k].transpose();
  return j;
}

Jet Jet::inverse() const {
  // From sum_k C(n,k) Y^(k) X^(n-k) = 0 for n >= 1.
  Jet x;
  x.order = order;
  const auto lu = d[0].partialPivLu();
  x.d[0] = lu.inverse();
  for (int n = 1; n <= order; ++n) {
    Mat acc = Mat::Zero(d[0].rows(), d[0].cols());
    for (int k = 1; k <= n; ++k) acc += binomial(n, k) * d[k] * x.d[n - k];
    x.d[n] = -x.d[0] * acc;
  }
  return x;
}

Jet Jet::shift() const {
  if (order == 0) throw std::logic_error("cannot differentiate a zeroth-order jet");
  Jet j;
  j.order = order - 1;
  for (int k = 0; k <= j.order; ++k) j.d[k] = d[k + 1];
  return j;
}

Jet Jet::block(int i, int j, int rows, int cols) const {
  Jet b;
  b.order = order;
  for (int k = 0; k <= order; ++k) b.d[k] = d[k].block(i, j, rows, cols);
  return b;
}

Jet operator+(const Jet& a, const Jet& b) {
  Jet j;
  j.order = std::min(a.order, b.order);
  for (int k = 0; k <= j.order; ++k) j.d[k] = a.d[k] + b.d[k];
  return j;
}

Jet operator-(const Jet& a, const Jet& b) {
  Jet j;
  j.order = std::min(a.order, b.order);
  for (int k = 0; k <= j.order; ++k) j.d[k] = a.d[k] - b.d[k];
  return j;
}

Jet operator*(double c, const Jet& a) {
  Jet j;
  j.order = a.order;
  for (int k = 0; k <= j.order; ++k) j.d[k] = c * a.d[k];
  return j;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet j;
  j.order = std::min(a.order, b.order);
  for (int n = 0; n <= j.order; ++n) {
    j.d[n] = Mat::Zero(a.d[0].rows(), b.d[0].cols());
    for (int k = 0; k <= n; ++k) j.d[n] += binomial(n, k) * a.d[k] * b.d[n - k];
  }
  return j;
}

Jet hcat(const Jet& a, const Jet& b) {
  Jet j;
  j.order = std::min(a.order, b.order);
  for (int k = 0; k <= j.order; ++k) {
    j.d[k].resize(a.d[k].rows(), a.d[k].cols() + b.d[k].cols());
    j.d[k] << a.d[k], b.d[k];
  }
  return j;
}

}  // namespace cheapstack
