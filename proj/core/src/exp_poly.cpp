#include "cheapstack/exp_poly.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace cheapstack {

namespace {

double factorial_ratio(int k, int p) {
  // k! / p! for p <= k
  double r = 1.0;
  for (int i = p + 1; i <= k; ++i) r *= i;
  return r;
}

}  // namespace

std::shared_ptr<const SpectralBasis> SpectralBasis::make(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("eigen-decomposition failed");
  auto b = std::make_shared<SpectralBasis>();
  b->V = es.eigenvectors();
  b->lambda = es.eigenvalues();
  if (b->lambda.size() == 0 || b->lambda(0) <= 0.0) throw std::runtime_error("matrix is not positive definite");

  const Eigen::Index s = b->lambda.size();
  b->rate_of.assign(static_cast<size_t>(s), 0);
  Eigen::Index start = 0;
  while (start < s) {
    Eigen::Index end = start + 1;
    while (end < s && b->lambda(end) - b->lambda(end - 1) <= 1e-9 * std::max(1.0, b->lambda(end))) ++end;
    const double mean = b->lambda.segment(start, end - start).mean();
    for (Eigen::Index i = start; i < end; ++i) {
      b->lambda(i) = mean;
      b->rate_of[static_cast<size_t>(i)] = static_cast<int>(b->rates.size());
    }
    b->rates.push_back(mean);
    start = end;
  }
  b->S = b->V * b->lambda.asDiagonal() * b->V.transpose();
  return b;
}

Mat SpectralBasis::exp_neg(double x) const {
  const Vec e = (-lambda * x).array().exp();
  return V * e.asDiagonal() * V.transpose();
}

ExpPoly::ExpPoly(std::shared_ptr<const SpectralBasis> basis, int dim) : basis_(std::move(basis)), dim_(dim) {}

ExpPoly ExpPoly::exp_times(std::shared_ptr<const SpectralBasis> basis, const Vec& v) {
  ExpPoly f(basis, static_cast<int>(v.size()));
  const Vec w = basis->V.transpose() * v;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    f.add_term(basis->rate_of[static_cast<size_t>(i)], 0, basis->V.col(i) * w(i));
  return f;
}

bool ExpPoly::is_zero() const {
  for (const auto& [k, c] : terms_)
    if (!c.isZero(0.0)) return false;
  return true;
}

void ExpPoly::add_term(int rate, int power, const Vec& c) {
  auto it = terms_.find({rate, power});
  if (it == terms_.end())
    terms_.emplace(Key{rate, power}, c);
  else
    it->second += c;
}

Vec ExpPoly::operator()(double x) const {
  Vec out = Vec::Zero(dim_);
  if (std::isinf(x)) return out;
  for (const auto& [key, c] : terms_) {
    const double r = basis_->rates[static_cast<size_t>(key.first)];
    out += c * (std::pow(x, key.second) * std::exp(-r * x));
  }
  return out;
}

ExpPoly ExpPoly::derivative() const {
  ExpPoly d(basis_, dim_);
  for (const auto& [key, c] : terms_) {
    const double r = basis_->rates[static_cast<size_t>(key.first)];
    if (key.second > 0) d.add_term(key.first, key.second - 1, c * key.second);
    d.add_term(key.first, key.second, -r * c);
  }
  return d;
}

ExpPoly ExpPoly::times_x() const {
  ExpPoly d(basis_, dim_);
  for (const auto& [key, c] : terms_) d.add_term(key.first, key.second + 1, c);
  return d;
}

ExpPoly ExpPoly::tail() const {
  // int_x^inf s^k e^{-r s} ds = e^{-r x} sum_p k!/p! x^p / r^{k-p+1}
  ExpPoly d(basis_, dim_);
  for (const auto& [key, c] : terms_) {
    const double r = basis_->rates[static_cast<size_t>(key.first)];
    const int k = key.second;
    for (int p = 0; p <= k; ++p) d.add_term(key.first, p, c * (factorial_ratio(k, p) / std::pow(r, k - p + 1)));
  }
  return d;
}

ExpPoly ExpPoly::solve_growing() const {
  if (dim_ != basis_->lambda.size()) throw std::logic_error("solve_growing: dimension mismatch");
  const SpectralBasis& b = *basis_;
  std::map<Key, Vec> modal;
  for (const auto& [key, c] : terms_) {
    const double r = b.rates[static_cast<size_t>(key.first)];
    const int k = key.second;
    const Vec ct = b.V.transpose() * c;
    for (int i = 0; i < dim_; ++i) {
      const double q = b.lambda(i) + r;
      for (int p = 0; p <= k; ++p) {
        auto& slot = modal.try_emplace({key.first, p}, Vec::Zero(dim_)).first->second;
        slot(i) -= ct(i) * factorial_ratio(k, p) / std::pow(q, k - p + 1);
      }
    }
  }
  ExpPoly out(basis_, dim_);
  for (const auto& [key, v] : modal) out.add_term(key.first, key.second, b.V * v);
  return out;
}

ExpPoly ExpPoly::solve_decaying(const Vec& y0) const {
  if (dim_ != basis_->lambda.size()) throw std::logic_error("solve_decaying: dimension mismatch");
  const SpectralBasis& b = *basis_;
  std::map<Key, Vec> modal;
  auto slot = [&](int rate, int power) -> Vec& {
    return modal.try_emplace({rate, power}, Vec::Zero(dim_)).first->second;
  };
  Vec at_zero = Vec::Zero(dim_);
  for (const auto& [key, c] : terms_) {
    const double r = b.rates[static_cast<size_t>(key.first)];
    const int k = key.second;
    const Vec ct = b.V.transpose() * c;
    for (int i = 0; i < dim_; ++i) {
      if (b.rate_of[static_cast<size_t>(i)] == key.first) {
        // resonant: c x^{k+1}/(k+1) e^{-r x}
        slot(key.first, k + 1)(i) += ct(i) / (k + 1);
        continue;
      }
      // a' + d a = c x^k with a polynomial of degree k
      const double d = b.lambda(i) - r;
      double a = ct(i) / d;
      for (int p = k; p >= 0; --p) {
        slot(key.first, p)(i) += a;
        if (p == 0) at_zero(i) += a;
        a = -p * a / d;
      }
    }
  }
  const Vec h = b.V.transpose() * y0 - at_zero;
  for (int i = 0; i < dim_; ++i) slot(b.rate_of[static_cast<size_t>(i)], 0)(i) += h(i);
  ExpPoly out(basis_, dim_);
  for (const auto& [key, v] : modal) out.add_term(key.first, key.second, b.V * v);
  return out;
}

ExpPoly ExpPoly::operator+(const ExpPoly& o) const {
  if (!basis_) return o;
  if (!o.basis_) return *this;
  if (basis_ != o.basis_ || dim_ != o.dim_) throw std::logic_error("ExpPoly: incompatible operands");
  ExpPoly out = *this;
  for (const auto& [key, c] : o.terms_) out.add_term(key.first, key.second, c);
  return out;
}

ExpPoly ExpPoly::operator-() const { return *this * -1.0; }
ExpPoly ExpPoly::operator-(const ExpPoly& o) const { return *this + (-o); }

ExpPoly ExpPoly::operator*(double a) const {
  ExpPoly out = *this;
  for (auto& [key, c] : out.terms_) c *= a;
  return out;
}

ExpPoly operator*(const Mat& m, const ExpPoly& f) {
  if (m.cols() != f.dim_) throw std::logic_error("ExpPoly: matrix shape mismatch");
  ExpPoly out(f.basis_, static_cast<int>(m.rows()));
  for (const auto& [key, c] : f.terms_) out.terms_.emplace(key, m * c);
  return out;
}

nlohmann::json ExpPoly::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["rates"] = basis_ ? basis_->rates : std::vector<double>{};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [key, c] : terms_) {
    arr.push_back({{"rate", key.first}, {"power", key.second}, {"coefficient", std::vector<double>(c.data(), c.data() + c.size())}});
  }
  j["terms"] = arr;
  return j;
}

}  // namespace cheapstack
