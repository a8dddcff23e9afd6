#pragma once

#include "cheapstack/evaluate.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <functional>
#include <memory>
#include <string>

namespace testing_support {

using cheapstack::Mat;
using cheapstack::Vec;

inline std::string data_path(const std::string& name) { return std::string(CHEAPSTACK_TEST_DATA) + "/" + name; }

inline std::shared_ptr<const cheapstack::TransformedGame> supply_chain() {
  static const auto tg = cheapstack::prepare_game(cheapstack::supply_chain_game());
  return tg;
}

inline cheapstack::GameSpec time_varying_game() { return cheapstack::load_game(data_path("time_varying.json")); }

inline std::shared_ptr<const cheapstack::TransformedGame> time_varying() {
  static const auto tg = cheapstack::prepare_game(time_varying_game());
  return tg;
}

inline std::shared_ptr<const cheapstack::Expansion> supply_chain_expansion() {
  static const auto ex = cheapstack::Expansion::build(supply_chain(), 1);
  return ex;
}

inline cheapstack::GameSpec supply_chain_with_z0(double a, double b) {
  Vec z0(2);
  z0 << a, b;
  return cheapstack::supply_chain_game({}, z0);
}

// Max of f over n + 1 equally spaced points in [a, b].
inline double max_over(double a, double b, int n, const std::function<double(double)>& f) {
  double m = 0.0;
  for (int k = 0; k <= n; ++k) m = std::max(m, f(a + (b - a) * k / n));
  return m;
}

inline Mat expm(const Mat& M) { return M.exp(); }

// Composite Gauss-Legendre (5 points) of a matrix-valued integrand on [a, b].
inline Mat integrate_matrix(const std::function<Mat(double)>& f, double a, double b, int panels) {
  static const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                              0.9061798459386640};
  static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                              0.2369268850561891};
  Mat sum;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) {
      Mat v = f(c + 0.5 * h * x[i]) * (0.5 * h * w[i]);
      if (sum.size() == 0)
        sum = v;
      else
        sum += v;
    }
  }
  return sum;
}

}  // namespace testing_support
