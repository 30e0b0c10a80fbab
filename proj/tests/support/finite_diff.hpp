#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>

// Central-difference gradient oracle. Kept independent of any analytic
// gradient path in the library so it can arbitrate them.
namespace mmkd::test {

struct GradCheck {
  double max_rel_err = 0.0;
  Eigen::Index worst_index = -1;
};

/// Compares an analytic gradient against (f(x+h) - f(x-h)) / 2h coordinate
/// by coordinate. Relative error is normalized by max(1, |analytic|,
/// |numeric|).
inline GradCheck check_gradient(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x0,
                                const Eigen::MatrixXd& analytic, double step = 1e-5) {
  GradCheck result;
  Eigen::MatrixXd x = x0;
  for (Eigen::Index idx = 0; idx < x.size(); ++idx) {
    const double original = x.data()[idx];
    x.data()[idx] = original + step;
    const double up = f(x);
    x.data()[idx] = original - step;
    const double down = f(x);
    x.data()[idx] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.data()[idx];
    const double rel = std::abs(numeric - a) / std::max({1.0, std::abs(numeric), std::abs(a)});
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_index = idx;
    }
  }
  return result;
}

}  // namespace mmkd::test
