#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmkd/errors.hpp"

namespace mmkd {

/// Row-wise softmax, max-shifted for stability.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Mat e = shifted.array().exp().matrix();
  return e.array().colwise() / e.rowwise().sum().array();
}

/// Row-wise log-sum-exp.
template <class Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> log_sum_exp_rows(const Eigen::MatrixBase<Derived>& logits) {
  auto m = logits.rowwise().maxCoeff().eval();
  auto shifted = (logits.colwise() - m).eval();
  return m.array() + shifted.array().exp().rowwise().sum().log();
}

/// Entropy of each row's softmax distribution, in nats. Bounded by ln(k).
template <class Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> softmax_entropy_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  // H = log(sum exp(y - max)) - <p, y - max> avoids log(0) for saturated rows
  // and evaluates identically for every uniform row regardless of its level.
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Mat e = shifted.array().exp().matrix();
  auto sums = e.rowwise().sum().eval();
  Mat p = e.array().colwise() / sums.array();
  return sums.array().log().matrix() - (p.array() * shifted.array()).rowwise().sum().matrix();
}

struct CrossEntropy {
  double loss = 0.0;
  Eigen::MatrixXd grad;  ///< d(loss)/d(logits), zero rows where unselected
};

/// Mean softmax cross entropy over the rows selected by `mask` (all rows when
/// mask is empty). Returns loss 0 and a zero gradient when nothing selected.
inline CrossEntropy softmax_cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                                          const std::vector<bool>& mask = {}) {
  const Eigen::Index b = logits.rows();
  if (labels.size() != b) {
    throw ContractError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(b) + " logit rows");
  }
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != b) {
    throw ContractError("softmax_cross_entropy: mask length mismatch");
  }
  CrossEntropy out;
  out.grad = Eigen::MatrixXd::Zero(b, logits.cols());
  Eigen::Index selected = 0;
  for (Eigen::Index i = 0; i < b; ++i) selected += (mask.empty() || mask[static_cast<std::size_t>(i)]) ? 1 : 0;
  if (selected == 0) return out;

  const Eigen::VectorXd lse = log_sum_exp_rows(logits);
  const Eigen::MatrixXd p = softmax_rows(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    const int label = labels(i);
    if (label < 0 || label >= logits.cols()) throw ContractError("softmax_cross_entropy: label out of range");
    total += lse(i) - logits(i, label);
    out.grad.row(i) = p.row(i) / static_cast<double>(selected);
    out.grad(i, label) -= 1.0 / static_cast<double>(selected);
  }
  out.loss = total / static_cast<double>(selected);
  return out;
}

/// Per-sample argmax over classes; ties break to the lowest class index.
inline Eigen::VectorXi argmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXi out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out(i) = static_cast<int>(best);
  }
  return out;
}

/// Fraction of rows whose argmax disagrees with the label. Ties break to the
/// lowest class index.
inline double error_rate(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
  if (labels.size() != logits.rows()) throw ContractError("error_rate: shape mismatch");
  if (labels.size() == 0) throw ContractError("error_rate: empty batch");
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    wrong += best != labels(i) ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(logits.rows());
}

}  // namespace mmkd
