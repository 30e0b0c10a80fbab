#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "mmkd/errors.hpp"
#include "mmkd/losses.hpp"

namespace mmkd {

/// Added to norm products so all-zero feature rows yield near-zero
/// similarities instead of a division error.
inline constexpr double kNormEps = 1e-12;

/// Fused feature block: one sample per row, row-major (channel, height,
/// width) layout inside the row. h = w = 1 covers the plain vector case.
struct FeatureTensor {
  Eigen::MatrixXd values;  ///< b x (channels*height*width)
  Eigen::Index channels = 0;
  Eigen::Index height = 1;
  Eigen::Index width = 1;

  static FeatureTensor from_matrix(Eigen::MatrixXd m) {
    FeatureTensor t;
    t.channels = m.cols();
    t.values = std::move(m);
    return t;
  }

  Eigen::Index batch_size() const { return values.rows(); }
};

/// Batch-preserving flatten of all non-batch dims; identity on storage.
inline Eigen::MatrixXd flatten_features(const FeatureTensor& z) { return z.values; }

inline FeatureTensor reshape_features(Eigen::MatrixXd flat, Eigen::Index channels, Eigen::Index height,
                                      Eigen::Index width) {
  if (flat.cols() != channels * height * width) {
    throw ContractError("reshape_features: " + std::to_string(flat.cols()) + " columns cannot take shape (" +
                        std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + ")");
  }
  FeatureTensor t;
  t.values = std::move(flat);
  t.channels = channels;
  t.height = height;
  t.width = width;
  return t;
}

/// Pairwise cosine similarities of the rows: R(i,j) = <Z_i, Z_j> /
/// (|Z_i||Z_j| + eps). Symmetric by construction.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> relation_matrix(
    const Eigen::MatrixBase<Derived>& rows, typename Derived::Scalar eps = kNormEps) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat z = rows;
  const Eigen::Index b = z.rows();
  const Eigen::Vector<Scalar, Eigen::Dynamic> norms = z.rowwise().norm();
  Mat r(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i; j < b; ++j) {
      const Scalar v = z.row(i).dot(z.row(j)) / (norms(i) * norms(j) + eps);
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

enum class DiscrepancyMode {
  kAbsolute,  ///< row sums of |r_t - r_d|; nonnegative, zero iff equal
  kSigned,    ///< literal row sums of (r_t - r_d); may cancel or go negative
};

/// Per-sample relation gap between teacher and deployment relation matrices.
template <class DerivedT, class DerivedD>
Eigen::Vector<typename DerivedT::Scalar, Eigen::Dynamic> relation_discrepancy(
    const Eigen::MatrixBase<DerivedT>& r_teacher, const Eigen::MatrixBase<DerivedD>& r_deploy,
    DiscrepancyMode mode = DiscrepancyMode::kAbsolute) {
  if (r_teacher.rows() != r_deploy.rows() || r_teacher.cols() != r_deploy.cols() ||
      r_teacher.rows() != r_teacher.cols()) {
    throw ContractError("relation_discrepancy: relation matrices must be square and of equal size");
  }
  auto diff = (r_teacher - r_deploy).eval();
  if (mode == DiscrepancyMode::kAbsolute) return diff.array().abs().rowwise().sum();
  return diff.rowwise().sum();
}

/// Teacher-side sample uncertainty: softmax entropy per sample plus the
/// batch-softmax of those entropies, which sums to one.
struct Uncertainty {
  Eigen::VectorXd entropy;  ///< per sample, in [0, ln k]
  Eigen::VectorXd weights;  ///< softmax over the batch, sums to 1
};

template <class Derived>
Uncertainty classification_uncertainty(const Eigen::MatrixBase<Derived>& teacher_logits) {
  Uncertainty u;
  u.entropy = softmax_entropy_rows(teacher_logits);
  Eigen::VectorXd shifted = u.entropy.array() - u.entropy.maxCoeff();
  Eigen::VectorXd e = shifted.array().exp();
  u.weights = e / e.sum();
  return u;
}

enum class DistillMode { kMad, kSp, kOff };

struct MadLoss {
  double value = 0.0;
  Eigen::MatrixXd grad;  ///< d(value)/d(z_deploy), same shape as the flattened z_deploy
};

/// Relation-matching distillation loss. kMad weights each sample by its
/// teacher classification uncertainty; kSp uses uniform weights 1/b. Teacher
/// quantities are treated as constants; the gradient flows into z_deploy
/// only.
inline MadLoss mad_loss(const Eigen::MatrixXd& z_teacher, const Eigen::MatrixXd& z_deploy,
                        const Eigen::MatrixXd& teacher_logits, DistillMode mode,
                        DiscrepancyMode discrepancy = DiscrepancyMode::kAbsolute, bool want_grad = true) {
  const Eigen::Index b = z_deploy.rows();
  if (mode == DistillMode::kOff) throw ContractError("mad_loss: called with mode off");
  if (b < 2) throw ContractError("mad_loss: pairwise relations need batch size >= 2, got " + std::to_string(b));
  if (z_teacher.rows() != b || teacher_logits.rows() != b) {
    throw ContractError("mad_loss: teacher and deployment batches must be index-aligned");
  }

  const Eigen::MatrixXd r_t = relation_matrix(z_teacher);
  const Eigen::MatrixXd r_d = relation_matrix(z_deploy);

  Eigen::VectorXd weights;
  if (mode == DistillMode::kSp) {
    weights = Eigen::VectorXd::Constant(b, 1.0 / static_cast<double>(b));
  } else {
    weights = classification_uncertainty(teacher_logits).weights;
  }

  MadLoss out;
  for (Eigen::Index i = 0; i < b; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const double diff = r_t(i, j) - r_d(i, j);
      row += discrepancy == DiscrepancyMode::kAbsolute ? std::abs(diff) : diff;
    }
    out.value += weights(i) * row;
  }
  if (!want_grad) return out;

  // dL/dr_d(i,j); the teacher side and the weights are constants.
  Eigen::MatrixXd g(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      double slope = 1.0;
      if (discrepancy == DiscrepancyMode::kAbsolute) {
        const double diff = r_t(i, j) - r_d(i, j);
        slope = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      }
      g(i, j) = -weights(i) * slope;
    }
  }

  // r_d(a,j) = <Z_a, Z_j> / (n_a n_j + eps); entries (a,j) and (j,a) are the
  // same function of Z, so both their loss sensitivities act on it.
  const Eigen::VectorXd norms = z_deploy.rowwise().norm();
  out.grad = Eigen::MatrixXd::Zero(b, z_deploy.cols());
  for (Eigen::Index a = 0; a < b; ++a) {
    const double na = norms(a);
    const double diag_den = na * na + kNormEps;
    out.grad.row(a) = g(a, a) * (2.0 * kNormEps / (diag_den * diag_den)) * z_deploy.row(a);
    Eigen::RowVectorXd unit_a = Eigen::RowVectorXd::Zero(z_deploy.cols());
    if (na > 0.0) unit_a = z_deploy.row(a) / na;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == a) continue;
      const double den = na * norms(j) + kNormEps;
      out.grad.row(a) +=
          (g(a, j) + g(j, a)) / den * (z_deploy.row(j) - r_d(a, j) * norms(j) * unit_a);
    }
  }
  return out;
}

inline MadLoss mad_loss(const FeatureTensor& z_teacher, const FeatureTensor& z_deploy,
                        const Eigen::MatrixXd& teacher_logits, DistillMode mode,
                        DiscrepancyMode discrepancy = DiscrepancyMode::kAbsolute, bool want_grad = true) {
  return mad_loss(flatten_features(z_teacher), flatten_features(z_deploy), teacher_logits, mode, discrepancy,
                  want_grad);
}

}  // namespace mmkd
