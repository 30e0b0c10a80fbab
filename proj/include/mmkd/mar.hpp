#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "mmkd/errors.hpp"
#include "mmkd/losses.hpp"
#include "mmkd/patterns.hpp"
#include "mmkd/synth_data.hpp"

namespace mmkd {

struct DeploymentNet;

/// Additive smoothing applied to class-count rows before normalizing, so KL
/// divergences stay finite on empty classes.
inline constexpr double kHistEps = 1e-6;

/// Logits of the evaluation subsample under each mining pattern. Slice 0 is
/// the all-present pattern, slice i >= 1 drops exactly modality i-1.
struct PatternPredictions {
  std::vector<Eigen::MatrixXd> logits;  ///< (m+1) slices, each n x k

  Eigen::Index sample_count() const { return logits.empty() ? 0 : logits.front().rows(); }
};

/// Predicted-class counts per mining pattern and their normalized rows.
struct ClassHistogram {
  Eigen::MatrixXi counts;  ///< (m+1) x k, each row sums to n
  Eigen::MatrixXd probs;   ///< rows sum to 1
};

/// Counts argmax classes per pattern slice. Rows are normalized with
/// additive smoothing by default; `literal_softmax_counts` instead applies a
/// softmax to the raw count rows.
ClassHistogram class_histogram(const PatternPredictions& preds, int num_classes,
                               bool literal_softmax_counts = false);

/// KL(p || q) for categorical distributions, in nats.
template <class DerivedP, class DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: length mismatch");
  typename DerivedP::Scalar total = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0) total += p(i) * (std::log(p(i)) - std::log(q(i)));
  }
  return total;
}

/// Divergence of each single-drop prediction distribution from the
/// all-present one: g(j) = KL(P_all || P_drop_j), j in [0, m).
Eigen::VectorXd pattern_divergence(const ClassHistogram& hist);

/// Warm-up mining memory: one divergence row per warm-up epoch, then a
/// one-shot finalization that fixes the strong modality and the weak
/// combination set. Immutable once frozen.
class MiningState {
 public:
  MiningState(int num_modalities, int warmup_epochs);

  int num_modalities() const { return modalities_; }
  int warmup_epochs() const { return warmup_; }
  int epochs_recorded() const { return recorded_; }
  bool frozen() const { return frozen_; }

  /// Stores the divergence vector for the next warm-up epoch.
  void record_epoch(const Eigen::VectorXd& divergence);

  /// Averages the memory bank, picks the strong modality (argmax, ties to the
  /// lowest index with a warning on stderr), and freezes the state.
  void finalize();

  const Eigen::MatrixXd& memory_bank() const { return bank_; }
  Eigen::VectorXd mean_divergence() const;

  int strong_modality() const;  ///< 0-based; throws unless frozen
  bool tie_detected() const { return tie_; }

  /// All nonempty patterns that exclude the strong modality, canonical order.
  const std::vector<DropoutPattern>& weak_set() const;
  bool in_weak_set(const DropoutPattern& pattern) const;

 private:
  int modalities_ = 0;
  int warmup_ = 0;
  Eigen::MatrixXd bank_;
  int recorded_ = 0;
  bool frozen_ = false;
  int strong_ = -1;
  bool tie_ = false;
  std::vector<DropoutPattern> weak_set_;
  std::set<DropoutPattern> weak_lookup_;
};

/// Weak-combination mask: true where the sample's pattern is in the weak set.
std::vector<bool> weak_mask(const std::vector<DropoutPattern>& patterns, const MiningState& state);

/// Mask of samples whose pattern keeps exactly one modality.
std::vector<bool> single_modality_mask(const std::vector<DropoutPattern>& patterns);

enum class RegularizeMode { kMar, kSr, kOff };

struct MarLoss {
  double value = 0.0;
  Eigen::MatrixXd grad;  ///< d(value)/d(logits); exactly zero on unselected rows
};

/// Task loss restricted to the masked samples, mean-reduced over them; zero
/// loss and gradient when nothing is selected.
MarLoss masked_task_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                         const std::vector<bool>& mask);

/// Regularization loss: kMar restricts to mined weak combinations (mining
/// must be frozen), kSr to single-modality samples.
MarLoss mar_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                 const std::vector<DropoutPattern>& patterns, const MiningState& state, RegularizeMode mode);

/// Inference-mode forward passes of the deployment network over the fixed
/// evaluation subsample, one per mining pattern.
PatternPredictions collect_pattern_predictions(const DeploymentNet& net, const ModalityBatch& eval_subset,
                                               const std::vector<DropoutPattern>& mining_patterns);

}  // namespace mmkd
