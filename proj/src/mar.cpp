#include "mmkd/mar.hpp"

#include <iostream>

#include "mmkd/model.hpp"

namespace mmkd {

ClassHistogram class_histogram(const PatternPredictions& preds, int num_classes, bool literal_softmax_counts) {
  if (preds.logits.empty()) throw ContractError("class_histogram: no pattern slices");
  const Eigen::Index slices = static_cast<Eigen::Index>(preds.logits.size());
  const Eigen::Index n = preds.sample_count();
  ClassHistogram hist;
  hist.counts = Eigen::MatrixXi::Zero(slices, num_classes);
  for (Eigen::Index s = 0; s < slices; ++s) {
    if (preds.logits[static_cast<std::size_t>(s)].rows() != n) {
      throw ContractError("class_histogram: slices disagree on sample count");
    }
    const Eigen::VectorXi predicted = argmax_rows(preds.logits[static_cast<std::size_t>(s)]);
    for (Eigen::Index i = 0; i < n; ++i) hist.counts(s, predicted(i)) += 1;
  }
  hist.probs.resize(slices, num_classes);
  if (literal_softmax_counts) {
    hist.probs = softmax_rows(hist.counts.cast<double>());
  } else {
    const double denom = static_cast<double>(n) + num_classes * kHistEps;
    hist.probs = (hist.counts.cast<double>().array() + kHistEps) / denom;
  }
  return hist;
}

Eigen::VectorXd pattern_divergence(const ClassHistogram& hist) {
  const Eigen::Index slices = hist.probs.rows();
  if (slices < 2) throw ContractError("pattern_divergence: need the all-present slice plus one drop slice");
  Eigen::VectorXd g(slices - 1);
  for (Eigen::Index s = 1; s < slices; ++s) {
    g(s - 1) = kl_divergence(hist.probs.row(0), hist.probs.row(s));
  }
  return g;
}

MiningState::MiningState(int num_modalities, int warmup_epochs)
    : modalities_(num_modalities), warmup_(warmup_epochs) {
  if (num_modalities < 2) throw ContractError("MiningState: need at least 2 modalities");
  if (warmup_epochs < 1) throw ContractError("MiningState: warm-up must be at least 1 epoch");
  bank_ = Eigen::MatrixXd::Zero(warmup_, modalities_);
}

void MiningState::record_epoch(const Eigen::VectorXd& divergence) {
  if (frozen_) throw ContractError("MiningState: update after freeze");
  if (recorded_ >= warmup_) {
    throw ContractError("MiningState: memory bank already holds " + std::to_string(warmup_) + " epochs");
  }
  if (divergence.size() != modalities_) throw ContractError("MiningState: divergence length != modality count");
  bank_.row(recorded_) = divergence.transpose();
  ++recorded_;
}

Eigen::VectorXd MiningState::mean_divergence() const {
  if (recorded_ == 0) throw ContractError("MiningState: no epochs recorded");
  return bank_.topRows(recorded_).colwise().mean().transpose();
}

void MiningState::finalize() {
  if (frozen_) throw ContractError("MiningState: already finalized");
  if (recorded_ != warmup_) {
    throw ContractError("MiningState: finalize needs " + std::to_string(warmup_) + " recorded epochs, have " +
                        std::to_string(recorded_));
  }
  const Eigen::VectorXd mean = mean_divergence();
  strong_ = 0;
  for (int j = 1; j < modalities_; ++j) {
    if (mean(j) > mean(strong_)) strong_ = j;
  }
  for (int j = 0; j < modalities_; ++j) {
    if (j != strong_ && mean(j) == mean(strong_)) tie_ = true;
  }
  if (tie_) {
    std::cerr << "warning: mining divergence tie, keeping lowest modality index " << strong_ << "\n";
  }
  for (const DropoutPattern& p : enumerate_patterns(modalities_).full) {
    if (!p.present[static_cast<std::size_t>(strong_)]) {
      weak_set_.push_back(p);
      weak_lookup_.insert(p);
    }
  }
  frozen_ = true;
}

int MiningState::strong_modality() const {
  if (!frozen_) throw ContractError("MiningState: strong modality queried before finalize");
  return strong_;
}

const std::vector<DropoutPattern>& MiningState::weak_set() const {
  if (!frozen_) throw ContractError("MiningState: weak set queried before finalize");
  return weak_set_;
}

bool MiningState::in_weak_set(const DropoutPattern& pattern) const {
  if (!frozen_) throw ContractError("MiningState: membership queried before finalize");
  return weak_lookup_.count(pattern) > 0;
}

std::vector<bool> weak_mask(const std::vector<DropoutPattern>& patterns, const MiningState& state) {
  std::vector<bool> mask(patterns.size());
  for (std::size_t i = 0; i < patterns.size(); ++i) mask[i] = state.in_weak_set(patterns[i]);
  return mask;
}

std::vector<bool> single_modality_mask(const std::vector<DropoutPattern>& patterns) {
  std::vector<bool> mask(patterns.size());
  for (std::size_t i = 0; i < patterns.size(); ++i) mask[i] = patterns[i].present_count() == 1;
  return mask;
}

MarLoss masked_task_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                         const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.rows() || labels.size() != logits.rows()) {
    throw ContractError("masked_task_loss: logits, labels, and mask must agree on length");
  }
  const CrossEntropy ce = softmax_cross_entropy(logits, labels, mask);
  return MarLoss{ce.loss, ce.grad};
}

MarLoss mar_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                 const std::vector<DropoutPattern>& patterns, const MiningState& state, RegularizeMode mode) {
  if (mode == RegularizeMode::kOff) throw ContractError("mar_loss: called with mode off");
  if (static_cast<Eigen::Index>(patterns.size()) != logits.rows()) {
    throw ContractError("mar_loss: pattern list length != batch size");
  }
  const std::vector<bool> mask =
      mode == RegularizeMode::kMar ? weak_mask(patterns, state) : single_modality_mask(patterns);
  return masked_task_loss(logits, labels, mask);
}

PatternPredictions collect_pattern_predictions(const DeploymentNet& net, const ModalityBatch& eval_subset,
                                               const std::vector<DropoutPattern>& mining_patterns) {
  if (eval_subset.batch_size() == 0) throw ContractError("collect_pattern_predictions: empty evaluation subset");
  PatternPredictions preds;
  preds.logits.reserve(mining_patterns.size());
  ModalityBatch forced = eval_subset;
  for (const DropoutPattern& pattern : mining_patterns) {
    forced.patterns.assign(forced.patterns.size(), pattern);
    preds.logits.push_back(forward_deployment(net, forced).logits);
  }
  return preds;
}

}  // namespace mmkd
