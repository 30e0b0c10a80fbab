#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mmkd/patterns.hpp"

namespace mmkd {

/// Controls the synthetic multimodal generator. Per-class means are random
/// orthonormal directions scaled by the modality's snr; samples add unit
/// Gaussian noise, so a larger snr always means a lower Bayes error.
struct DatasetSpec {
  int num_modalities = 0;
  int num_classes = 0;
  int samples_per_class = 0;       ///< train samples per class
  int test_samples_per_class = 0;  ///< 0 = same as samples_per_class
  int feature_dim = 0;             ///< per modality; must be >= num_classes
  std::vector<double> snr;         ///< length num_modalities, nonnegative
  std::vector<std::string> modality_names;  ///< optional, defaults to M0..M{m-1}
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the violated field.
  void validate() const;

  int test_count_per_class() const {
    return test_samples_per_class > 0 ? test_samples_per_class : samples_per_class;
  }
  std::vector<std::string> names() const {
    return modality_names.empty() ? default_modality_names(num_modalities) : modality_names;
  }
};

/// One mini-batch: complete per-modality inputs, labels, and the per-sample
/// dropout pattern the deployment network will apply after encoding.
struct ModalityBatch {
  std::vector<Eigen::MatrixXd> features;  ///< m arrays, each b x d
  Eigen::VectorXi labels;                 ///< length b, values in [0, k)
  std::vector<DropoutPattern> patterns;   ///< length b, all nonempty

  Eigen::Index batch_size() const { return labels.size(); }
  int num_modalities() const { return static_cast<int>(features.size()); }

  /// Throws ContractError on inconsistent shapes or an all-dropped sample.
  void validate() const;

  /// Same samples with every pattern forced to all-present (the teacher view).
  ModalityBatch complete_view() const;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Eigen::MatrixXd> train_features;  ///< m arrays, n_train x d
  Eigen::VectorXi train_labels;
  std::vector<Eigen::MatrixXd> test_features;
  Eigen::VectorXi test_labels;

  /// Ground-truth class means actually used by the generator, one k x d
  /// matrix per modality (snr-scaled). Exposed for oracle-style tests.
  std::vector<Eigen::MatrixXd> class_means;

  /// Analytic per-modality Bayes error of the generating distribution.
  Eigen::VectorXd bayes_error;
  /// Bayes error when all modalities are observed jointly.
  double fused_bayes_error = 0.0;

  Eigen::Index train_size() const { return train_labels.size(); }
  Eigen::Index test_size() const { return test_labels.size(); }
};

/// Deterministic for a fixed spec: repeat calls produce bit-identical data.
Dataset generate_dataset(const DatasetSpec& spec);

/// Bayes error of a k-class shell of orthonormal class means with norm `snr`
/// under unit Gaussian noise: 1 - E_z[Phi(z + snr)^(k-1)].
double shell_bayes_error(double snr, int num_classes);

/// Columnar dump, one sample per row; header names columns as
/// m<modality>_f<feature>, final column is the integer label.
void dump_dataset_csv(const Dataset& data, const std::string& split, const std::string& path);

}  // namespace mmkd
