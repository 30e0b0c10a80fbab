#include "mmkd/synth_data.hpp"

#include <cmath>
#include <fstream>

#include "mmkd/errors.hpp"

namespace mmkd {

void DatasetSpec::validate() const {
  if (num_modalities < 2) throw ConfigError("dataset.num_modalities must be >= 2, got " + std::to_string(num_modalities));
  if (num_modalities > 16) throw ConfigError("dataset.num_modalities must be <= 16, got " + std::to_string(num_modalities));
  if (num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2, got " + std::to_string(num_classes));
  if (samples_per_class < 1) throw ConfigError("dataset.samples_per_class must be >= 1, got " + std::to_string(samples_per_class));
  if (test_samples_per_class < 0) throw ConfigError("dataset.test_samples_per_class must be >= 0");
  if (feature_dim < 1) throw ConfigError("dataset.feature_dim must be >= 1, got " + std::to_string(feature_dim));
  if (feature_dim < num_classes) {
    // Orthonormal class means need dim >= k.
    throw ConfigError("dataset.feature_dim must be >= dataset.num_classes, got " + std::to_string(feature_dim) +
                      " < " + std::to_string(num_classes));
  }
  if (static_cast<int>(snr.size()) != num_modalities) {
    throw ConfigError("dataset.snr must list one value per modality (" + std::to_string(num_modalities) + "), got " +
                      std::to_string(snr.size()));
  }
  for (double s : snr) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("dataset.snr entries must be finite and nonnegative");
  }
  if (!modality_names.empty() && static_cast<int>(modality_names.size()) != num_modalities) {
    throw ConfigError("dataset.modality_names must list one name per modality");
  }
}

void ModalityBatch::validate() const {
  const Eigen::Index b = labels.size();
  if (features.empty()) throw ContractError("ModalityBatch: no modalities");
  for (const auto& f : features) {
    if (f.rows() != b) {
      throw ContractError("ModalityBatch: feature rows " + std::to_string(f.rows()) + " != batch size " +
                          std::to_string(b));
    }
  }
  if (static_cast<Eigen::Index>(patterns.size()) != b) {
    throw ContractError("ModalityBatch: " + std::to_string(patterns.size()) + " patterns for batch of " +
                        std::to_string(b));
  }
  for (const auto& p : patterns) {
    if (p.size() != num_modalities()) throw ContractError("ModalityBatch: pattern width != modality count");
    if (!p.is_nonempty()) throw ContractError("ModalityBatch: all-dropped pattern");
  }
}

ModalityBatch ModalityBatch::complete_view() const {
  ModalityBatch out = *this;
  out.patterns.assign(out.patterns.size(), DropoutPattern::all_present(num_modalities()));
  return out;
}

namespace {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// k orthonormal rows of width d, deterministic in rng: thin QR of a Gaussian
// draw with the R-diagonal sign fixed.
Eigen::MatrixXd random_orthonormal_rows(int k, int d, Rng& rng) {
  Eigen::MatrixXd gauss(d, k);
  for (Eigen::Index c = 0; c < gauss.cols(); ++c) {
    for (Eigen::Index r = 0; r < gauss.rows(); ++r) gauss(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int c = 0; c < k; ++c) {
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  }
  return q.transpose();
}

void fill_split(const DatasetSpec& spec, int per_class, const std::vector<Eigen::MatrixXd>& means, Rng& rng,
                std::vector<Eigen::MatrixXd>* features, Eigen::VectorXi* labels) {
  const Eigen::Index n = static_cast<Eigen::Index>(per_class) * spec.num_classes;
  labels->resize(n);
  for (int c = 0; c < spec.num_classes; ++c) {
    labels->segment(static_cast<Eigen::Index>(c) * per_class, per_class).setConstant(c);
  }
  features->assign(static_cast<std::size_t>(spec.num_modalities), Eigen::MatrixXd(n, spec.feature_dim));
  for (int j = 0; j < spec.num_modalities; ++j) {
    Eigen::MatrixXd& x = (*features)[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int f = 0; f < spec.feature_dim; ++f) {
        x(i, f) = means[static_cast<std::size_t>(j)]((*labels)(i), f) + rng.normal();
      }
    }
  }
}

}  // namespace

double shell_bayes_error(double snr, int num_classes) {
  if (snr == 0.0) return 1.0 - 1.0 / num_classes;
  if (num_classes == 2) return standard_normal_cdf(-snr / std::numbers::sqrt2);
  // P(correct) = integral of phi(z) * Phi(z + snr)^(k-1); Simpson on [-9, 9].
  const int steps = 4000;
  const double lo = -9.0, hi = 9.0;
  const double h = (hi - lo) / steps;
  auto f = [&](double z) {
    return standard_normal_pdf(z) * std::pow(standard_normal_cdf(z + snr), num_classes - 1);
  };
  double sum = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) sum += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return 1.0 - sum * h / 3.0;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;
  Rng rng(spec.seed);

  data.class_means.reserve(static_cast<std::size_t>(spec.num_modalities));
  for (int j = 0; j < spec.num_modalities; ++j) {
    Eigen::MatrixXd dirs = random_orthonormal_rows(spec.num_classes, spec.feature_dim, rng);
    data.class_means.push_back(spec.snr[static_cast<std::size_t>(j)] * dirs);
  }

  fill_split(spec, spec.samples_per_class, data.class_means, rng, &data.train_features, &data.train_labels);
  fill_split(spec, spec.test_count_per_class(), data.class_means, rng, &data.test_features, &data.test_labels);

  data.bayes_error.resize(spec.num_modalities);
  double fused_sq = 0.0;
  for (int j = 0; j < spec.num_modalities; ++j) {
    data.bayes_error(j) = shell_bayes_error(spec.snr[static_cast<std::size_t>(j)], spec.num_classes);
    fused_sq += spec.snr[static_cast<std::size_t>(j)] * spec.snr[static_cast<std::size_t>(j)];
  }
  data.fused_bayes_error = shell_bayes_error(std::sqrt(fused_sq), spec.num_classes);
  return data;
}

void dump_dataset_csv(const Dataset& data, const std::string& split, const std::string& path) {
  const bool train = split == "train";
  if (!train && split != "test") throw ConfigError("dump_dataset_csv: split must be train or test, got " + split);
  const auto& features = train ? data.train_features : data.test_features;
  const auto& labels = train ? data.train_labels : data.test_labels;

  std::ofstream out(path);
  if (!out) throw ConfigError("dump_dataset_csv: cannot open " + path);
  for (int j = 0; j < data.spec.num_modalities; ++j) {
    for (int f = 0; f < data.spec.feature_dim; ++f) {
      out << 'm' << j << "_f" << f << ',';
    }
  }
  out << "label\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    for (int j = 0; j < data.spec.num_modalities; ++j) {
      for (int f = 0; f < data.spec.feature_dim; ++f) {
        out << features[static_cast<std::size_t>(j)](i, f) << ',';
      }
    }
    out << labels(i) << '\n';
  }
}

}  // namespace mmkd
