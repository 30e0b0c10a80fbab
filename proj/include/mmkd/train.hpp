#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mmkd/config.hpp"
#include "mmkd/mar.hpp"
#include "mmkd/model.hpp"
#include "mmkd/synth_data.hpp"

namespace mmkd {

struct EpochRecord {
  int epoch = 0;   ///< 1-based
  double l_tl = 0.0;
  double l_mad = 0.0;  ///< raw distillation term, before alpha
  double l_mar = 0.0;  ///< raw regularization term, before beta
  double l_total = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;

  /// One JSON object per line, in epoch order. Deterministic for a given run.
  std::string to_jsonl() const;
  static TrainLog from_jsonl(const std::string& text);
};

/// Outcome of the warm-up mining phase: the per-epoch divergence rows, their
/// mean, the chosen strong modality, and the weak combination set.
struct MiningReport {
  int warmup_epochs = 0;
  int subsample_size = 0;
  std::vector<std::string> modality_names;
  Eigen::MatrixXd divergence;       ///< N x m, row per warm-up epoch
  Eigen::VectorXd mean_divergence;  ///< length m
  int strong_modality = -1;         ///< 0-based
  bool tie = false;
  std::vector<DropoutPattern> weak_set;

  std::string to_json() const;
  static MiningReport from_json(const std::string& text);
  std::string render_text() const;
};

/// L_total = task + alpha * distill + beta * regularize. Throws
/// NumericalError naming the first non-finite component.
double total_loss(double l_tl, double l_mad, double l_mar, const TrainConfig& config);

/// Trains the complete-modality teacher with the task loss only.
TeacherNet pretrain_teacher(const TrainConfig& config, const Dataset& data, TrainLog* log = nullptr);

struct DeploymentResult {
  DeploymentNet net;
  TrainLog log;
  std::optional<MiningReport> mining;  ///< present when the mar stage ran warm-up mining
};

/// Full deployment training: modality dropout plus optional distillation and
/// weak-combination regularization. The teacher is read-only throughout.
DeploymentResult train_deployment(const TrainConfig& config, const Dataset& data, const TeacherNet& teacher);

}  // namespace mmkd
