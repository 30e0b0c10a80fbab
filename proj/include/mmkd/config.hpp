#pragma once

#include <cstdint>
#include <string>

#include "mmkd/mad.hpp"
#include "mmkd/mar.hpp"
#include "mmkd/model.hpp"
#include "mmkd/optimizer.hpp"
#include "mmkd/patterns.hpp"
#include "mmkd/synth_data.hpp"

namespace mmkd {

struct DistillConfig {
  DistillMode mode = DistillMode::kOff;
  double alpha = 1.0;               ///< weight of the distillation term
  bool signed_discrepancy = false;  ///< literal signed row sums instead of absolute
  bool warmup_active = true;        ///< apply distillation during warm-up epochs too

  DiscrepancyMode discrepancy() const {
    return signed_discrepancy ? DiscrepancyMode::kSigned : DiscrepancyMode::kAbsolute;
  }
};

struct RegularizeConfig {
  RegularizeMode mode = RegularizeMode::kOff;
  double beta = 0.5;                   ///< weight of the regularization term
  int warmup_epochs = 5;               ///< N; mining runs through epoch N
  int subsample_size = 512;            ///< cap on the fixed mining subsample
  bool literal_softmax_counts = false; ///< softmax count rows instead of smoothing
};

struct TrainConfig {
  DatasetSpec dataset;
  ModelSpec model;
  OptimizerSpec optimizer;

  int epochs = 60;
  int teacher_epochs = 60;
  int batch_size = 32;
  std::uint64_t seed = 1;
  DropoutPolicy dropout;

  DistillConfig mad;
  RegularizeConfig mar;

  /// Throws ConfigError naming the violated field.
  void validate() const;
};

/// Strict parse: unknown keys anywhere in the document are hard errors, as
/// are type mismatches. Missing keys take the documented defaults.
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::string& path);

std::string to_string(DistillMode mode);
std::string to_string(RegularizeMode mode);

}  // namespace mmkd
