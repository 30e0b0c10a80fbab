#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mmkd/errors.hpp"
#include "mmkd/rng.hpp"
#include "mmkd/synth_data.hpp"

namespace mmkd {

struct ModelSpec {
  int encoder_hidden = 16;
  int encoder_out = 8;
  int teacher_fused = 16;     ///< teacher fused width; need not match deployment
  int deployment_fused = 16;
  void validate() const;
};

/// Affine map x -> x * weight + bias, rows are samples.
struct Linear {
  Eigen::MatrixXd weight;   ///< in x out
  Eigen::RowVectorXd bias;  ///< 1 x out

  static Linear create(Eigen::Index in, Eigen::Index out, Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const { return (x * weight).rowwise() + bias; }

  void set_zero() {
    weight.setZero();
    bias.setZero();
  }
};

/// Two-layer perceptron encoder: tanh hidden layer, linear output.
struct Encoder {
  Linear hidden;
  Linear out;
};

struct TeacherNet {
  std::vector<Encoder> encoders;
  Linear fusion;  ///< (m * encoder_out) -> fused, tanh on top
  Linear head;    ///< fused -> k

  static TeacherNet create(const std::vector<int>& input_dims, const ModelSpec& spec, int num_classes, Rng& rng);
  TeacherNet zeros_like() const;
  int num_modalities() const { return static_cast<int>(encoders.size()); }
};

struct DeploymentNet {
  std::vector<Encoder> encoders;
  Linear fusion;
  Linear head;      ///< task predictions used at inference
  Linear reg_head;  ///< extra predictions, training-time regularization only

  static DeploymentNet create(const std::vector<int>& input_dims, const ModelSpec& spec, int num_classes, Rng& rng);
  DeploymentNet zeros_like() const;
  int num_modalities() const { return static_cast<int>(encoders.size()); }
};

/// Visits every parameter block as fn(role, name, block) in a fixed order;
/// block is Eigen::MatrixXd or Eigen::RowVectorXd, const-qualified to match
/// the net reference.
template <class Net, class Fn>
void visit_params(Net& net, Fn&& fn) {
  using Bare = std::remove_const_t<Net>;
  constexpr bool teacher = std::is_same_v<Bare, TeacherNet>;
  const char* role = teacher ? "teacher" : "deployment";
  for (std::size_t j = 0; j < net.encoders.size(); ++j) {
    const std::string prefix = "encoder" + std::to_string(j);
    fn(role, prefix + ".hidden.weight", net.encoders[j].hidden.weight);
    fn(role, prefix + ".hidden.bias", net.encoders[j].hidden.bias);
    fn(role, prefix + ".out.weight", net.encoders[j].out.weight);
    fn(role, prefix + ".out.bias", net.encoders[j].out.bias);
  }
  fn(role, "fusion.weight", net.fusion.weight);
  fn(role, "fusion.bias", net.fusion.bias);
  fn(role, "head.weight", net.head.weight);
  fn(role, "head.bias", net.head.bias);
  if constexpr (!teacher) {
    fn("regularization", "head.weight", net.reg_head.weight);
    fn("regularization", "head.bias", net.reg_head.bias);
  }
}

/// FNV-1a over the raw parameter bytes, in visit order.
template <class Net>
std::uint64_t parameter_checksum(const Net& net) {
  std::uint64_t h = 1469598103934665603ULL;
  visit_params(net, [&](const char*, const std::string&, const auto& block) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(block.data());
    for (Eigen::Index i = 0; i < block.size() * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h = (h ^ bytes[i]) * 1099511628211ULL;
    }
  });
  return h;
}

struct EncoderCache {
  Eigen::MatrixXd hidden_act;  ///< b x h, tanh applied
  Eigen::MatrixXd encoded;     ///< b x c, before any dropout mask
};

struct TeacherForward {
  std::vector<EncoderCache> enc;
  Eigen::MatrixXd concat;  ///< b x (m*c)
  Eigen::MatrixXd fused;   ///< z, b x fused
  Eigen::MatrixXd logits;  ///< y, b x k
};

struct DeploymentForward {
  std::vector<EncoderCache> enc;
  Eigen::MatrixXd concat;      ///< post-mask concatenation, b x (m*c)
  Eigen::MatrixXd fused;       ///< z, b x fused
  Eigen::MatrixXd logits;      ///< y of the task head
  Eigen::MatrixXd reg_logits;  ///< y of the regularization head
};

/// Complete-modality forward pass; throws if any sample's pattern drops a
/// modality (the teacher never sees dropout).
TeacherForward forward_teacher(const TeacherNet& net, const ModalityBatch& batch);

/// Dropout-tolerant forward pass: encoders run on the raw inputs, then each
/// dropped modality's encoded rows are zeroed before fusion.
DeploymentForward forward_deployment(const DeploymentNet& net, const ModalityBatch& batch);

/// Accumulates parameter gradients into `grads` (same shapes as `net`).
/// d_fused_extra adds directly to the gradient at the fused feature, for loss
/// terms expressed on z rather than on logits.
void backward_deployment(const DeploymentNet& net, const ModalityBatch& batch, const DeploymentForward& fwd,
                         const Eigen::MatrixXd& d_logits, const Eigen::MatrixXd& d_reg_logits,
                         const Eigen::MatrixXd& d_fused_extra, DeploymentNet* grads);

void backward_teacher(const TeacherNet& net, const ModalityBatch& batch, const TeacherForward& fwd,
                      const Eigen::MatrixXd& d_logits, TeacherNet* grads);

}  // namespace mmkd
