#include "mmkd/model.hpp"

#include <cmath>

namespace mmkd {

void ModelSpec::validate() const {
  if (encoder_hidden < 1) throw ConfigError("model.encoder_hidden must be >= 1");
  if (encoder_out < 1) throw ConfigError("model.encoder_out must be >= 1");
  if (teacher_fused < 1) throw ConfigError("model.teacher_fused must be >= 1");
  if (deployment_fused < 1) throw ConfigError("model.deployment_fused must be >= 1");
}

Linear Linear::create(Eigen::Index in, Eigen::Index out, Rng& rng) {
  Linear l;
  l.weight.resize(in, out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index c = 0; c < out; ++c) {
    for (Eigen::Index r = 0; r < in; ++r) l.weight(r, c) = scale * rng.normal();
  }
  l.bias = Eigen::RowVectorXd::Zero(out);
  return l;
}

namespace {

template <class Net>
Net create_net(const std::vector<int>& input_dims, const ModelSpec& spec, int num_classes, int fused, Rng& rng) {
  spec.validate();
  if (input_dims.size() < 2) throw ConfigError("model: need at least 2 modality input dims");
  Net net;
  for (int d : input_dims) {
    Encoder e;
    e.hidden = Linear::create(d, spec.encoder_hidden, rng);
    e.out = Linear::create(spec.encoder_hidden, spec.encoder_out, rng);
    net.encoders.push_back(std::move(e));
  }
  const Eigen::Index concat = static_cast<Eigen::Index>(input_dims.size()) * spec.encoder_out;
  net.fusion = Linear::create(concat, fused, rng);
  net.head = Linear::create(fused, num_classes, rng);
  return net;
}

template <class Net>
Net zero_copy(const Net& net) {
  Net z = net;
  visit_params(z, [](const char*, const std::string&, auto& block) { block.setZero(); });
  return z;
}

}  // namespace

TeacherNet TeacherNet::create(const std::vector<int>& input_dims, const ModelSpec& spec, int num_classes, Rng& rng) {
  return create_net<TeacherNet>(input_dims, spec, num_classes, spec.teacher_fused, rng);
}

TeacherNet TeacherNet::zeros_like() const { return zero_copy(*this); }

DeploymentNet DeploymentNet::create(const std::vector<int>& input_dims, const ModelSpec& spec, int num_classes,
                                    Rng& rng) {
  DeploymentNet net = create_net<DeploymentNet>(input_dims, spec, num_classes, spec.deployment_fused, rng);
  net.reg_head = Linear::create(spec.deployment_fused, num_classes, rng);
  return net;
}

DeploymentNet DeploymentNet::zeros_like() const { return zero_copy(*this); }

namespace {

EncoderCache encode(const Encoder& enc, const Eigen::MatrixXd& x) {
  EncoderCache c;
  c.hidden_act = enc.hidden.forward(x).array().tanh();
  c.encoded = enc.out.forward(c.hidden_act);
  return c;
}

// dL/d(encoded) -> parameter grads plus nothing upstream (inputs are data).
void encoder_backward(const Encoder& enc, const Eigen::MatrixXd& x, const EncoderCache& cache,
                      const Eigen::MatrixXd& d_encoded, Encoder* g) {
  g->out.weight += cache.hidden_act.transpose() * d_encoded;
  g->out.bias += d_encoded.colwise().sum();
  const Eigen::MatrixXd d_hidden =
      ((d_encoded * enc.out.weight.transpose()).array() * (1.0 - cache.hidden_act.array().square())).matrix();
  g->hidden.weight += x.transpose() * d_hidden;
  g->hidden.bias += d_hidden.colwise().sum();
}

}  // namespace

TeacherForward forward_teacher(const TeacherNet& net, const ModalityBatch& batch) {
  batch.validate();
  if (batch.num_modalities() != net.num_modalities()) {
    throw ContractError("forward_teacher: batch has " + std::to_string(batch.num_modalities()) +
                        " modalities, net expects " + std::to_string(net.num_modalities()));
  }
  for (const auto& p : batch.patterns) {
    if (!p.is_all_present()) throw ContractError("forward_teacher: teacher requires complete modalities");
  }
  TeacherForward f;
  const Eigen::Index b = batch.batch_size();
  const Eigen::Index c = net.encoders.front().out.bias.size();
  f.concat.resize(b, static_cast<Eigen::Index>(net.encoders.size()) * c);
  for (std::size_t j = 0; j < net.encoders.size(); ++j) {
    f.enc.push_back(encode(net.encoders[j], batch.features[j]));
    f.concat.middleCols(static_cast<Eigen::Index>(j) * c, c) = f.enc[j].encoded;
  }
  f.fused = net.fusion.forward(f.concat).array().tanh();
  f.logits = net.head.forward(f.fused);
  return f;
}

DeploymentForward forward_deployment(const DeploymentNet& net, const ModalityBatch& batch) {
  batch.validate();
  if (batch.num_modalities() != net.num_modalities()) {
    throw ContractError("forward_deployment: batch has " + std::to_string(batch.num_modalities()) +
                        " modalities, net expects " + std::to_string(net.num_modalities()));
  }
  DeploymentForward f;
  const Eigen::Index b = batch.batch_size();
  const Eigen::Index c = net.encoders.front().out.bias.size();
  f.concat.resize(b, static_cast<Eigen::Index>(net.encoders.size()) * c);
  for (std::size_t j = 0; j < net.encoders.size(); ++j) {
    f.enc.push_back(encode(net.encoders[j], batch.features[j]));
    Eigen::MatrixXd masked = f.enc[j].encoded;
    for (Eigen::Index i = 0; i < b; ++i) {
      if (!batch.patterns[static_cast<std::size_t>(i)].present[j]) masked.row(i).setZero();
    }
    f.concat.middleCols(static_cast<Eigen::Index>(j) * c, c) = masked;
  }
  f.fused = net.fusion.forward(f.concat).array().tanh();
  f.logits = net.head.forward(f.fused);
  f.reg_logits = net.reg_head.forward(f.fused);
  return f;
}

void backward_deployment(const DeploymentNet& net, const ModalityBatch& batch, const DeploymentForward& fwd,
                         const Eigen::MatrixXd& d_logits, const Eigen::MatrixXd& d_reg_logits,
                         const Eigen::MatrixXd& d_fused_extra, DeploymentNet* grads) {
  const Eigen::Index b = batch.batch_size();
  const Eigen::Index c = net.encoders.front().out.bias.size();

  grads->head.weight += fwd.fused.transpose() * d_logits;
  grads->head.bias += d_logits.colwise().sum();
  grads->reg_head.weight += fwd.fused.transpose() * d_reg_logits;
  grads->reg_head.bias += d_reg_logits.colwise().sum();

  Eigen::MatrixXd d_fused = d_logits * net.head.weight.transpose() +
                            d_reg_logits * net.reg_head.weight.transpose();
  if (d_fused_extra.size() > 0) d_fused += d_fused_extra;

  const Eigen::MatrixXd d_pre_fuse = (d_fused.array() * (1.0 - fwd.fused.array().square())).matrix();
  grads->fusion.weight += fwd.concat.transpose() * d_pre_fuse;
  grads->fusion.bias += d_pre_fuse.colwise().sum();
  const Eigen::MatrixXd d_concat = d_pre_fuse * net.fusion.weight.transpose();

  for (std::size_t j = 0; j < net.encoders.size(); ++j) {
    Eigen::MatrixXd d_encoded = d_concat.middleCols(static_cast<Eigen::Index>(j) * c, c);
    for (Eigen::Index i = 0; i < b; ++i) {
      // Zero-substituted modalities pass no gradient to their encoder.
      if (!batch.patterns[static_cast<std::size_t>(i)].present[j]) d_encoded.row(i).setZero();
    }
    encoder_backward(net.encoders[j], batch.features[j], fwd.enc[j], d_encoded, &grads->encoders[j]);
  }
}

void backward_teacher(const TeacherNet& net, const ModalityBatch& batch, const TeacherForward& fwd,
                      const Eigen::MatrixXd& d_logits, TeacherNet* grads) {
  const Eigen::Index c = net.encoders.front().out.bias.size();
  grads->head.weight += fwd.fused.transpose() * d_logits;
  grads->head.bias += d_logits.colwise().sum();
  const Eigen::MatrixXd d_fused = d_logits * net.head.weight.transpose();
  const Eigen::MatrixXd d_pre_fuse = (d_fused.array() * (1.0 - fwd.fused.array().square())).matrix();
  grads->fusion.weight += fwd.concat.transpose() * d_pre_fuse;
  grads->fusion.bias += d_pre_fuse.colwise().sum();
  const Eigen::MatrixXd d_concat = d_pre_fuse * net.fusion.weight.transpose();
  for (std::size_t j = 0; j < net.encoders.size(); ++j) {
    const Eigen::MatrixXd d_encoded = d_concat.middleCols(static_cast<Eigen::Index>(j) * c, c);
    encoder_backward(net.encoders[j], batch.features[j], fwd.enc[j], d_encoded, &grads->encoders[j]);
  }
}

}  // namespace mmkd
