#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mmkd/errors.hpp"
#include "mmkd/model.hpp"

namespace mmkd {

struct OptimizerSpec {
  std::string method = "sgd";
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int lr_warmup_epochs = 0;          ///< linear ramp over the first epochs
  std::vector<int> milestones;       ///< 1-based epochs at which lr is scaled by gamma
  double gamma = 0.1;

  void validate() const {
    if (method != "sgd") throw ConfigError("optimizer.method: only 'sgd' is supported, got '" + method + "'");
    if (!(learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("optimizer.momentum must be in [0, 1)");
    if (weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
    if (lr_warmup_epochs < 0) throw ConfigError("optimizer.lr_warmup_epochs must be >= 0");
    if (!(gamma > 0)) throw ConfigError("optimizer.gamma must be > 0");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) throw ConfigError("optimizer.milestones must be strictly increasing");
    }
  }
};

/// Learning rate for a 1-based epoch: linear warm-up, then step decay at
/// each milestone.
inline double scheduled_lr(const OptimizerSpec& spec, int epoch) {
  double lr = spec.learning_rate;
  if (spec.lr_warmup_epochs > 0 && epoch <= spec.lr_warmup_epochs) {
    lr *= static_cast<double>(epoch) / static_cast<double>(spec.lr_warmup_epochs);
  }
  for (int milestone : spec.milestones) {
    if (epoch >= milestone) lr *= spec.gamma;
  }
  return lr;
}

/// SGD with momentum and decoupled-from-nothing classic weight decay:
/// v <- mu v - lr (g + wd p); p <- p + v. Velocity buffers are created on the
/// first step and keyed by parameter visit order.
class Sgd {
 public:
  explicit Sgd(OptimizerSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  template <class Net>
  void step(Net* params, const Net& grads, double lr) {
    std::vector<double*> p;
    std::vector<const double*> g;
    std::vector<Eigen::Index> sizes;
    visit_params(*params, [&](const char*, const std::string&, auto& block) {
      p.push_back(block.data());
      sizes.push_back(block.size());
    });
    visit_params(grads, [&](const char*, const std::string&, const auto& block) { g.push_back(block.data()); });
    if (p.size() != g.size()) throw ContractError("Sgd::step: parameter/gradient structure mismatch");
    if (velocity_.empty()) {
      velocity_.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) velocity_[i] = Eigen::VectorXd::Zero(sizes[i]);
    }
    if (velocity_.size() != p.size()) throw ContractError("Sgd::step: optimizer bound to a different net");
    for (std::size_t i = 0; i < p.size(); ++i) {
      Eigen::Map<Eigen::VectorXd> param(p[i], sizes[i]);
      Eigen::Map<const Eigen::VectorXd> grad(g[i], sizes[i]);
      velocity_[i] = spec_.momentum * velocity_[i] - lr * (grad + spec_.weight_decay * param);
      param += velocity_[i];
    }
  }

 private:
  OptimizerSpec spec_;
  std::vector<Eigen::VectorXd> velocity_;
};

}  // namespace mmkd
