#include "mmkd/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace mmkd {

namespace {

using nlohmann::json;

/// Tracks which keys a section consumed so leftovers can be rejected.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T* out) {
    if (!has(key)) return;
    try {
      *out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path_ + "." + key + " has the wrong type");
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key " + path_ + "." + item.key());
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

DistillMode parse_distill_mode(const std::string& s) {
  if (s == "mad") return DistillMode::kMad;
  if (s == "sp") return DistillMode::kSp;
  if (s == "off") return DistillMode::kOff;
  throw ConfigError("mad.mode must be one of mad|sp|off, got '" + s + "'");
}

RegularizeMode parse_regularize_mode(const std::string& s) {
  if (s == "mar") return RegularizeMode::kMar;
  if (s == "sr") return RegularizeMode::kSr;
  if (s == "off") return RegularizeMode::kOff;
  throw ConfigError("mar.mode must be one of mar|sr|off, got '" + s + "'");
}

void parse_dataset(const json& obj, DatasetSpec* spec) {
  Section s(obj, "dataset");
  s.get("num_modalities", &spec->num_modalities);
  s.get("num_classes", &spec->num_classes);
  s.get("samples_per_class", &spec->samples_per_class);
  s.get("test_samples_per_class", &spec->test_samples_per_class);
  s.get("feature_dim", &spec->feature_dim);
  s.get("snr", &spec->snr);
  s.get("modality_names", &spec->modality_names);
  s.get("seed", &spec->seed);
  s.finish();
}

void parse_model(const json& obj, ModelSpec* spec) {
  Section s(obj, "model");
  s.get("encoder_hidden", &spec->encoder_hidden);
  s.get("encoder_out", &spec->encoder_out);
  s.get("teacher_fused", &spec->teacher_fused);
  s.get("deployment_fused", &spec->deployment_fused);
  s.finish();
}

void parse_optimizer(const json& obj, OptimizerSpec* spec) {
  Section s(obj, "optimizer");
  s.get("method", &spec->method);
  s.get("learning_rate", &spec->learning_rate);
  s.get("momentum", &spec->momentum);
  s.get("weight_decay", &spec->weight_decay);
  s.get("lr_warmup_epochs", &spec->lr_warmup_epochs);
  s.get("milestones", &spec->milestones);
  s.get("gamma", &spec->gamma);
  s.finish();
}

void parse_train(const json& obj, TrainConfig* cfg) {
  Section s(obj, "train");
  s.get("epochs", &cfg->epochs);
  s.get("teacher_epochs", &cfg->teacher_epochs);
  s.get("batch_size", &cfg->batch_size);
  s.get("seed", &cfg->seed);
  if (s.has("dropout_policy")) {
    const std::string policy = obj.at("dropout_policy").get<std::string>();
    if (policy == "uniform") {
      cfg->dropout.kind = DropoutPolicy::Kind::kUniform;
    } else if (policy == "bernoulli") {
      cfg->dropout.kind = DropoutPolicy::Kind::kBernoulli;
    } else {
      throw ConfigError("train.dropout_policy must be uniform|bernoulli, got '" + policy + "'");
    }
  }
  s.get("keep_prob", &cfg->dropout.keep_prob);
  s.finish();
}

void parse_mad(const json& obj, DistillConfig* cfg) {
  Section s(obj, "mad");
  if (s.has("mode")) cfg->mode = parse_distill_mode(obj.at("mode").get<std::string>());
  s.get("alpha", &cfg->alpha);
  s.get("signed_discrepancy", &cfg->signed_discrepancy);
  s.get("warmup_active", &cfg->warmup_active);
  s.finish();
}

void parse_mar(const json& obj, RegularizeConfig* cfg) {
  Section s(obj, "mar");
  if (s.has("mode")) cfg->mode = parse_regularize_mode(obj.at("mode").get<std::string>());
  s.get("beta", &cfg->beta);
  s.get("warmup_epochs", &cfg->warmup_epochs);
  s.get("subsample_size", &cfg->subsample_size);
  s.get("literal_softmax_counts", &cfg->literal_softmax_counts);
  s.finish();
}

}  // namespace

void TrainConfig::validate() const {
  dataset.validate();
  model.validate();
  optimizer.validate();
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (pairwise relations), got " +
                                        std::to_string(batch_size));
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (teacher_epochs < 1) throw ConfigError("train.teacher_epochs must be >= 1");
  if (mar.warmup_epochs < 1) throw ConfigError("mar.warmup_epochs must be >= 1");
  if (epochs <= mar.warmup_epochs) {
    throw ConfigError("train.epochs must exceed mar.warmup_epochs (" + std::to_string(epochs) +
                      " <= " + std::to_string(mar.warmup_epochs) + ")");
  }
  if (mar.subsample_size < 1) throw ConfigError("mar.subsample_size must be >= 1");
  if (mad.alpha < 0) throw ConfigError("mad.alpha must be >= 0");
  if (mar.beta < 0) throw ConfigError("mar.beta must be >= 0");
  if (dropout.kind == DropoutPolicy::Kind::kBernoulli &&
      (dropout.keep_prob <= 0.0 || dropout.keep_prob > 1.0)) {
    throw ConfigError("train.keep_prob must be in (0, 1]");
  }
}

TrainConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  TrainConfig cfg;
  Section root(doc, "config");
  if (root.has("dataset")) parse_dataset(doc.at("dataset"), &cfg.dataset);
  if (root.has("model")) parse_model(doc.at("model"), &cfg.model);
  if (root.has("optimizer")) parse_optimizer(doc.at("optimizer"), &cfg.optimizer);
  if (root.has("train")) parse_train(doc.at("train"), &cfg);
  if (root.has("mad")) parse_mad(doc.at("mad"), &cfg.mad);
  if (root.has("mar")) parse_mar(doc.at("mar"), &cfg.mar);
  root.finish();
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::kMad: return "mad";
    case DistillMode::kSp: return "sp";
    case DistillMode::kOff: return "off";
  }
  return "off";
}

std::string to_string(RegularizeMode mode) {
  switch (mode) {
    case RegularizeMode::kMar: return "mar";
    case RegularizeMode::kSr: return "sr";
    case RegularizeMode::kOff: return "off";
  }
  return "off";
}

}  // namespace mmkd
