#include "mmkd/train.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "mmkd/losses.hpp"
#include "mmkd/mad.hpp"
#include "mmkd/optimizer.hpp"

namespace mmkd {

using nlohmann::json;

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const EpochRecord& r : records) {
    json line;
    line["epoch"] = r.epoch;
    line["l_tl"] = r.l_tl;
    line["l_mad"] = r.l_mad;
    line["l_mar"] = r.l_mar;
    line["l_total"] = r.l_total;
    line["lr"] = r.lr;
    out += line.dump();
    out += '\n';
  }
  return out;
}

TrainLog TrainLog::from_jsonl(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json obj = json::parse(line);
    EpochRecord r;
    r.epoch = obj.at("epoch").get<int>();
    r.l_tl = obj.at("l_tl").get<double>();
    r.l_mad = obj.at("l_mad").get<double>();
    r.l_mar = obj.at("l_mar").get<double>();
    r.l_total = obj.at("l_total").get<double>();
    r.lr = obj.at("lr").get<double>();
    log.records.push_back(r);
  }
  return log;
}

std::string MiningReport::to_json() const {
  json doc;
  doc["warmup_epochs"] = warmup_epochs;
  doc["subsample_size"] = subsample_size;
  doc["modality_names"] = modality_names;
  json rows = json::array();
  for (Eigen::Index e = 0; e < divergence.rows(); ++e) {
    json row = json::array();
    for (Eigen::Index j = 0; j < divergence.cols(); ++j) row.push_back(divergence(e, j));
    rows.push_back(row);
  }
  doc["divergence"] = rows;
  json mean = json::array();
  for (Eigen::Index j = 0; j < mean_divergence.size(); ++j) mean.push_back(mean_divergence(j));
  doc["mean_divergence"] = mean;
  doc["strong_modality"] = strong_modality;
  doc["tie"] = tie;
  json weak = json::array();
  for (const DropoutPattern& p : weak_set) {
    json bits = json::array();
    for (int j = 0; j < p.size(); ++j) bits.push_back(static_cast<bool>(p.present[static_cast<std::size_t>(j)]));
    weak.push_back(bits);
  }
  doc["weak_set"] = weak;
  return doc.dump(2) + "\n";
}

MiningReport MiningReport::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mining report is not valid JSON: ") + e.what());
  }
  MiningReport rep;
  rep.warmup_epochs = doc.at("warmup_epochs").get<int>();
  rep.subsample_size = doc.at("subsample_size").get<int>();
  rep.modality_names = doc.at("modality_names").get<std::vector<std::string>>();
  const auto& rows = doc.at("divergence");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = static_cast<Eigen::Index>(rep.modality_names.size());
  rep.divergence.resize(n, m);
  for (Eigen::Index e = 0; e < n; ++e) {
    for (Eigen::Index j = 0; j < m; ++j) rep.divergence(e, j) = rows.at(e).at(j).get<double>();
  }
  rep.mean_divergence.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) rep.mean_divergence(j) = doc.at("mean_divergence").at(j).get<double>();
  rep.strong_modality = doc.at("strong_modality").get<int>();
  rep.tie = doc.at("tie").get<bool>();
  for (const auto& bits : doc.at("weak_set")) {
    DropoutPattern p;
    for (const auto& bit : bits) p.present.push_back(bit.get<bool>());
    rep.weak_set.push_back(p);
  }
  return rep;
}

std::string MiningReport::render_text() const {
  std::ostringstream out;
  out << "warm-up mining: " << warmup_epochs << " epochs over " << subsample_size << " samples\n";
  const auto fmt_row = [&](const Eigen::VectorXd& v) {
    std::ostringstream row;
    row << "[";
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (j) row << ", ";
      row << v(j);
    }
    row << "]";
    return row.str();
  };
  for (Eigen::Index e = 0; e < divergence.rows(); ++e) {
    out << "epoch " << (e + 1) << ": g_d = " << fmt_row(divergence.row(e).transpose()) << "\n";
  }
  out << "mean     : g_d = " << fmt_row(mean_divergence) << "\n";
  out << "strong modality: " << strong_modality;
  if (strong_modality >= 0 && strong_modality < static_cast<int>(modality_names.size())) {
    out << " (" << modality_names[static_cast<std::size_t>(strong_modality)] << ")";
  }
  if (tie) out << "  [tie broken to lowest index]";
  out << "\n";
  out << "weak combinations (" << weak_set.size() << "):";
  for (const DropoutPattern& p : weak_set) out << " " << p.render(modality_names);
  out << "\n";
  return out.str();
}

double total_loss(double l_tl, double l_mad, double l_mar, const TrainConfig& config) {
  if (!std::isfinite(l_tl)) throw NumericalError("task loss is not finite");
  if (!std::isfinite(l_mad)) throw NumericalError("distillation loss is not finite");
  if (!std::isfinite(l_mar)) throw NumericalError("regularization loss is not finite");
  return l_tl + config.mad.alpha * l_mad + config.mar.beta * l_mar;
}

namespace {

std::vector<int> input_dims(const DatasetSpec& spec) {
  return std::vector<int>(static_cast<std::size_t>(spec.num_modalities), spec.feature_dim);
}

ModalityBatch slice_batch(const Dataset& data, const std::vector<Eigen::Index>& order, Eigen::Index start,
                          Eigen::Index count) {
  ModalityBatch batch;
  batch.labels.resize(count);
  batch.features.assign(data.train_features.size(), Eigen::MatrixXd(count, data.spec.feature_dim));
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
    batch.labels(i) = data.train_labels(src);
    for (std::size_t j = 0; j < data.train_features.size(); ++j) {
      batch.features[j].row(i) = data.train_features[j].row(src);
    }
  }
  batch.patterns.assign(static_cast<std::size_t>(count), DropoutPattern::all_present(data.spec.num_modalities));
  return batch;
}

std::vector<Eigen::Index> identity_order(Eigen::Index n) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  return order;
}

}  // namespace

TeacherNet pretrain_teacher(const TrainConfig& config, const Dataset& data, TrainLog* log) {
  config.validate();
  Rng rng(config.seed);
  TeacherNet net = TeacherNet::create(input_dims(data.spec), config.model, data.spec.num_classes, rng);
  Sgd opt(config.optimizer);
  std::vector<Eigen::Index> order = identity_order(data.train_size());

  for (int epoch = 1; epoch <= config.teacher_epochs; ++epoch) {
    const double lr = scheduled_lr(config.optimizer, epoch);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < data.train_size(); start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, data.train_size() - start);
      if (count < 2) continue;  // a singleton tail batch is skipped
      ModalityBatch batch = slice_batch(data, order, start, count);
      TeacherForward fwd = forward_teacher(net, batch);
      CrossEntropy ce = softmax_cross_entropy(fwd.logits, batch.labels);
      if (!std::isfinite(ce.loss)) throw NumericalError("teacher task loss is not finite");
      TeacherNet grads = net.zeros_like();
      backward_teacher(net, batch, fwd, ce.grad, &grads);
      opt.step(&net, grads, lr);
      epoch_loss += ce.loss;
      ++batches;
    }
    if (log) {
      EpochRecord r;
      r.epoch = epoch;
      r.l_tl = batches > 0 ? epoch_loss / batches : 0.0;
      r.l_total = r.l_tl;
      r.lr = lr;
      log->records.push_back(r);
    }
  }
  return net;
}

DeploymentResult train_deployment(const TrainConfig& config, const Dataset& data, const TeacherNet& teacher) {
  config.validate();
  if (teacher.num_modalities() != data.spec.num_modalities) {
    throw ContractError("train_deployment: teacher modality count does not match the dataset");
  }

  // Streams: config.seed drives the teacher run, config.seed + 1 this one.
  Rng rng(config.seed + 1);
  DeploymentResult result{
      DeploymentNet::create(input_dims(data.spec), config.model, data.spec.num_classes, rng), {}, {}};
  DeploymentNet& net = result.net;
  Sgd opt(config.optimizer);

  const int m = data.spec.num_modalities;
  const bool mine = config.mar.mode != RegularizeMode::kOff;
  const int warmup = config.mar.warmup_epochs;
  const PatternFamilies families = enumerate_patterns(m);
  MiningState mining(m, warmup);

  // Fixed mining subsample, drawn once so per-epoch divergences compare.
  ModalityBatch eval_subset;
  if (mine) {
    const Eigen::Index n = std::min<Eigen::Index>(data.train_size(), config.mar.subsample_size);
    std::vector<Eigen::Index> order = identity_order(data.train_size());
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(n));
    eval_subset = slice_batch(data, order, 0, n);
  }

  std::vector<Eigen::Index> order = identity_order(data.train_size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = scheduled_lr(config.optimizer, epoch);
    rng.shuffle(order);
    const bool mad_on = config.mad.mode != DistillMode::kOff && (config.mad.warmup_active || epoch > warmup);
    const bool mar_on = mine && epoch > warmup;

    double sum_tl = 0.0, sum_mad = 0.0, sum_mar = 0.0, sum_total = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < data.train_size(); start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, data.train_size() - start);
      if (count < 2) continue;
      ModalityBatch batch = slice_batch(data, order, start, count);
      for (auto& pattern : batch.patterns) pattern = sample_dropout_pattern(m, rng, config.dropout);

      const DeploymentForward fwd = forward_deployment(net, batch);
      const CrossEntropy task = softmax_cross_entropy(fwd.logits, batch.labels);

      double l_mad = 0.0;
      Eigen::MatrixXd d_fused;
      if (mad_on) {
        const TeacherForward teacher_fwd = forward_teacher(teacher, batch.complete_view());
        const MadLoss mad = mad_loss(teacher_fwd.fused, fwd.fused, teacher_fwd.logits, config.mad.mode,
                                     config.mad.discrepancy());
        l_mad = mad.value;
        d_fused = config.mad.alpha * mad.grad;
      }

      double l_mar = 0.0;
      Eigen::MatrixXd d_reg = Eigen::MatrixXd::Zero(count, data.spec.num_classes);
      if (mar_on) {
        const MarLoss reg = mar_loss(fwd.reg_logits, batch.labels, batch.patterns, mining, config.mar.mode);
        l_mar = reg.value;
        d_reg = config.mar.beta * reg.grad;
      }

      const double l_total = total_loss(task.loss, l_mad, l_mar, config);

      DeploymentNet grads = net.zeros_like();
      backward_deployment(net, batch, fwd, task.grad, d_reg, d_fused, &grads);
      opt.step(&net, grads, lr);

      sum_tl += task.loss;
      sum_mad += l_mad;
      sum_mar += l_mar;
      sum_total += l_total;
      ++batches;
    }

    if (mine && epoch <= warmup) {
      const PatternPredictions preds = collect_pattern_predictions(net, eval_subset, families.mining);
      const ClassHistogram hist = class_histogram(preds, data.spec.num_classes, config.mar.literal_softmax_counts);
      mining.record_epoch(pattern_divergence(hist));
      if (epoch == warmup) mining.finalize();
    }

    EpochRecord r;
    r.epoch = epoch;
    const double inv = batches > 0 ? 1.0 / batches : 0.0;
    r.l_tl = sum_tl * inv;
    r.l_mad = sum_mad * inv;
    r.l_mar = sum_mar * inv;
    r.l_total = sum_total * inv;
    r.lr = lr;
    result.log.records.push_back(r);
  }

  if (mine) {
    MiningReport rep;
    rep.warmup_epochs = warmup;
    rep.subsample_size = static_cast<int>(eval_subset.batch_size());
    rep.modality_names = data.spec.names();
    rep.divergence = mining.memory_bank();
    rep.mean_divergence = mining.mean_divergence();
    rep.strong_modality = mining.strong_modality();
    rep.tie = mining.tie_detected();
    rep.weak_set = mining.weak_set();
    result.mining = std::move(rep);
  }
  return result;
}

}  // namespace mmkd
