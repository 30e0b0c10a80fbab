#include "mmkd/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmkd/checkpoint.hpp"
#include "mmkd/config.hpp"
#include "mmkd/eval.hpp"
#include "mmkd/train.hpp"

namespace mmkd {

namespace {

namespace fs = std::filesystem;

std::vector<int> input_dims(const DatasetSpec& spec) {
  return std::vector<int>(static_cast<std::size_t>(spec.num_modalities), spec.feature_dim);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_last_epoch(const TrainLog& log) {
  if (log.records.empty()) return;
  const EpochRecord& r = log.records.back();
  std::cout << "final epoch " << r.epoch << ": l_tl=" << r.l_tl << " l_mad=" << r.l_mad << " l_mar=" << r.l_mar
            << " l_total=" << r.l_total << "\n";
}

int cmd_train_teacher(const std::string& config_path, const std::string& out_dir) {
  const TrainConfig config = load_config(config_path);
  ensure_dir(out_dir);
  const Dataset data = generate_dataset(config.dataset);
  TrainLog log;
  const TeacherNet teacher = pretrain_teacher(config, data, &log);
  const std::string ckpt = (fs::path(out_dir) / "teacher.ckpt").string();
  save_checkpoint(ckpt, teacher);
  write_text_file((fs::path(out_dir) / "teacher_log.jsonl").string(), log.to_jsonl());
  print_last_epoch(log);
  std::cout << "teacher checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_train_deployment(const std::string& config_path, const std::string& teacher_path,
                         const std::string& out_dir) {
  const TrainConfig config = load_config(config_path);
  ensure_dir(out_dir);
  const Dataset data = generate_dataset(config.dataset);
  Rng init(0);
  TeacherNet teacher = TeacherNet::create(input_dims(config.dataset), config.model, config.dataset.num_classes, init);
  load_checkpoint(teacher_path, &teacher);

  const DeploymentResult result = train_deployment(config, data, teacher);
  const std::string ckpt = (fs::path(out_dir) / "deployment.ckpt").string();
  save_checkpoint(ckpt, result.net);
  write_text_file((fs::path(out_dir) / "train_log.jsonl").string(), result.log.to_jsonl());
  if (result.mining) {
    write_text_file((fs::path(out_dir) / "mining_report.json").string(), result.mining->to_json());
    std::cout << result.mining->render_text();
  }
  print_last_epoch(result.log);
  std::cout << "deployment checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& ckpt_path, const std::string& out_dir,
                 const std::string& format) {
  const TrainConfig config = load_config(config_path);
  ensure_dir(out_dir);
  const Dataset data = generate_dataset(config.dataset);
  Rng init(0);
  DeploymentNet net = DeploymentNet::create(input_dims(config.dataset), config.model, config.dataset.num_classes, init);
  load_checkpoint(ckpt_path, &net);

  const CombinationReport report = evaluate_combinations(net, data);
  std::cout << report_to_csv(report);
  if (format == "csv") {
    write_text_file((fs::path(out_dir) / "report.csv").string(), report_to_csv(report));
  } else if (format == "json") {
    write_text_file((fs::path(out_dir) / "report.json").string(), report_to_json(report));
  } else if (format == "plot") {
    write_report_svg(report, (fs::path(out_dir) / "report_bars.svg").string());
    if (write_score_scatter_svg(report, (fs::path(out_dir) / "report_scores.svg").string())) {
      std::cout << "plots: report_bars.svg report_scores.svg\n";
    } else {
      std::cout << "plots: report_bars.svg (score scatter needs a binary task)\n";
    }
  } else {
    throw ConfigError("--format must be csv|json|plot, got '" + format + "'");
  }
  return 0;
}

int cmd_mining_report(const std::string& log_dir) {
  const std::string path = (fs::path(log_dir) / "mining_report.json").string();
  const MiningReport report = MiningReport::from_json(read_file(path));
  std::cout << report.render_text();
  return 0;
}

int cmd_dump_dataset(const std::string& config_path, const std::string& out_file, const std::string& split) {
  const TrainConfig config = load_config(config_path);
  const Dataset data = generate_dataset(config.dataset);
  dump_dataset_csv(data, split, out_file);
  std::cout << "wrote " << split << " split to " << out_file << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"incomplete multimodal training with teacher distillation and weak-combination mining"};
  app.require_subcommand(1);

  std::string config_path, teacher_path, ckpt_path, log_dir;
  std::string out_dir = ".";
  std::string format = "csv";
  std::string split = "train";
  std::string dump_path;

  auto* teach = app.add_subcommand("train-teacher", "train the complete-modality teacher");
  teach->add_option("--config", config_path, "config file")->required();
  teach->add_option("--out", out_dir, "output directory");

  auto* deploy = app.add_subcommand("train-deployment", "train the dropout-tolerant deployment network");
  deploy->add_option("--config", config_path, "config file")->required();
  deploy->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  deploy->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("evaluate", "per-combination evaluation of a deployment checkpoint");
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--ckpt", ckpt_path, "deployment checkpoint")->required();
  eval->add_option("--out", out_dir, "output directory");
  eval->add_option("--format", format, "csv|json|plot");

  auto* mining = app.add_subcommand("mining-report", "render the mining report from a training output directory");
  mining->add_option("--log", log_dir, "directory holding mining_report.json")->required();

  auto* dump = app.add_subcommand("dump-dataset", "write the synthetic dataset to a columnar csv");
  dump->add_option("--config", config_path, "config file")->required();
  dump->add_option("--out", dump_path, "output csv path")->required();
  dump->add_option("--split", split, "train|test");

  // CLI11's vector overload consumes arguments back to front.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (teach->parsed()) return cmd_train_teacher(config_path, out_dir);
    if (deploy->parsed()) return cmd_train_deployment(config_path, teacher_path, out_dir);
    if (eval->parsed()) return cmd_evaluate(config_path, ckpt_path, out_dir, format);
    if (mining->parsed()) return cmd_mining_report(log_dir);
    if (dump->parsed()) return cmd_dump_dataset(config_path, dump_path, split);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace mmkd
