// Command-line front end: synthetic data generation, training, evaluation,
// gradient checking, interpretability trace export and the ablation matrix.
//
// Exit codes: 0 success, 2 usage error, 3 missing/unwritable file,
// 4 config or data validation failure, 5 gradient check over tolerance,
// 6 training divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <coattendwg/config.hpp>
#include <coattendwg/gradcheck.hpp>
#include <coattendwg/serialize.hpp>
#include <coattendwg/trace.hpp>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFile = 3;
constexpr int kExitValidation = 4;
constexpr int kExitGradcheck = 5;
constexpr int kExitDivergence = 6;

using namespace coattendwg;

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_config_file(path);
}

void print_metrics(const Metrics& m, bool as_json) {
  if (as_json) {
    std::printf("{\"accuracy\":%.17g,\"macro_f1\":%.17g,\"per_class\":[", m.accuracy,
                m.macro_f1);
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
      const ClassCounts& cc = m.per_class[c];
      std::printf("%s{\"tn\":%ld,\"fp\":%ld,\"fn\":%ld,\"tp\":%ld,"
                  "\"precision\":%.17g,\"recall\":%.17g,\"f1\":%.17g}",
                  c ? "," : "", cc.tn, cc.fp, cc.fn, cc.tp, m.precision[c],
                  m.recall[c], m.f1[c]);
    }
    std::printf("]}\n");
    return;
  }
  std::printf("accuracy  %.6f\n", m.accuracy);
  std::printf("macro-F1  %.6f\n", m.macro_f1);
  std::printf("%-6s %8s %8s %8s %8s %10s %9s %9s\n", "class", "TN", "FP", "FN",
              "TP", "precision", "recall", "F1");
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const ClassCounts& cc = m.per_class[c];
    std::printf("%-6zu %8ld %8ld %8ld %8ld %10.6f %9.6f %9.6f\n", c, cc.tn,
                cc.fp, cc.fn, cc.tp, m.precision[c], m.recall[c], m.f1[c]);
  }
}

int run_synth(const std::string& out, const std::string& task, int n,
              int text_dim, int img_dim, double noise, std::uint64_t seed,
              double split_ratio, const std::string& test_out,
              std::uint64_t split_seed) {
  SyntheticSpec spec;
  spec.n_samples = n;
  spec.text_dim = text_dim;
  spec.img_dim = img_dim;
  spec.task = parse_synth_task(task);
  spec.noise = noise;
  spec.seed = seed;
  Dataset data = synth_generate(spec);
  if (!test_out.empty()) {
    auto [train_part, test_part] = split(data, split_ratio, split_seed);
    save_features(train_part, out);
    save_features(test_part, test_out);
    std::printf("wrote %zu train records to %s and %zu test records to %s\n",
                train_part.size(), out.c_str(), test_part.size(),
                test_out.c_str());
  } else {
    save_features(data, out);
    std::printf("wrote %zu records to %s\n", data.size(), out.c_str());
  }
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& out, const std::string& log_path,
              bool balance) {
  RunConfig cfg = load_config(config_path);
  Dataset data = load_features(data_path);
  cfg.model.text_dim = data.text_dim;
  cfg.model.img_dim = data.img_dim;
  cfg.model.num_classes = data.num_classes;
  if (balance) {
    Rng rng(cfg.train.seed);
    data = upsample_balance(data, rng);
  }

  TrainResult result = train(cfg.model, cfg.train, data);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw FileError("cannot write epoch log: " + log_path);
  }
  for (const EpochRecord& rec : result.log) {
    const std::string line = format_epoch_record(rec);
    std::printf("%s\n", line.c_str());
    if (log.is_open()) log << line << '\n';
  }
  save_params(result.params, cfg.model, out);
  std::printf("trained %ld steps over %zu epochs; params written to %s\n",
              result.steps, result.log.size(), out.c_str());
  return 0;
}

int run_eval(const std::string& params_path, const std::string& data_path,
             bool as_json) {
  auto [params, cfg] = load_params(params_path);
  Dataset data = load_features(data_path);
  if (data.text_dim != cfg.text_dim || data.img_dim != cfg.img_dim) {
    throw FormatError("dataset dims do not match the trained model");
  }
  print_metrics(evaluate(params, cfg, data), as_json);
  return 0;
}

int run_gradcheck(const std::string& config_path, double h, double tol,
                  int batch, std::uint64_t seed) {
  ModelConfig cfg = config_path.empty() ? ModelConfig::tiny()
                                        : load_config(config_path).model;
  cfg.dropout = 0.0;  // the check requires a deterministic forward
  cfg.seed = seed;
  cfg.validate();
  ModelParams params = ModelParams::init(cfg);

  Rng rng(seed + 1);
  Tensor text = Tensor::zeros({batch, cfg.text_dim});
  Tensor img = Tensor::zeros({batch, cfg.img_dim});
  for (double& v : text.data()) v = rng.normal();
  for (double& v : img.data()) v = rng.normal();
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (int& l : labels) {
    l = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(cfg.num_classes)));
  }

  auto named = params.named_parameters();
  GradCheckReport report = gradcheck(named, [&](Tape& tape) {
    ForwardResult res = forward_full(tape, params, cfg, text, img);
    return cross_entropy(tape, res.logits, labels);
  }, h);

  std::printf("%-40s %12s %14s %14s\n", "parameter", "max_rel_err", "analytic",
              "numeric");
  for (const GradCheckEntry& e : report.entries) {
    std::printf("%-40s %12.3e %14.6e %14.6e\n", e.name.c_str(), e.max_rel_err,
                e.analytic, e.numeric);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", report.max_rel_err,
              tol);
  if (!report.passed(tol)) {
    std::printf("gradient check FAILED\n");
    return kExitGradcheck;
  }
  std::printf("gradient check passed\n");
  return 0;
}

int run_trace(const std::string& params_path, const std::string& data_path,
              const std::string& out, const std::string& format, int limit) {
  auto [params, cfg] = load_params(params_path);
  Dataset data = load_features(data_path);
  if (data.text_dim != cfg.text_dim || data.img_dim != cfg.img_dim) {
    throw FormatError("dataset dims do not match the trained model");
  }
  if (limit > 0 && static_cast<std::size_t>(limit) < data.size()) {
    data.records.resize(static_cast<std::size_t>(limit));
  }
  auto rows = collect_traces(params, cfg, data);
  export_trace(rows, out, parse_trace_format(format));
  std::printf("wrote %zu trace rows for %zu samples to %s\n", rows.size(),
              data.size(), out.c_str());
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& data_path,
               int seeds, double holdout, const std::string& out_path) {
  RunConfig cfg = load_config(config_path);
  Dataset data = load_features(data_path);
  cfg.model.text_dim = data.text_dim;
  cfg.model.img_dim = data.img_dim;
  cfg.model.num_classes = data.num_classes;
  auto [train_set, test_set] = split(data, 1.0 - holdout, cfg.train.seed);

  std::string table;
  {
    char head[96];
    std::snprintf(head, sizeof(head), "%-16s %10s %10s   (%d seeds)\n",
                  "variant", "mean_acc", "mean_f1", seeds);
    table = head;
    std::printf("%s", head);
  }
  for (const auto& [name, flags] : ablation_grid()) {
    double acc_sum = 0.0, f1_sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      ModelConfig mcfg = cfg.model;
      mcfg.ablation = flags;
      mcfg.seed = cfg.model.seed + static_cast<std::uint64_t>(s);
      TrainConfig tcfg = cfg.train;
      tcfg.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
      TrainResult result = train(mcfg, tcfg, train_set);
      Metrics m = evaluate(result.params, mcfg, test_set);
      acc_sum += m.accuracy;
      f1_sum += m.macro_f1;
    }
    char line[96];
    std::snprintf(line, sizeof(line), "%-16s %10.4f %10.4f\n", name.c_str(),
                  acc_sum / seeds, f1_sum / seeds);
    table += line;
    std::printf("%s", line);
    std::fflush(stdout);
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw FileError("cannot write ablation table: " + out_path);
    out << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"co-attention dimension-wise gating fusion model"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset file");
  std::string synth_out, synth_task = "xor", synth_test_out;
  int synth_n = 2000, synth_text_dim = 16, synth_img_dim = 16;
  double synth_noise = 0.1, synth_split = 0.8;
  std::uint64_t synth_seed = 0, synth_split_seed = 0;
  synth->add_option("--out", synth_out, "output dataset file")->required();
  synth->add_option("--task", synth_task, "xor | single-text | single-image | linear");
  synth->add_option("--n", synth_n, "number of samples");
  synth->add_option("--text-dim", synth_text_dim, "text feature dimension");
  synth->add_option("--img-dim", synth_img_dim, "image feature dimension");
  synth->add_option("--noise", synth_noise, "feature noise sigma");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--test-out", synth_test_out,
                    "also write a held-out test file");
  synth->add_option("--split", synth_split, "train fraction for --test-out");
  synth->add_option("--split-seed", synth_split_seed, "seed for the split");

  auto* train_cmd = app.add_subcommand("train", "train on a dataset file");
  std::string train_config, train_data, train_out = "params.json", train_log;
  bool train_balance = false;
  train_cmd->add_option("--config", train_config, "key=value config file");
  train_cmd->add_option("--data", train_data, "training dataset")->required();
  train_cmd->add_option("--out", train_out, "output params file");
  train_cmd->add_option("--log", train_log, "epoch log (JSON lines)");
  train_cmd->add_flag("--balance", train_balance,
                      "upsample classes to the majority count first");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate trained params");
  std::string eval_params, eval_data;
  bool eval_json = false;
  eval_cmd->add_option("--params", eval_params, "params file")->required();
  eval_cmd->add_option("--data", eval_data, "evaluation dataset")->required();
  eval_cmd->add_flag("--json", eval_json, "emit metrics as JSON");

  auto* gc = app.add_subcommand("gradcheck",
                                "compare analytic and numeric gradients");
  std::string gc_config;
  double gc_h = 1e-5, gc_tol = 1e-4;
  int gc_batch = 2;
  std::uint64_t gc_seed = 0;
  gc->add_option("--config", gc_config,
                 "config file (defaults to the built-in tiny config)");
  gc->add_option("--step", gc_h, "central difference step");
  gc->add_option("--tol", gc_tol, "max relative error tolerance");
  gc->add_option("--batch", gc_batch, "batch size of the probe input");
  gc->add_option("--seed", gc_seed, "seed for params and probe data");

  auto* trace_cmd = app.add_subcommand("trace", "export interpretability traces");
  std::string trace_params, trace_data, trace_out, trace_format = "csv";
  int trace_limit = 0;
  trace_cmd->add_option("--params", trace_params, "params file")->required();
  trace_cmd->add_option("--data", trace_data, "dataset file")->required();
  trace_cmd->add_option("--out", trace_out, "output file")->required();
  trace_cmd->add_option("--format", trace_format, "csv | jsonl");
  trace_cmd->add_option("--limit", trace_limit, "trace at most N samples");

  auto* ablate_cmd = app.add_subcommand("ablate",
                                        "train and score every ablation variant");
  std::string ablate_config, ablate_data, ablate_out;
  int ablate_seeds = 3;
  double ablate_holdout = 0.2;
  ablate_cmd->add_option("--config", ablate_config, "key=value config file");
  ablate_cmd->add_option("--data", ablate_data, "dataset file")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "seeds per variant");
  ablate_cmd->add_option("--holdout", ablate_holdout, "test fraction");
  ablate_cmd->add_option("--out", ablate_out, "also write the table to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return run_synth(synth_out, synth_task, synth_n, synth_text_dim,
                       synth_img_dim, synth_noise, synth_seed, synth_split,
                       synth_test_out, synth_split_seed);
    }
    if (train_cmd->parsed()) {
      return run_train(train_config, train_data, train_out, train_log,
                       train_balance);
    }
    if (eval_cmd->parsed()) return run_eval(eval_params, eval_data, eval_json);
    if (gc->parsed()) return run_gradcheck(gc_config, gc_h, gc_tol, gc_batch, gc_seed);
    if (trace_cmd->parsed()) {
      return run_trace(trace_params, trace_data, trace_out, trace_format,
                       trace_limit);
    }
    if (ablate_cmd->parsed()) {
      return run_ablate(ablate_config, ablate_data, ablate_seeds,
                        ablate_holdout, ablate_out);
    }
  } catch (const FileError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFile;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
