// Command-line front end: pretrain, distill, finetune, eval, gradcheck,
// compare. Exit codes: 0 success, 2 config error, 3 schema/format error,
// 4 numerical-check failure, 1 anything else.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include "moma/gradcheck.hpp"
#include "moma/report.hpp"
#include "moma/trainer.hpp"
#include "moma/version.hpp"

namespace fs = std::filesystem;
using namespace moma;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config_path, "run config file")
      ->required();
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--out", flags.out, "override the output directory");
}

RunConfig load_config(const CommonFlags& flags) {
  RunConfig config = RunConfig::parse_file(flags.config_path);
  if (flags.seed) {
    config.seed = *flags.seed;
    config.overrides.push_back("seed=" + std::to_string(*flags.seed));
  }
  if (flags.out) {
    config.out_dir = *flags.out;
    config.overrides.push_back("out_dir=" + *flags.out);
  }
  config.validate();
  return config;
}

void export_task_csvs(const GeneratedTask& task, const fs::path& dir) {
  export_dataset_csv(task.source.train, dir / "source_train.csv");
  export_dataset_csv(task.source.val, dir / "source_val.csv");
  export_dataset_csv(task.source.test, dir / "source_test.csv");
  export_dataset_csv(task.target.train, dir / "target_train.csv");
  export_dataset_csv(task.target.val, dir / "target_val.csv");
  export_dataset_csv(task.target.test, dir / "target_test.csv");
}

const Dataset& pick_split(const SplitSet& splits, const std::string& split) {
  if (split == "train") return splits.train;
  if (split == "val") return splits.val;
  if (split == "test") return splits.test;
  throw ConfigError("split must be train|val|test, got '" + split + "'");
}

int cmd_pretrain(const CommonFlags& flags, bool export_data) {
  RunConfig config = load_config(flags);
  const fs::path out_dir(config.out_dir);
  GeneratedTask task = generate(config.task_spec());
  if (export_data) export_task_csvs(task, out_dir);

  SupervisedRun run = pretrain_teacher(config, task.source);
  save_checkpoint(stack_checkpoint(run.stack, config), out_dir / "teacher.ckpt");

  Evaluation eval = evaluate_model(InferenceModel::from_stack(run.stack),
                                   task.source.test, config);
  eval.report.tag = "TC";
  eval.report.pretrained = "none";
  write_report(eval.report, config.echo_text(), out_dir / "report.txt");
  write_loss_csv(run.loss_log, config.echo_text(), out_dir / "losses.csv");
  std::cout << "teacher checkpoint: " << (out_dir / "teacher.ckpt").string()
            << "\nsource test accuracy: " << eval.report.accuracy << '\n';
  return 0;
}

int cmd_distill(const CommonFlags& flags, const std::string& teacher_path,
                bool export_data) {
  RunConfig config = load_config(flags);
  const fs::path out_dir(config.out_dir);
  GeneratedTask task = generate(config.task_spec());
  if (export_data) export_task_csvs(task, out_dir);

  Checkpoint teacher = load_checkpoint(teacher_path);
  DistillRun run = make_distill_run(config, teacher);
  distill_train(run, task.target.train);

  save_checkpoint(stack_checkpoint(run.student, config),
                  out_dir / "student.ckpt");
  save_checkpoint(inference_checkpoint(run.student, config),
                  out_dir / "inference.ckpt");
  if (config.checkpoint_queue) {
    save_checkpoint(snapshot_distill_run(run), out_dir / "run_state.ckpt");
  }
  write_loss_csv(run.loss_log, config.echo_text(), out_dir / "losses.csv");

  Evaluation eval = evaluate_model(InferenceModel::from_stack(run.student),
                                   task.target.test, config);
  eval.report.tag = "MoMA";
  eval.report.pretrained = config.student_init;
  write_report(eval.report, config.echo_text(), out_dir / "report.txt");
  std::cout << "student checkpoint: " << (out_dir / "student.ckpt").string()
            << "\ngamma: " << run.gamma
            << "\ntarget test accuracy: " << eval.report.accuracy << '\n';
  return 0;
}

int cmd_finetune(const CommonFlags& flags,
                 const std::optional<std::string>& init_path,
                 bool export_data) {
  RunConfig config = load_config(flags);
  const fs::path out_dir(config.out_dir);
  GeneratedTask task = generate(config.task_spec());
  if (export_data) export_task_csvs(task, out_dir);

  std::optional<Checkpoint> teacher;
  if (init_path) teacher = load_checkpoint(*init_path);
  SupervisedRun run = finetune_baseline(
      config, task.target,
      init_path ? BaselineInit::teacher : BaselineInit::none,
      teacher ? &*teacher : nullptr);

  save_checkpoint(stack_checkpoint(run.stack, config),
                  out_dir / "student.ckpt");
  save_checkpoint(inference_checkpoint(run.stack, config),
                  out_dir / "inference.ckpt");
  write_loss_csv(run.loss_log, config.echo_text(), out_dir / "losses.csv");

  Evaluation eval = evaluate_model(InferenceModel::from_stack(run.stack),
                                   task.target.test, config);
  eval.report.tag = init_path ? "FT_Teacher" : "FT_None";
  eval.report.pretrained = init_path ? "teacher" : "none";
  write_report(eval.report, config.echo_text(), out_dir / "report.txt");
  std::cout << "baseline checkpoint: " << (out_dir / "student.ckpt").string()
            << "\ntarget test accuracy: " << eval.report.accuracy << '\n';
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_path,
             const std::string& domain, const std::string& split,
             const std::optional<std::string>& embeddings_path,
             const std::optional<std::string>& correlations_path,
             const std::optional<std::string>& teacher_path,
             const std::optional<std::string>& report_path,
             const std::string& tag) {
  RunConfig config = load_config(flags);
  GeneratedTask task = generate(config.task_spec());
  const SplitSet& splits = domain == "source" ? task.source : task.target;
  const Dataset& data = pick_split(splits, split);

  Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  InferenceModel model = InferenceModel::from_checkpoint(checkpoint);
  Evaluation eval = evaluate_model(model, data, config);
  eval.report.tag = tag;
  eval.report.pretrained = "checkpoint";

  if (embeddings_path) {
    write_embeddings_csv(eval.embeddings, data.labels, tag, split,
                         config.echo_text(), *embeddings_path);
  }
  if (correlations_path) {
    // Balanced per-class subsample, matched across the two sets.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) {
      by_class[data.labels[i]].push_back(i);
    }
    std::size_t per_class = 16;
    for (const auto& [cls, idx] : by_class) {
      per_class = std::min(per_class, idx.size());
    }
    std::vector<std::size_t> chosen;
    std::vector<int> chosen_labels;
    for (const auto& [cls, idx] : by_class) {
      for (std::size_t i = 0; i < per_class; ++i) {
        chosen.push_back(idx[i]);
        chosen_labels.push_back(cls);
      }
    }
    auto gather_rows = [&](const Tensor& emb) {
      const std::size_t d = emb.cols();
      std::vector<double> values(chosen.size() * d);
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::copy_n(emb.values().begin() + chosen[i] * d, d,
                    values.begin() + i * d);
      }
      return Tensor::from_values({chosen.size(), d}, std::move(values));
    };
    Tensor student_rows = gather_rows(eval.embeddings);
    Tensor other_rows = student_rows;
    if (teacher_path) {
      InferenceModel teacher_model =
          InferenceModel::from_checkpoint(load_checkpoint(*teacher_path));
      auto [teacher_emb, teacher_preds] = teacher_model.predict(data.inputs);
      other_rows = gather_rows(teacher_emb);
    }
    CorrelationBlocks blocks = class_correlations(
        student_rows, chosen_labels, other_rows, chosen_labels);
    write_correlations_csv(blocks, config.echo_text(), *correlations_path);
  }

  const std::string body = render_report(eval.report);
  if (report_path) {
    write_report(eval.report, config.echo_text(), *report_path);
  }
  std::cout << body;
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags, std::size_t seeds,
                  bool inject_error) {
  RunConfig config = load_config(flags);
  GradCheckOptions options;

  struct Row {
    double worst = 0.0;
    bool pass = true;
  };
  std::map<std::string, Row> table;
  std::vector<std::string> frozen;
  bool all_pass = true;
  for (std::size_t i = 0; i < seeds; ++i) {
    options.corrupt = inject_error && i == 0;
    GradCheckReport report = gradcheck(config, config.seed + i, options);
    for (const auto& block : report.blocks) {
      auto& row = table[block.name];
      row.worst = std::max(row.worst, block.max_rel_err);
      row.pass = row.pass && block.pass;
    }
    if (i == 0) frozen = report.frozen_blocks;
    all_pass = all_pass && report.all_pass;
  }

  std::cout << "# engine: " << kEngineVersion << "\n# seeds: " << seeds
            << "  tolerance: " << options.tolerance << '\n';
  std::cout << std::left << std::setw(28) << "block" << std::setw(16)
            << "max_rel_err" << "status\n";
  for (const auto& [name, row] : table) {
    std::cout << std::left << std::setw(28) << name << std::setw(16)
              << std::scientific << std::setprecision(3) << row.worst
              << (row.pass ? "pass" : "FAIL") << '\n';
  }
  for (const auto& name : frozen) {
    std::cout << std::left << std::setw(28) << name << std::setw(16)
              << "no gradient" << "pass (frozen)\n";
  }
  std::cout << (all_pass ? "gradcheck: all blocks pass\n"
                         : "gradcheck: FAILURE\n");
  return all_pass ? 0 : 4;
}

struct Summary {
  std::vector<double> acc, f1, kappa, silhouette;
};

int cmd_compare(const std::vector<std::string>& report_paths,
                const std::optional<std::string>& csv_path) {
  if (report_paths.size() < 2) {
    throw ConfigError("compare: need at least two report files");
  }
  std::map<std::pair<std::string, std::string>, Summary> grouped;
  for (const auto& path : report_paths) {
    if (!fs::exists(path)) {
      throw InputError("compare: missing report '" + path + "'");
    }
    const auto kv = read_report(path);
    auto need = [&](const std::string& key) {
      auto it = kv.find(key);
      if (it == kv.end()) {
        throw SchemaError("compare: report '" + path + "' lacks key '" + key +
                          "'");
      }
      return it->second;
    };
    Summary& summary = grouped[{need("tag"), need("pretrained")}];
    summary.acc.push_back(std::stod(need("accuracy")));
    summary.f1.push_back(std::stod(need("macro_f1")));
    summary.kappa.push_back(std::stod(need("kappa_quadratic")));
    if (kv.count("silhouette")) {
      summary.silhouette.push_back(std::stod(kv.at("silhouette")));
    }
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  auto cell = [&](const std::vector<double>& v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4) << mean_of(v);
    if (v.size() > 1) out << " +/- " << std::setprecision(4) << std_of(v);
    return out.str();
  };

  std::cout << std::left << std::setw(14) << "method" << std::setw(12)
            << "pretrained" << std::setw(4) << "n" << std::setw(20) << "acc"
            << std::setw(20) << "macro_f1" << std::setw(20) << "kappa_w"
            << "silhouette\n";
  std::ostringstream csv;
  csv << "method,pretrained,n,acc_mean,acc_std,f1_mean,f1_std,kappa_mean,"
         "kappa_std,silhouette_mean,silhouette_std\n";
  csv.precision(17);
  for (const auto& [key, summary] : grouped) {
    std::cout << std::left << std::setw(14) << key.first << std::setw(12)
              << key.second << std::setw(4) << summary.acc.size()
              << std::setw(20) << cell(summary.acc) << std::setw(20)
              << cell(summary.f1) << std::setw(20) << cell(summary.kappa)
              << (summary.silhouette.empty() ? "-" : cell(summary.silhouette))
              << '\n';
    csv << key.first << ',' << key.second << ',' << summary.acc.size() << ','
        << mean_of(summary.acc) << ',' << std_of(summary.acc) << ','
        << mean_of(summary.f1) << ',' << std_of(summary.f1) << ','
        << mean_of(summary.kappa) << ',' << std_of(summary.kappa) << ','
        << mean_of(summary.silhouette) << ',' << std_of(summary.silhouette)
        << '\n';
  }
  if (csv_path) {
    fs::path path(*csv_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << "# engine: " << kEngineVersion << '\n';
    for (const auto& report : report_paths) out << "# input: " << report << '\n';
    out << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentum-contrast knowledge-distillation training engine"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);

  CommonFlags pretrain_flags, distill_flags, finetune_flags, eval_flags,
      gradcheck_flags;
  bool pretrain_export = false, distill_export = false, finetune_export = false;
  std::string teacher_path;
  std::optional<std::string> init_path;
  std::string eval_checkpoint, eval_domain = "target", eval_split = "test",
              eval_tag = "eval";
  std::optional<std::string> embeddings_path, correlations_path,
      eval_teacher_path, report_path, compare_csv;
  std::size_t gradcheck_seeds = 20;
  bool inject_error = false;
  std::vector<std::string> compare_reports;

  CLI::App* pretrain = app.add_subcommand(
      "pretrain", "train a teacher on synthetic source data");
  add_common(pretrain, pretrain_flags);
  pretrain->add_flag("--export-data", pretrain_export,
                     "write the generated splits as CSV");

  CLI::App* distill = app.add_subcommand(
      "distill", "run the full distillation objective against a teacher");
  add_common(distill, distill_flags);
  distill->add_option("--teacher", teacher_path, "teacher checkpoint")
      ->required();
  distill->add_flag("--export-data", distill_export,
                    "write the generated splits as CSV");

  CLI::App* finetune = app.add_subcommand(
      "finetune", "cross-entropy baseline, optionally from teacher weights");
  add_common(finetune, finetune_flags);
  finetune->add_option("--init", init_path,
                       "teacher checkpoint to initialize from");
  finetune->add_flag("--export-data", finetune_export,
                     "write the generated splits as CSV");

  CLI::App* eval = app.add_subcommand(
      "eval", "evaluate a checkpoint with the deployable encoder+classifier");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")
      ->required();
  eval->add_option("--domain", eval_domain, "source|target (default target)");
  eval->add_option("--split", eval_split, "train|val|test (default test)");
  eval->add_option("--tag", eval_tag, "tag recorded in the report");
  eval->add_option("--export-embeddings", embeddings_path,
                   "write encoder embeddings as CSV");
  eval->add_option("--export-correlations", correlations_path,
                   "write class-sorted Pearson correlation blocks as CSV");
  eval->add_option("--teacher", eval_teacher_path,
                   "second checkpoint for cross-model correlation blocks");
  eval->add_option("--report", report_path, "also write the report to a file");

  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of the full objective");
  add_common(gradcheck_cmd, gradcheck_flags);
  gradcheck_cmd->add_option("--seeds", gradcheck_seeds,
                            "number of random seeds (default 20)");
  gradcheck_cmd
      ->add_flag("--inject-grad-error", inject_error,
                 "corrupt one gradient to exercise the failure path")
      ->group("");  // hidden test hook

  CLI::App* compare = app.add_subcommand(
      "compare", "tabulate completed run reports, mean +/- std per tag");
  compare->add_option("reports", compare_reports, "report files")
      ->expected(-1);
  compare->add_option("--csv", compare_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
    if (pretrain->parsed()) return cmd_pretrain(pretrain_flags, pretrain_export);
    if (distill->parsed()) {
      return cmd_distill(distill_flags, teacher_path, distill_export);
    }
    if (finetune->parsed()) {
      return cmd_finetune(finetune_flags, init_path, finetune_export);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_flags, eval_checkpoint, eval_domain, eval_split,
                      embeddings_path, correlations_path, eval_teacher_path,
                      report_path, eval_tag);
    }
    if (gradcheck_cmd->parsed()) {
      return cmd_gradcheck(gradcheck_flags, gradcheck_seeds, inject_error);
    }
    if (compare->parsed()) return cmd_compare(compare_reports, compare_csv);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
