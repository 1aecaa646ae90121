#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "moma/gradcheck.hpp"
#include "moma/trainer.hpp"
#include "support.hpp"

using namespace moma;

namespace {

RunConfig desk_config() {
  RunConfig config;
  config.regime = TaskKind::same;
  config.input_dim = 6;
  config.source_classes = 3;
  config.target_classes = 3;
  config.center_scale = 3.0;
  config.cluster_spread = 1.0;
  config.shift = 0.5;
  config.target_train = 32;
  config.target_val = 16;
  config.target_test = 48;
  config.source_ratio = 4;
  config.embed_dim = 8;
  config.proj_dim = 8;
  config.heads = 4;
  config.encoder_hidden = {8};
  config.queue_size = 16;
  config.batch_size = 8;
  config.epochs = 2;
  config.lr = 1e-3;
  config.seed = 11;
  config.validate();
  return config;
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] != bv[i]) return false;
  }
  return true;
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "moma_trainer_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("adam: zero gradient is a fixed point") {
  AdamOptimizer adam(AdamConfig{0.1, 0.9, 0.9999, 1e-8});
  Tensor param = Tensor::matrix(1, 2, {0.5, -0.5}, true);
  param.accumulate_grad(std::vector<double>{0.0, 0.0});
  ParamMap params{{"p", param}};
  adam.step(params);
  CHECK(param.values()[0] == 0.5);
  CHECK(param.values()[1] == -0.5);
}

TEST_CASE("adam single step matches the straight-line script") {
  // Script: m=(1-b1)g; v=(1-b2)g^2; mh=m/(1-b1); vh=v/(1-b2);
  //         w -= lr*mh/(sqrt(vh)+eps)  with w=0, g=1, lr=0.1.
  const double lr = 0.1, b1 = 0.9, b2 = 0.9999, eps = 1e-8;
  const double m = (1 - b1) * 1.0;
  const double v = (1 - b2) * 1.0;
  const double expect = 0.0 - lr * (m / (1 - b1)) /
                                  (std::sqrt(v / (1 - b2)) + eps);

  AdamOptimizer adam(AdamConfig{lr, b1, b2, eps});
  Tensor param = Tensor::scalar(0.0, true);
  param.accumulate_grad(std::vector<double>{1.0});
  ParamMap params{{"p", param}};
  adam.step(params);
  CHECK(std::abs(param.values()[0] - expect) < 1e-12);
  CHECK(adam.t() == 1);
}

TEST_CASE("adam names a parameter with a missing gradient") {
  AdamOptimizer adam(AdamConfig{});
  Tensor param = Tensor::scalar(0.0, true);
  ParamMap params{{"proj.0.w", param}};
  CHECK_THROWS_WITH_AS(adam.step(params),
                       "adam: no gradient for trainable parameter 'proj.0.w'",
                       ContractError);
}

TEST_CASE("distill runs are deterministic across identical replays") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  SupervisedRun teacher_run = pretrain_teacher(config, task.source);
  Checkpoint teacher = stack_checkpoint(teacher_run.stack, config);

  auto losses_of = [&]() {
    DistillRun run = make_distill_run(config, teacher);
    distill_train_steps(run, task.target.train, 12);
    std::vector<double> out;
    for (const auto& row : run.loss_log) out.push_back(row.total);
    return out;
  };
  const auto a = losses_of();
  const auto b = losses_of();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("frozen dynamics under lr=0 and alpha=1") {
  RunConfig config = desk_config();
  config.lr = 0.0;
  config.alpha = 1.0;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  DistillRun run = make_distill_run(config, teacher);
  const auto student_before = run.student.param("enc.0.w").clone();
  const auto teacher_before = run.teacher.stack.param("proj.0.w").clone();

  distill_train_steps(run, task.target.train, 8);
  CHECK(same_values(student_before, run.student.param("enc.0.w")));
  CHECK(same_values(teacher_before, run.teacher.stack.param("proj.0.w")));

  // Losses repeat exactly once the queue has cycled through the epoch.
  const auto& log = run.loss_log;
  const std::uint64_t per_epoch = steps_per_epoch(config, task.target.train);
  for (std::size_t i = per_epoch; i + per_epoch < log.size(); ++i) {
    CHECK(log[i].ce == log[i + per_epoch].ce);
  }
}

TEST_CASE("teacher (f,p) stay bit-identical to the checkpoint when alpha=1") {
  RunConfig config = desk_config();
  config.alpha = 1.0;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  DistillRun run = make_distill_run(config, teacher);
  distill_train_steps(run, task.target.train, 10);
  for (const auto& name : run.pair.names) {
    CHECK(same_values(run.teacher.stack.param(name),
                      teacher.get("param." + name)));
  }
}

TEST_CASE("teacher classifier is frozen; attention moves via the optimizer") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  DistillRun run = make_distill_run(config, teacher);
  const auto cls_before = run.teacher.stack.param("cls.w").clone();
  const auto att_before = run.teacher.stack.param("att.wo").clone();
  distill_train_steps(run, task.target.train, 8);
  CHECK(same_values(cls_before, run.teacher.stack.param("cls.w")));
  // h^T must have moved (it is gradient-trained through the NCE term).
  CHECK_FALSE(same_values(att_before, run.teacher.stack.param("att.wo")));

  // ...but only via the optimizer: replaying with lr=0 keeps it fixed even
  // though momentum updates still run.
  RunConfig frozen_config = config;
  frozen_config.lr = 0.0;
  DistillRun frozen = make_distill_run(frozen_config, teacher);
  const auto att_start = frozen.teacher.stack.param("att.wo").clone();
  distill_train_steps(frozen, task.target.train, 8);
  CHECK(same_values(att_start, frozen.teacher.stack.param("att.wo")));
}

TEST_CASE("gamma=0 run populates kl but excludes it from the total") {
  RunConfig config = desk_config();
  config.gamma_auto = false;
  config.gamma = 0;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  DistillRun run = make_distill_run(config, teacher);
  distill_train_steps(run, task.target.train, 6);
  for (std::size_t i = 0; i < run.loss_log.size(); ++i) {
    const auto& row = run.loss_log[i];
    CHECK(row.gamma == 0);
    CHECK(row.kl >= 0.0);
    // The student starts as a copy of the teacher, so the step-0 divergence
    // is exactly zero; it must turn positive as soon as the student moves.
    if (i > 0) CHECK(row.kl > 0.0);
    CHECK(row.total == row.ce + row.nce);
  }
}

TEST_CASE("full objective passes the finite-difference gradient check") {
  RunConfig config;
  config.input_dim = 5;
  config.source_classes = 3;
  config.target_classes = 3;
  config.embed_dim = 6;
  config.proj_dim = 8;
  config.proj_hidden = 6;
  config.heads = 4;
  config.encoder_hidden = {6};
  config.batch_size = 4;
  config.queue_size = 16;
  config.target_train = 8;

  GradCheckReport report = gradcheck(config, /*seed=*/3);
  CHECK(report.all_pass);
  // Every trainable block appears exactly once, including teacher attention.
  std::size_t teacher_att = 0;
  for (const auto& block : report.blocks) {
    if (block.name.rfind("teacher.att.", 0) == 0) ++teacher_att;
    CHECK(block.pass);
  }
  CHECK(teacher_att == 3 * config.heads + 1);
  CHECK_FALSE(report.frozen_blocks.empty());

  GradCheckOptions corrupt;
  corrupt.corrupt = true;
  CHECK_FALSE(gradcheck(config, 3, corrupt).all_pass);
}

TEST_CASE("queue never holds the current batch during its own loss") {
  // With batch == capacity every enqueue replaces the whole queue, so the
  // negatives visible at step k are exactly step k-1's teacher batch. The
  // saturated-similarity structure then gives a detectable signature:
  // identical inputs at three consecutive steps -> the step-2 loss sees the
  // step-1 rows (attention barely moves), close to the self-similarity
  // saturation value, not the warm-up value.
  RunConfig config = desk_config();
  config.queue_size = config.batch_size;
  config.lr = 0.0;
  config.alpha = 1.0;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);
  DistillRun run = make_distill_run(config, teacher);

  const auto batch_list = batches(task.target.train, config.batch_size,
                                  config.seed, false);
  const Batch& fixed = batch_list[0];

  auto step = [&]() {
    return distill_train_step(run, fixed.x, fixed.labels);
  };
  LossBreakdown first = step();
  CHECK(first.nce == 0.0);  // warm-up: no negatives yet
  LossBreakdown second = step();
  LossBreakdown third = step();
  // With frozen parameters the teacher rows repeat exactly, so steps 2 and 3
  // must agree; if the current batch leaked into its own denominator the
  // second step would already include it and differ from the third.
  CHECK(second.nce == doctest::Approx(third.nce).epsilon(1e-12));
  CHECK(second.nce > 0.0);
}

TEST_CASE("checkpoint roundtrip is byte-identical and guards corruption") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  const auto dir = temp_dir();
  const auto path_a = dir / "teacher_a.ckpt";
  const auto path_b = dir / "teacher_b.ckpt";
  save_checkpoint(teacher, path_a);
  Checkpoint loaded = load_checkpoint(path_a);
  save_checkpoint(loaded, path_b);

  std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
  CHECK(!bytes_a.empty());

  // Truncation never yields a half-built checkpoint.
  const auto truncated_path = dir / "truncated.ckpt";
  {
    std::ofstream out(truncated_path, std::ios::binary);
    out.write(bytes_a.data(), static_cast<std::streamsize>(bytes_a.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(truncated_path), FormatError);

  const auto garbage_path = dir / "garbage.ckpt";
  {
    std::ofstream out(garbage_path, std::ios::binary);
    out << "NOTMOMA garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(garbage_path), FormatError);
}

TEST_CASE("pretraining the same seed twice reproduces the checkpoint bytes") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  const auto dir = temp_dir();
  const auto path_a = dir / "re_a.ckpt";
  const auto path_b = dir / "re_b.ckpt";
  save_checkpoint(
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config),
      path_a);
  save_checkpoint(
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config),
      path_b);
  std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
}

TEST_CASE("resume reproduces the uninterrupted loss sequence") {
  RunConfig config = desk_config();
  config.epochs = 6;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);

  DistillRun baseline = make_distill_run(config, teacher);
  distill_train_steps(baseline, task.target.train, 5);
  Checkpoint snap = snapshot_distill_run(baseline, /*include_queue=*/true);
  distill_train_steps(baseline, task.target.train, 10);

  const auto dir = temp_dir();
  save_checkpoint(snap, dir / "resume.ckpt");
  DistillRun resumed = restore_distill_run(load_checkpoint(dir / "resume.ckpt"));
  CHECK(resumed.step == 5);
  distill_train_steps(resumed, task.target.train, 10);

  REQUIRE(resumed.loss_log.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(resumed.loss_log[i].total == baseline.loss_log[5 + i].total);
    CHECK(resumed.loss_log[i].ce == baseline.loss_log[5 + i].ce);
    CHECK(resumed.loss_log[i].nce == baseline.loss_log[5 + i].nce);
  }
}

TEST_CASE("pretraining reaches a separable source task") {
  RunConfig config = desk_config();
  config.cluster_spread = 0.4;  // margin: a linear probe is near-perfect
  config.epochs = 8;
  config.lr = 5e-3;
  GeneratedTask task = generate(config.task_spec());
  SupervisedRun run = pretrain_teacher(config, task.source);
  Evaluation eval = evaluate_model(InferenceModel::from_stack(run.stack),
                                   task.source.test, config);
  CHECK(eval.report.accuracy >= 0.95);
}

TEST_CASE("finetune with teacher init starts at the teacher's accuracy") {
  RunConfig config = desk_config();
  config.epochs = 4;
  GeneratedTask task = generate(config.task_spec());
  SupervisedRun teacher_run = pretrain_teacher(config, task.source);
  Checkpoint teacher = stack_checkpoint(teacher_run.stack, config);

  // Same task and distribution: evaluate the teacher itself on the target
  // test split, then a zero-epoch finetune from its weights.
  RunConfig no_train = config;
  no_train.epochs = 0;
  SupervisedRun student = finetune_baseline(no_train, task.target,
                                            BaselineInit::teacher, &teacher);
  Evaluation teacher_eval = evaluate_model(
      InferenceModel::from_stack(teacher_run.stack), task.target.test, config);
  Evaluation student_eval = evaluate_model(
      InferenceModel::from_stack(student.stack), task.target.test, config);
  CHECK(teacher_eval.report.accuracy == student_eval.report.accuracy);

  CHECK_THROWS_AS(
      finetune_baseline(no_train, task.target, BaselineInit::teacher, nullptr),
      ConfigError);
}

TEST_CASE("two seeds differ in parameters but both clear the floor") {
  RunConfig config = desk_config();
  config.cluster_spread = 0.4;
  config.epochs = 10;
  config.lr = 5e-3;
  GeneratedTask task = generate(config.task_spec());

  RunConfig other = config;
  other.seed = config.seed + 1;
  SupervisedRun a = finetune_baseline(config, task.target, BaselineInit::none,
                                      nullptr);
  // The second seed re-generates its own data too.
  GeneratedTask task_b = generate(other.task_spec());
  SupervisedRun b = finetune_baseline(other, task_b.target, BaselineInit::none,
                                      nullptr);
  CHECK_FALSE(same_values(a.stack.param("enc.0.w"), b.stack.param("enc.0.w")));
  CHECK(evaluate_model(InferenceModel::from_stack(a.stack), task.target.test,
                       config)
            .report.accuracy >= 0.95);
  CHECK(evaluate_model(InferenceModel::from_stack(b.stack), task_b.target.test,
                       other)
            .report.accuracy >= 0.95);
}

TEST_CASE("inference export holds exactly f^S and g^S and matches the stack") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);
  DistillRun run = make_distill_run(config, teacher);
  distill_train_steps(run, task.target.train, 8);

  Checkpoint pruned = inference_checkpoint(run.student, config);
  for (const auto& [name, tensor] : pruned.entries) {
    const bool deployable = name.rfind("param.enc.", 0) == 0 ||
                            name.rfind("param.cls.", 0) == 0;
    CHECK(deployable);
  }
  CHECK(pruned.entries.size() <
        stack_checkpoint(run.student, config).entries.size());

  const auto dir = temp_dir();
  save_checkpoint(pruned, dir / "inference.ckpt");
  InferenceModel deployed =
      InferenceModel::from_checkpoint(load_checkpoint(dir / "inference.ckpt"));
  auto [embed_full, pred_full] =
      InferenceModel::from_stack(run.student).predict(task.target.test.inputs);
  auto [embed_dep, pred_dep] = deployed.predict(task.target.test.inputs);
  REQUIRE(pred_full.size() == pred_dep.size());
  for (std::size_t i = 0; i < pred_full.size(); ++i) {
    CHECK(pred_full[i] == pred_dep[i]);
  }
  CHECK(same_values(embed_full, embed_dep));
}

TEST_CASE("train-split accuracy dominates held-out accuracy on average") {
  double train_sum = 0.0, test_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig config = desk_config();
    config.seed = seed;
    config.cluster_spread = 2.5;  // heavy class overlap: memorization shows
    config.target_train = 24;
    config.target_test = 64;
    config.batch_size = 8;
    config.epochs = 20;
    config.lr = 5e-3;
    GeneratedTask task = generate(config.task_spec());
    SupervisedRun run = finetune_baseline(config, task.target,
                                          BaselineInit::none, nullptr);
    InferenceModel model = InferenceModel::from_stack(run.stack);
    train_sum += evaluate_model(model, task.target.train, config).report.accuracy;
    test_sum += evaluate_model(model, task.target.test, config).report.accuracy;
  }
  CHECK(train_sum >= test_sum);
}

TEST_CASE("runs train with embedding normalization disabled") {
  RunConfig config = desk_config();
  config.normalize_embeddings = false;
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);
  DistillRun run = make_distill_run(config, teacher);
  CHECK_FALSE(run.queue.unit_norm_required());
  distill_train_steps(run, task.target.train, 6);
  for (const auto& row : run.loss_log) {
    CHECK(std::isfinite(row.total));
    CHECK(row.nce >= 0.0);
  }
}

TEST_CASE("group votes and challenge-weighted F1 reach the report") {
  RunConfig config = desk_config();
  config.regime = TaskKind::relevant;
  config.source_classes = 3;
  config.target_classes = 5;
  config.group_size = 4;
  config.aggc_roles = {"Stroma", "Normal", "G3", "G4", "G5"};
  config.cluster_spread = 0.5;
  config.epochs = 10;
  config.lr = 5e-3;
  config.validate();

  GeneratedTask task = generate(config.task_spec());
  SupervisedRun run =
      finetune_baseline(config, task.target, BaselineInit::none, nullptr);
  Evaluation eval = evaluate_model(InferenceModel::from_stack(run.stack),
                                   task.target.test, config);
  REQUIRE(eval.report.weighted_f1.has_value());
  CHECK(*eval.report.weighted_f1 >= 0.0);
  CHECK(*eval.report.weighted_f1 <= 1.0);
  REQUIRE(eval.report.group_accuracy.has_value());
  // Aggregated votes cannot do worse than chance on a near-separable task.
  CHECK(*eval.report.group_accuracy >= eval.report.accuracy - 0.05);

  // The per-role weighted sum agrees with a direct recomputation.
  ConfusionMatrix cm = ConfusionMatrix::from_predictions(
      task.target.test.labels, eval.predictions, 5);
  const auto f1 = per_class_f1(cm);
  const double expect = 0.125 * f1[0] + 0.125 * f1[1] + 0.25 * f1[2] +
                        0.25 * f1[3] + 0.25 * f1[4];
  CHECK(*eval.report.weighted_f1 == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("teacher checkpoints with mismatched dimensions are rejected") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  RunConfig other = config;
  other.embed_dim = 16;  // teacher trained at a different width
  GeneratedTask other_task = generate(other.task_spec());
  Checkpoint teacher = stack_checkpoint(
      pretrain_teacher(other, other_task.source).stack, other);
  CHECK_THROWS_AS(make_distill_run(config, teacher), SchemaError);
}

TEST_CASE("step errors carry the step index") {
  RunConfig config = desk_config();
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);
  DistillRun run = make_distill_run(config, teacher);
  distill_train_steps(run, task.target.train, 3);

  const auto batch = batches(task.target.train, config.batch_size,
                             config.seed, false)[0];
  std::vector<int> bad_labels(config.batch_size, 99);
  try {
    distill_train_step(run, batch.x, bad_labels);
    FAIL("expected an InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).rfind("step 3:", 0) == 0);
  }
}

TEST_CASE("adam is bit-deterministic over 100 identical steps") {
  auto run_adam = [] {
    Rng rng(17, "adam-det");
    Tensor param = Tensor::matrix(3, 3, testsupport::random_values(9, rng),
                                  true);
    AdamOptimizer adam(AdamConfig{});
    ParamMap params{{"p", param}};
    for (int step = 0; step < 100; ++step) {
      param.clear_grad();
      param.accumulate_grad(testsupport::random_values(9, rng));
      adam.step(params);
    }
    return std::vector<double>(param.values().begin(), param.values().end());
  };
  CHECK(run_adam() == run_adam());
}
