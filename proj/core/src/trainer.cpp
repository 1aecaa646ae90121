#include "moma/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moma/ops.hpp"

namespace moma {

namespace {

ParamMap collect_trainable(const ModelStack& stack, const std::string& prefix) {
  ParamMap out;
  for (const auto& [name, tensor] : stack.params()) {
    if (tensor.requires_grad()) out[prefix + name] = tensor;
  }
  return out;
}

void clear_grads(ParamMap& params) {
  for (auto& [name, tensor] : params) tensor.clear_grad();
}

// Copies checkpoint values into the stack; shapes must agree.
void load_params(ModelStack& stack, const Checkpoint& checkpoint,
                 const std::string& prefix) {
  for (auto& [name, tensor] : stack.params()) {
    const Tensor& stored = checkpoint.get(prefix + name);
    if (stored.shape() != tensor.shape()) {
      throw SchemaError("checkpoint: tensor '" + prefix + name + "' has shape " +
                        shape_to_string(stored.shape()) + ", expected " +
                        shape_to_string(tensor.shape()));
    }
    auto src = stored.values();
    auto dst = tensor.values_mut();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

// Softened-KL diagnostic over the shared class prefix; plain arithmetic,
// no tape. Used to report the kl column when gamma gates it out of the
// objective (the class counts may then differ between the two heads).
double kd_kl_value(const Tensor& teacher_logits, const Tensor& student_logits,
                   double temperature) {
  const std::size_t m = teacher_logits.rows();
  const std::size_t c = std::min(teacher_logits.cols(), student_logits.cols());
  auto softened_log = [&](const Tensor& logits, std::size_t row,
                          std::vector<double>& out) {
    auto v = logits.values().subspan(row * logits.cols(), logits.cols());
    double mx = v[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, v[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      sum += std::exp((v[j] - mx) / temperature);
    }
    const double lse = mx / temperature + std::log(sum);
    out.resize(c);
    for (std::size_t j = 0; j < c; ++j) out[j] = v[j] / temperature - lse;
  };
  double total = 0.0;
  std::vector<double> log_p, log_q;
  for (std::size_t i = 0; i < m; ++i) {
    softened_log(teacher_logits, i, log_p);
    softened_log(student_logits, i, log_q);
    for (std::size_t j = 0; j < c; ++j) {
      total += std::exp(log_p[j]) * (log_p[j] - log_q[j]);
    }
  }
  return temperature * temperature * total / static_cast<double>(m);
}

Tensor maybe_augment(const Tensor& x, const RunConfig& config,
                     std::uint64_t step) {
  if (config.augment == 0.0) return x;
  Rng rng(config.seed, "augment", step);
  return augment(x, config.augment, rng);
}

LossBreakdown supervised_step(SupervisedRun& run, const Tensor& x,
                              std::span<const int> labels) {
  Tape tape;
  auto [embed, logits] = run.stack.encode(tape, x);
  Tensor ce = cross_entropy(tape, logits, labels);
  clear_grads(run.trainable);
  tape.backward(ce);
  run.adam.step(run.trainable);
  LossBreakdown breakdown;
  breakdown.ce = ce.item();
  breakdown.total = breakdown.ce;
  breakdown.batch_size = x.rows();
  ++run.step;
  run.loss_log.push_back(breakdown);
  return breakdown;
}

void supervised_train(SupervisedRun& run, const Dataset& train) {
  for (std::uint64_t epoch = 0; epoch < run.config.epochs; ++epoch) {
    const auto epoch_batches =
        batches(train, run.config.batch_size,
                hash64("shuffle") ^ run.config.seed ^ (epoch * 0x9e37ULL), true);
    for (const auto& batch : epoch_batches) {
      supervised_step(run, maybe_augment(batch.x, run.config, run.step),
                      batch.labels);
    }
  }
}

std::vector<std::uint64_t> counters_of(const DistillRun& run) {
  return {run.step};
}

}  // namespace

InferenceModel InferenceModel::from_stack(const ModelStack& stack) {
  InferenceModel model;
  model.config = stack.config();
  model.encoder = stack.encoder();
  model.classifier = stack.classifier();
  return model;
}

InferenceModel InferenceModel::from_checkpoint(const Checkpoint& checkpoint) {
  const RunConfig config = RunConfig::parse_text(checkpoint.config_text);
  const Tensor& cls_w = checkpoint.get("param.cls.w");
  if (cls_w.rank() != 2) {
    throw SchemaError("checkpoint: param.cls.w must be a matrix");
  }
  const std::size_t num_classes = cls_w.cols();
  Rng rng(config.seed, "inference-scaffold");
  ModelStack scaffold =
      ModelStack::build(config.model_config(num_classes), rng, {});
  // Only the deployable groups are read; a pruned checkpoint is enough.
  for (auto& [name, tensor] : scaffold.params()) {
    if (name.rfind("enc.", 0) != 0 && name.rfind("cls.", 0) != 0) continue;
    const Tensor& stored = checkpoint.get("param." + name);
    if (stored.shape() != tensor.shape()) {
      throw SchemaError("checkpoint: tensor 'param." + name + "' has shape " +
                        shape_to_string(stored.shape()) + ", expected " +
                        shape_to_string(tensor.shape()));
    }
    auto src = stored.values();
    auto dst = tensor.values_mut();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return from_stack(scaffold);
}

std::pair<Tensor, std::vector<int>> InferenceModel::predict(
    const Tensor& x) const {
  Tape tape;
  Tensor embed = encoder.forward(tape, x);
  Tensor logits = classifier.forward(tape, embed);
  const std::size_t m = logits.rows(), c = logits.cols();
  std::vector<int> predictions(m);
  auto lv = logits.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (lv[i * c + j] > lv[i * c + best]) best = j;
    }
    predictions[i] = static_cast<int>(best);
  }
  return {embed, std::move(predictions)};
}

Evaluation evaluate_model(const InferenceModel& model, const Dataset& data,
                          const RunConfig& config) {
  Evaluation eval;
  auto [embed, predictions] = model.predict(data.inputs);
  eval.embeddings = embed;
  eval.predictions = predictions;

  const std::size_t classes = model.config.num_classes;
  ConfusionMatrix cm =
      ConfusionMatrix::from_predictions(data.labels, predictions, classes);
  eval.report.accuracy = accuracy(cm);
  eval.report.macro_f1 = macro_f1(cm);
  eval.report.kappa_quadratic =
      classes >= 2 ? kappa_quadratic(cm) : 1.0;
  eval.report.confusion.assign(classes, std::vector<long long>(classes, 0));
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      eval.report.confusion[i][j] = cm.at(i, j);
    }
  }

  std::map<int, std::size_t> distinct;
  for (int label : data.labels) ++distinct[label];
  if (distinct.size() >= 2) {
    eval.report.silhouette = silhouette(embed, data.labels);
  }

  if (!config.aggc_roles.empty() && config.aggc_roles.size() == classes) {
    const auto f1 = per_class_f1(cm);
    std::map<std::string, double> by_role;
    for (std::size_t cidx = 0; cidx < classes; ++cidx) {
      by_role[config.aggc_roles[cidx]] = f1[cidx];
    }
    eval.report.weighted_f1 = weighted_f1_aggc(by_role);
  }

  if (!data.groups.empty()) {
    const auto vote = majority_vote(predictions, data.groups);
    const auto truth_vote = majority_vote(data.labels, data.groups);
    std::size_t correct = 0;
    for (const auto& [group, cls] : vote) {
      if (truth_vote.at(group) == cls) ++correct;
    }
    eval.report.group_accuracy =
        static_cast<double>(correct) / static_cast<double>(vote.size());
  }

  eval.report.seed = config.seed;
  return eval;
}

SupervisedRun pretrain_teacher(const RunConfig& config,
                               const SplitSet& source) {
  Rng rng(config.seed, "teacher-init");
  TrainableGroups groups;
  groups.projection = false;
  groups.attention = false;
  SupervisedRun run{config,
                    ModelStack::build(config.model_config(config.source_classes),
                                      rng, groups),
                    AdamOptimizer(config.adam_config()),
                    {},
                    0,
                    {}};
  run.trainable = collect_trainable(run.stack, "");
  supervised_train(run, source.train);
  return run;
}

SupervisedRun finetune_baseline(const RunConfig& config, const SplitSet& target,
                                BaselineInit init,
                                const Checkpoint* teacher_checkpoint) {
  Rng rng(config.seed, "student-init");
  TrainableGroups groups;
  groups.projection = false;
  groups.attention = false;
  SupervisedRun run{config,
                    ModelStack::build(config.model_config(config.target_classes),
                                      rng, groups),
                    AdamOptimizer(config.adam_config()),
                    {},
                    0,
                    {}};
  if (init == BaselineInit::teacher) {
    if (!teacher_checkpoint) {
      throw ConfigError("finetune: init=teacher requires a teacher checkpoint");
    }
    for (auto& [name, tensor] : run.stack.params()) {
      if (name.rfind("enc.", 0) != 0 && name.rfind("cls.", 0) != 0) continue;
      if (!teacher_checkpoint->has("param." + name)) {
        throw SchemaError("finetune: teacher checkpoint is missing 'param." +
                          name + "'");
      }
      const Tensor& stored = teacher_checkpoint->get("param." + name);
      if (stored.shape() != tensor.shape()) {
        if (name.rfind("cls.", 0) == 0) continue;  // class counts differ
        throw SchemaError("finetune: teacher tensor 'param." + name +
                          "' has shape " + shape_to_string(stored.shape()) +
                          ", expected " + shape_to_string(tensor.shape()));
      }
      auto src = stored.values();
      auto dst = tensor.values_mut();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  run.trainable = collect_trainable(run.stack, "");
  supervised_train(run, target.train);
  return run;
}

Checkpoint stack_checkpoint(const ModelStack& stack, const RunConfig& config) {
  Checkpoint checkpoint;
  checkpoint.config_text = config.canonical();
  for (const auto& [name, tensor] : stack.params()) {
    checkpoint.put("param." + name, tensor.detached());
  }
  return checkpoint;
}

Checkpoint inference_checkpoint(const ModelStack& stack,
                                const RunConfig& config) {
  Checkpoint checkpoint;
  checkpoint.config_text = config.canonical();
  for (const auto& [name, tensor] : stack.params()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("cls.", 0) == 0) {
      checkpoint.put("param." + name, tensor.detached());
    }
  }
  return checkpoint;
}

DistillRun::DistillRun(RunConfig config_in, ModelStack student_in,
                       MomentumTeacher teacher_in)
    : config(std::move(config_in)),
      gamma(config.resolved_gamma()),
      student(std::move(student_in)),
      teacher(std::move(teacher_in)),
      queue(config.queue_size, config.proj_dim, config.normalize_embeddings),
      pair(MomentumPair::for_stacks(student, teacher.stack, config.alpha)),
      adam(config.adam_config()),
      rng(config.seed, "run") {
  if (gamma == 1 && config.source_classes != config.target_classes) {
    throw ConfigError("distill: gamma=1 needs equal source and target class "
                      "counts (logits distillation across tasks is "
                      "undefined)");
  }
  trainable = collect_trainable(student, "student.");
  for (auto& [name, tensor] : collect_trainable(teacher.stack, "teacher.")) {
    trainable[name] = tensor;
  }
}

DistillRun make_distill_run(const RunConfig& config,
                            const Checkpoint& teacher_checkpoint) {
  Rng student_rng(config.seed, "student-init");
  ModelStack student = ModelStack::build(
      config.model_config(config.target_classes), student_rng, {});

  const RunConfig teacher_config =
      RunConfig::parse_text(teacher_checkpoint.config_text);
  Rng teacher_rng(config.seed, "momentum-teacher-scaffold");
  TrainableGroups teacher_groups;
  teacher_groups.encoder = false;
  teacher_groups.projection = false;
  teacher_groups.classifier = false;
  MomentumTeacher teacher{
      ModelStack::build(teacher_config.model_config(config.source_classes),
                        teacher_rng, teacher_groups),
      false};
  if (teacher.stack.config().proj_dim != config.proj_dim ||
      teacher.stack.config().input_dim != config.input_dim) {
    throw SchemaError("distill: teacher checkpoint dimensions do not match "
                      "the run config");
  }
  load_params(teacher.stack, teacher_checkpoint, "param.");
  teacher.initialized = true;

  if (config.student_init == "teacher") {
    for (auto& [name, tensor] : student.params()) {
      if (name.rfind("enc.", 0) != 0 && name.rfind("cls.", 0) != 0) continue;
      const Tensor& stored = teacher_checkpoint.get("param." + name);
      if (stored.shape() != tensor.shape()) {
        if (name.rfind("cls.", 0) == 0) continue;  // class counts differ
        throw SchemaError("distill: teacher tensor 'param." + name +
                          "' has shape " + shape_to_string(stored.shape()) +
                          ", expected " + shape_to_string(tensor.shape()));
      }
      auto src = stored.values();
      auto dst = tensor.values_mut();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return DistillRun(config, std::move(student), std::move(teacher));
}

namespace {

template <typename E>
[[noreturn]] void rethrow_with_step(const E& error, std::uint64_t step) {
  throw E("step " + std::to_string(step) + ": " + error.what());
}

LossBreakdown distill_train_step_impl(DistillRun& run, const Tensor& x,
                                      std::span<const int> labels) {
  const bool warmup = run.queue.fill() == 0;
  Tape tape;

  // (1) student forward
  auto [embed, logits] = run.student.encode(tape, x);
  Tensor z_student = run.student.attend(tape, run.student.project(tape, embed));
  if (run.config.normalize_embeddings) {
    z_student = l2_normalize_rows(tape, z_student);
  }

  // (2) teacher forward, detached except for its attention head
  TeacherForward tf = teacher_forward_pipeline(
      run.teacher, tape, x, run.config.normalize_embeddings);

  // (3) the composite objective
  Tensor ce = cross_entropy(tape, logits, labels);
  Tensor nce = warmup ? Tensor::scalar(0.0)
                      : info_nce(tape, z_student, tf.z, run.queue,
                                 run.config.tau);
  Tensor kl = run.gamma == 1
                  ? kd_kl(tape, tf.logits, logits, run.config.kd_temperature)
                  : Tensor::scalar(kd_kl_value(tf.logits, logits,
                                               run.config.kd_temperature));
  TotalLoss total = total_loss(tape, ce, nce, kl, run.gamma, x.rows(),
                               run.config.loss_weights());

  // (4) backward
  clear_grads(run.trainable);
  tape.backward(total.value);

  // (5) optimizer step. On the single cold-start step the contrastive term
  // is absent, so only the cross-entropy-reachable parameters carry
  // gradients; the update is restricted to them for that step only.
  if (warmup) {
    ParamMap reachable;
    for (auto& [name, tensor] : run.trainable) {
      if (tensor.has_grad()) reachable[name] = tensor;
    }
    run.adam.step(reachable);
  } else {
    run.adam.step(run.trainable);
  }

  // (6) momentum update of the teacher encoder and projection
  momentum_update(run.pair, run.student.params(), run.teacher.stack.params());

  // (7) enqueue the already-computed, detached teacher batch
  run.queue.enqueue_dequeue(tf.z.detached());

  ++run.step;
  run.loss_log.push_back(total.breakdown);
  return total.breakdown;
}

}  // namespace

LossBreakdown distill_train_step(DistillRun& run, const Tensor& x,
                                 std::span<const int> labels) {
  try {
    return distill_train_step_impl(run, x, labels);
  } catch (const DimensionError& e) {
    rethrow_with_step(e, run.step);
  } catch (const InputError& e) {
    rethrow_with_step(e, run.step);
  } catch (const ConfigError& e) {
    rethrow_with_step(e, run.step);
  } catch (const ContractError& e) {
    rethrow_with_step(e, run.step);
  } catch (const StateError& e) {
    rethrow_with_step(e, run.step);
  }
}

std::uint64_t steps_per_epoch(const RunConfig& config, const Dataset& train) {
  return train.size() / config.batch_size;
}

void distill_train_steps(DistillRun& run, const Dataset& train,
                         std::uint64_t steps) {
  const std::uint64_t per_epoch = steps_per_epoch(run.config, train);
  if (per_epoch == 0) {
    throw ConfigError("distill: batch_size exceeds the training split");
  }
  std::uint64_t cached_epoch = std::numeric_limits<std::uint64_t>::max();
  std::vector<Batch> epoch_batches;
  for (std::uint64_t i = 0; i < steps; ++i) {
    const std::uint64_t epoch = run.step / per_epoch;
    const std::uint64_t offset = run.step % per_epoch;
    if (epoch != cached_epoch) {
      epoch_batches =
          batches(train, run.config.batch_size,
                  hash64("shuffle") ^ run.config.seed ^ (epoch * 0x9e37ULL),
                  true);
      cached_epoch = epoch;
    }
    const Batch& batch = epoch_batches[offset];
    distill_train_step(run, maybe_augment(batch.x, run.config, run.step),
                       batch.labels);
  }
}

void distill_train(DistillRun& run, const Dataset& train) {
  const std::uint64_t target_steps =
      run.config.epochs * steps_per_epoch(run.config, train);
  if (run.step < target_steps) {
    distill_train_steps(run, train, target_steps - run.step);
  }
}

Checkpoint snapshot_distill_run(const DistillRun& run,
                                std::optional<bool> include_queue) {
  Checkpoint checkpoint;
  checkpoint.config_text = run.config.canonical();
  for (const auto& [name, tensor] : run.student.params()) {
    checkpoint.put("student." + name, tensor.detached());
  }
  for (const auto& [name, tensor] : run.teacher.stack.params()) {
    checkpoint.put("teacher." + name, tensor.detached());
  }
  for (const auto& [name, buffer] : run.adam.m()) {
    checkpoint.put("adam.m." + name, Tensor::from_values({buffer.size()}, buffer));
  }
  for (const auto& [name, buffer] : run.adam.v()) {
    checkpoint.put("adam.v." + name, Tensor::from_values({buffer.size()}, buffer));
  }
  checkpoint.put("adam.t", pack_u64({run.adam.t()}));
  const auto state = run.rng.state();
  checkpoint.put("rng.state",
                 pack_u64({state[0], state[1], state[2], state[3]}));
  checkpoint.put("run.counters", pack_u64(counters_of(run)));
  const bool with_queue = include_queue.value_or(run.config.checkpoint_queue);
  if (with_queue) {
    checkpoint.put("queue.data",
                   Tensor::from_values({run.queue.capacity(), run.queue.dim()},
                                       run.queue.storage()));
    checkpoint.put("queue.meta",
                   pack_u64({run.queue.cursor(), run.queue.fill()}));
  }
  return checkpoint;
}

DistillRun restore_distill_run(const Checkpoint& checkpoint) {
  const RunConfig config = RunConfig::parse_text(checkpoint.config_text);

  Rng student_rng(config.seed, "student-init");
  ModelStack student = ModelStack::build(
      config.model_config(config.target_classes), student_rng, {});

  Rng teacher_rng(config.seed, "momentum-teacher-scaffold");
  TrainableGroups teacher_groups;
  teacher_groups.encoder = false;
  teacher_groups.projection = false;
  teacher_groups.classifier = false;
  MomentumTeacher teacher{
      ModelStack::build(config.model_config(config.source_classes),
                        teacher_rng, teacher_groups),
      false};

  DistillRun run(config, std::move(student), std::move(teacher));
  load_params(run.student, checkpoint, "student.");
  load_params(run.teacher.stack, checkpoint, "teacher.");
  run.teacher.initialized = true;

  std::map<std::string, std::vector<double>> m, v;
  for (const auto& [name, tensor] : checkpoint.with_prefix("adam.m.")) {
    m[name] = {tensor.values().begin(), tensor.values().end()};
  }
  for (const auto& [name, tensor] : checkpoint.with_prefix("adam.v.")) {
    v[name] = {tensor.values().begin(), tensor.values().end()};
  }
  run.adam.restore(std::move(m), std::move(v),
                   unpack_u64(checkpoint.get("adam.t"))[0]);

  const auto rng_words = unpack_u64(checkpoint.get("rng.state"));
  if (rng_words.size() != 4) {
    throw SchemaError("checkpoint: rng.state must hold 4 words");
  }
  run.rng.set_state({rng_words[0], rng_words[1], rng_words[2], rng_words[3]});

  run.step = unpack_u64(checkpoint.get("run.counters"))[0];

  if (checkpoint.has("queue.data")) {
    const Tensor& data = checkpoint.get("queue.data");
    const auto meta = unpack_u64(checkpoint.get("queue.meta"));
    run.queue.restore({data.values().begin(), data.values().end()},
                      static_cast<std::size_t>(meta[0]),
                      static_cast<std::size_t>(meta[1]));
  }
  return run;
}

}  // namespace moma
