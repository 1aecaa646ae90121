#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moma/checkpoint.hpp"
#include "moma/config.hpp"
#include "moma/distill.hpp"
#include "moma/losses.hpp"
#include "moma/metrics.hpp"
#include "moma/nets.hpp"
#include "moma/optim.hpp"
#include "moma/synthdata.hpp"

namespace moma {

// Encoder + classifier only: the deployable part of a trained student.
struct InferenceModel {
  ModelConfig config;
  MlpEncoder encoder;
  Classifier classifier;

  static InferenceModel from_stack(const ModelStack& stack);
  // Rebuilds encoder + classifier from the checkpoint's embedded config;
  // the class count is read off the stored classifier weight. Works for
  // both full and pruned checkpoints.
  static InferenceModel from_checkpoint(const Checkpoint& checkpoint);

  // embed = f(x), prediction = argmax g(embed); ties pick the lowest class.
  std::pair<Tensor, std::vector<int>> predict(const Tensor& x) const;
};

struct Evaluation {
  MetricsReport report;
  Tensor embeddings;
  std::vector<int> predictions;
};

Evaluation evaluate_model(const InferenceModel& model, const Dataset& data,
                          const RunConfig& config);

// ---------------------------------------------------------------------------
// Supervised training (teacher pretraining and the fine-tuning baselines).
// ---------------------------------------------------------------------------

struct SupervisedRun {
  RunConfig config;
  ModelStack stack;
  AdamOptimizer adam;
  ParamMap trainable;  // encoder + classifier
  std::uint64_t step = 0;
  std::vector<LossBreakdown> loss_log;
};

// Cross-entropy pretraining of a full stack on the source task. The
// projection and attention parameters stay at their initialization (no loss
// reaches them) but are stored in the checkpoint so a distillation run can
// adopt the stack wholesale.
SupervisedRun pretrain_teacher(const RunConfig& config, const SplitSet& source);

enum class BaselineInit { none, teacher };

// Cross-entropy fine-tuning of a student on the target task, optionally
// starting from the teacher checkpoint (encoder always, classifier when the
// class counts agree).
SupervisedRun finetune_baseline(const RunConfig& config, const SplitSet& target,
                                BaselineInit init,
                                const Checkpoint* teacher_checkpoint);

// Model-parameter checkpoint of a supervised run ("param." entries).
Checkpoint stack_checkpoint(const ModelStack& stack, const RunConfig& config);
// Pruned deployment checkpoint: encoder and classifier entries only.
Checkpoint inference_checkpoint(const ModelStack& stack,
                                const RunConfig& config);

// ---------------------------------------------------------------------------
// Distillation run.
// ---------------------------------------------------------------------------

struct DistillRun {
  RunConfig config;
  int gamma = 0;
  ModelStack student;
  MomentumTeacher teacher;
  NegativeQueue queue;
  MomentumPair pair;
  AdamOptimizer adam;
  // "student.*" plus "teacher.att.*"; exactly the gradient-trained set.
  ParamMap trainable;
  Rng rng;
  std::uint64_t step = 0;
  std::vector<LossBreakdown> loss_log;

  DistillRun(RunConfig config_in, ModelStack student_in,
             MomentumTeacher teacher_in);
};

// Builds student and momentum teacher. The teacher stack adopts the
// pretrained checkpoint wholesale; the student takes the pretrained encoder
// (and classifier, when class counts agree) when student_init=teacher.
DistillRun make_distill_run(const RunConfig& config,
                            const Checkpoint& teacher_checkpoint);

// One full step: student forward, detached teacher forward, Eq-style
// composite loss, backward, Adam on the learned set, momentum update of
// (f, p), then enqueue of the detached teacher batch.
LossBreakdown distill_train_step(DistillRun& run, const Tensor& x,
                                 std::span<const int> labels);

// Advances `steps` training steps, scheduling batches per epoch from the
// run seed; the final short batch of an epoch is dropped.
void distill_train_steps(DistillRun& run, const Dataset& train,
                         std::uint64_t steps);
// Runs the configured number of epochs (from wherever the run currently is).
void distill_train(DistillRun& run, const Dataset& train);

std::uint64_t steps_per_epoch(const RunConfig& config, const Dataset& train);

// Full run state ("student.*", "teacher.*", optimizer, RNG, counters and --
// when config.checkpoint_queue or include_queue say so -- queue contents).
Checkpoint snapshot_distill_run(const DistillRun& run,
                                std::optional<bool> include_queue = {});
DistillRun restore_distill_run(const Checkpoint& checkpoint);

}  // namespace moma
