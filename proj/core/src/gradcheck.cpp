#include "moma/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "moma/losses.hpp"
#include "moma/ops.hpp"
#include "moma/trainer.hpp"

namespace moma {

namespace {

void require_tiny(std::size_t value, const char* what) {
  if (value > 8) {
    throw ConfigError("gradcheck: " + std::string(what) + " must be <= 8, got " +
                      std::to_string(value));
  }
}

// Central differences on a loss of size O(10) carry ~1e-10 of rounding
// noise at h = 1e-5, so gradient components below the floor are compared
// on an absolute scale; everything larger is held to the relative bound.
double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
  return std::abs(a - b) / denom;
}

}  // namespace

GradCheckReport gradcheck(const RunConfig& config, std::uint64_t seed,
                          const GradCheckOptions& options) {
  require_tiny(config.input_dim, "input_dim");
  require_tiny(config.embed_dim, "embed_dim");
  require_tiny(config.proj_dim, "proj_dim");
  require_tiny(config.proj_hidden ? config.proj_hidden : config.proj_dim,
               "proj_hidden");
  for (std::size_t h : config.encoder_hidden) {
    require_tiny(h, "encoder hidden width");
  }
  require_tiny(config.source_classes, "source_classes");
  require_tiny(config.target_classes, "target_classes");
  require_tiny(config.batch_size, "batch_size");
  if (config.source_classes != config.target_classes) {
    throw ConfigError("gradcheck: equal class counts are required so the "
                      "distillation term is part of the objective");
  }

  // Student and a stand-in "pretrained" teacher; random weights are as good
  // as trained ones for derivative checks.
  Rng student_rng(seed, "gc-student");
  ModelStack student = ModelStack::build(
      config.model_config(config.target_classes), student_rng, {});
  Rng teacher_rng(seed, "gc-teacher");
  TrainableGroups teacher_groups;
  teacher_groups.encoder = false;
  teacher_groups.projection = false;
  teacher_groups.classifier = false;
  MomentumTeacher teacher{
      ModelStack::build(config.model_config(config.source_classes),
                        teacher_rng, teacher_groups),
      true};

  const std::size_t batch = config.batch_size;
  Rng data_rng(seed, "gc-data");
  std::vector<double> xv(batch * config.input_dim);
  for (double& v : xv) v = data_rng.gaussian();
  Tensor x = Tensor::from_values({batch, config.input_dim}, std::move(xv));
  std::vector<int> labels(batch);
  for (int& label : labels) {
    label = static_cast<int>(data_rng.below(config.target_classes));
  }

  // Two batches of random unit rows give the contrastive term negatives.
  NegativeQueue queue(std::max<std::size_t>(config.queue_size, 2 * batch),
                      config.proj_dim, config.normalize_embeddings);
  for (int round = 0; round < 2; ++round) {
    std::vector<double> rows(batch * config.proj_dim);
    for (std::size_t i = 0; i < batch; ++i) {
      double norm2 = 0.0;
      for (std::size_t d = 0; d < config.proj_dim; ++d) {
        rows[i * config.proj_dim + d] = data_rng.gaussian();
        norm2 += rows[i * config.proj_dim + d] * rows[i * config.proj_dim + d];
      }
      const double norm = std::sqrt(norm2);
      for (std::size_t d = 0; d < config.proj_dim; ++d) {
        rows[i * config.proj_dim + d] /= norm;
      }
    }
    queue.enqueue_dequeue(
        Tensor::from_values({batch, config.proj_dim}, std::move(rows)));
  }

  auto forward = [&](Tape& tape) {
    auto [embed, logits] = student.encode(tape, x);
    Tensor z_student = student.attend(tape, student.project(tape, embed));
    if (config.normalize_embeddings) {
      z_student = l2_normalize_rows(tape, z_student);
    }
    TeacherForward tf =
        teacher_forward_pipeline(teacher, tape, x, config.normalize_embeddings);
    Tensor ce = cross_entropy(tape, logits, labels);
    Tensor nce = info_nce(tape, z_student, tf.z, queue, config.tau);
    Tensor kl = kd_kl(tape, tf.logits, logits, config.kd_temperature);
    return total_loss(tape, ce, nce, kl, 1, batch, config.loss_weights());
  };

  ParamMap trainable;
  for (const auto& [name, tensor] : student.params()) {
    trainable["student." + name] = tensor;
  }
  for (const auto& [name, tensor] : teacher.stack.params()) {
    if (tensor.requires_grad()) trainable["teacher." + name] = tensor;
  }

  for (auto& [name, tensor] : trainable) tensor.clear_grad();
  for (const auto& [name, tensor] : teacher.stack.params()) {
    Tensor(tensor).clear_grad();
  }
  {
    Tape tape;
    TotalLoss loss = forward(tape);
    tape.backward(loss.value);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  report.all_pass = true;

  for (const auto& [name, tensor] : teacher.stack.params()) {
    if (tensor.requires_grad()) continue;
    if (tensor.has_grad()) {
      // Would mean the detach contract broke; surface it as a failing block.
      report.blocks.push_back({"frozen teacher." + name, 1.0, tensor.numel(),
                               false});
      report.all_pass = false;
    } else {
      report.frozen_blocks.push_back("teacher." + name);
    }
  }

  bool corrupt_pending = options.corrupt;
  for (auto& [name, tensor] : trainable) {
    std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
    if (corrupt_pending) {
      analytic[0] += 1e-2;
      corrupt_pending = false;
    }
    GradCheckBlock block;
    block.name = name;
    block.elements = tensor.numel();
    auto w = tensor.values_mut();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + options.fd_step;
      Tape plus_tape;
      const double plus = forward(plus_tape).breakdown.total;
      w[i] = saved - options.fd_step;
      Tape minus_tape;
      const double minus = forward(minus_tape).breakdown.total;
      w[i] = saved;
      const double fd = (plus - minus) / (2.0 * options.fd_step);
      block.max_rel_err =
          std::max(block.max_rel_err, relative_error(analytic[i], fd));
    }
    block.pass = block.max_rel_err < options.tolerance;
    report.all_pass = report.all_pass && block.pass;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace moma
