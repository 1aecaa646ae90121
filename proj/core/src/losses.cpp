#include "moma/losses.hpp"

#include <array>
#include <cmath>

#include "moma/ops.hpp"

namespace moma {

Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels) {
  const std::size_t m = logits.rows();
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw InputError("cross_entropy: label " + std::to_string(labels[i]) +
                       " at index " + std::to_string(i) + " is outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  Tensor log_probs = log_softmax_rows(tape, logits);
  Tensor picked = gather_labels(tape, log_probs, labels);
  return scale(tape, sum_all(tape, picked), -1.0 / static_cast<double>(m));
}

Tensor kd_kl(Tape& tape, const Tensor& teacher_logits,
             const Tensor& student_logits, double temperature) {
  if (temperature <= 0.0) {
    throw ConfigError("kd_kl: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  if (teacher_logits.shape() != student_logits.shape()) {
    throw DimensionError("kd_kl: teacher logits " +
                         shape_to_string(teacher_logits.shape()) +
                         " vs student logits " +
                         shape_to_string(student_logits.shape()));
  }
  const std::size_t m = teacher_logits.rows();
  const std::size_t c = teacher_logits.cols();

  // Softened teacher distribution, computed off-tape: the teacher side is a
  // constant during backward.
  std::vector<double> probs(m * c);
  std::vector<double> log_probs(m * c);
  {
    auto tv = teacher_logits.values();
    for (std::size_t i = 0; i < m; ++i) {
      double mx = tv[i * c];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, tv[i * c + j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        sum += std::exp((tv[i * c + j] - mx) / temperature);
      }
      const double lse = mx / temperature + std::log(sum);
      for (std::size_t j = 0; j < c; ++j) {
        log_probs[i * c + j] = tv[i * c + j] / temperature - lse;
        probs[i * c + j] = std::exp(log_probs[i * c + j]);
      }
    }
  }
  Tensor p = Tensor::from_values({m, c}, std::move(probs));
  Tensor log_p = Tensor::from_values({m, c}, std::move(log_probs));

  Tensor student_log_q = log_softmax_rows(
      tape, scale(tape, student_logits, 1.0 / temperature));
  Tensor per_entry = mul(tape, p, sub(tape, log_p, student_log_q));
  return scale(tape, sum_all(tape, per_entry),
               temperature * temperature / static_cast<double>(m));
}

Tensor info_nce(Tape& tape, const Tensor& z_student, const Tensor& z_teacher,
                const NegativeQueue& queue, double tau) {
  if (tau <= 0.0) {
    throw ConfigError("info_nce: tau must be positive, got " +
                      std::to_string(tau));
  }
  if (queue.fill() == 0) {
    throw StateError("info_nce: negative queue is empty; warm it up by "
                     "enqueueing at least one batch before the first "
                     "contrastive step");
  }
  if (z_student.shape() != z_teacher.shape()) {
    throw DimensionError("info_nce: student " +
                         shape_to_string(z_student.shape()) + " vs teacher " +
                         shape_to_string(z_teacher.shape()));
  }
  if (z_student.cols() != queue.dim()) {
    throw DimensionError("info_nce: embedding width " +
                         std::to_string(z_student.cols()) +
                         " does not match queue width " +
                         std::to_string(queue.dim()));
  }
  const std::size_t m = z_student.rows();
  // Column 0 holds the positive similarity, the rest the queue negatives;
  // the loss is then exactly a (1 + fill)-way softmax cross-entropy with
  // label 0 for every sample.
  Tensor positive = row_sum(tape, mul(tape, z_student, z_teacher));
  Tensor negatives =
      matmul(tape, z_student, transpose(tape, queue.matrix()));
  const std::array<Tensor, 2> parts{positive, negatives};
  Tensor logits = scale(tape, concat_cols(tape, parts), 1.0 / tau);
  std::vector<int> first(m, 0);
  return cross_entropy(tape, logits, first);
}

TotalLoss total_loss(Tape& tape, const Tensor& ce, const Tensor& nce,
                     const Tensor& kl, int gamma, std::size_t batch_size,
                     const LossWeights& weights) {
  if (gamma != 0 && gamma != 1) {
    throw ConfigError("total_loss: gamma must be 0 or 1, got " +
                      std::to_string(gamma));
  }
  // The breakdown reports the weighted terms so that
  // total == ce + nce + gamma * kl holds bit-exactly for any weights.
  Tensor wce = scale(tape, ce, weights.ce);
  Tensor wnce = scale(tape, nce, weights.nce);
  Tensor wkl = scale(tape, kl, weights.kl);
  Tensor total = add(tape, add(tape, wce, wnce),
                     scale(tape, wkl, static_cast<double>(gamma)));
  TotalLoss out;
  out.value = total;
  out.breakdown = {wce.item(), wnce.item(), wkl.item(), gamma, total.item(),
                   batch_size};
  return out;
}

}  // namespace moma
