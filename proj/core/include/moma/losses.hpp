#pragma once

#include <span>

#include "moma/distill.hpp"
#include "moma/tensor.hpp"

namespace moma {

// One training step's objective terms. `total` is the tape-composed value
// ce + nce + gamma * kl (with optional per-term weights); `kl` is reported
// even when gamma gates it out of the total.
struct LossBreakdown {
  double ce = 0.0;
  double nce = 0.0;
  double kl = 0.0;
  int gamma = 0;
  double total = 0.0;
  std::size_t batch_size = 0;
};

struct LossWeights {
  double ce = 1.0;
  double nce = 1.0;
  double kl = 1.0;
};

// Mean over the batch of -log softmax(logits)[label]. Labels must lie in
// [0, C).
Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels);

// T^2 * mean_i KL(softmax(teacher_i/T) || softmax(student_i/T)). The teacher
// side is treated as a constant: gradient reaches the student logits only.
Tensor kd_kl(Tape& tape, const Tensor& teacher_logits,
             const Tensor& student_logits, double temperature);

// Mean over the batch of -log[ exp(s.t/tau) / (exp(s.t/tau) +
// sum_j exp(s.q_j/tau)) ] with the queue rows as constant negatives.
// Until the queue is full the denominator uses the filled rows only.
Tensor info_nce(Tape& tape, const Tensor& z_student, const Tensor& z_teacher,
                const NegativeQueue& queue, double tau);

struct TotalLoss {
  Tensor value;  // scalar on the tape
  LossBreakdown breakdown;
};

// total = w_ce*ce + w_nce*nce + gamma*w_kl*kl composed on the tape.
TotalLoss total_loss(Tape& tape, const Tensor& ce, const Tensor& nce,
                     const Tensor& kl, int gamma, std::size_t batch_size,
                     const LossWeights& weights = {});

}  // namespace moma
