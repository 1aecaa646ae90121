#pragma once

#include <string>
#include <vector>

#include "moma/nets.hpp"
#include "moma/tensor.hpp"

namespace moma {

enum class TaskKind { same, relevant, irrelevant };

TaskKind parse_task_kind(const std::string& text);
std::string to_string(TaskKind kind);

// The KL term is gated on: 1 when teacher and student solve the same task,
// 0 otherwise.
int gamma_for_task(TaskKind kind);

// Fixed-capacity FIFO ring of embedding rows serving as contrastive
// negatives. Enqueueing a batch overwrites exactly the oldest rows.
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, std::size_t dim,
                bool require_unit_norm = true);

  // batch: [n, dim] with n <= capacity. Rows are stored detached.
  void enqueue_dequeue(const Tensor& batch);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t fill() const { return fill_; }
  bool unit_norm_required() const { return require_unit_norm_; }

  // Stored rows oldest-to-newest as a [fill, dim] constant tensor.
  Tensor matrix() const;
  std::vector<double> row(std::size_t i) const;  // i-th oldest row

  // Raw ring state, used by checkpointing.
  const std::vector<double>& storage() const { return storage_; }
  std::size_t cursor() const { return cursor_; }
  void restore(std::vector<double> storage, std::size_t cursor,
               std::size_t fill);

 private:
  std::size_t capacity_;
  std::size_t dim_;
  bool require_unit_norm_;
  std::vector<double> storage_;
  std::size_t cursor_ = 0;
  std::size_t fill_ = 0;
};

// Names of the parameters mirrored from student to teacher by the momentum
// rule: encoder and projection only. Attention and classifier are excluded
// by construction.
struct MomentumPair {
  std::vector<std::string> names;
  double alpha = 0.9999;

  static MomentumPair for_stacks(const ModelStack& student,
                                 const ModelStack& teacher, double alpha);
};

// theta_teacher <- alpha * theta_teacher + (1 - alpha) * theta_student for
// every paired tensor; everything else is untouched.
void momentum_update(const MomentumPair& pair, const ParamMap& student_params,
                     ParamMap& teacher_params);

// Momentum teacher: a model stack whose encoder/projection/classifier were
// loaded from a pretrained checkpoint. Only its attention head is trained.
struct MomentumTeacher {
  ModelStack stack;
  bool initialized = false;
};

struct TeacherForward {
  Tensor z;       // [N_B, D_z]; on the tape through the attention head only
  Tensor logits;  // [N_B, C_src]; constant, produced by the frozen classifier
};

// Encoder and projection run detached; the gradient-trained attention head
// is then applied on the tape; the result is L2-normalized when
// `normalize` is set. Logits come from the frozen classifier on the
// detached embedding and never join the tape.
TeacherForward teacher_forward_pipeline(MomentumTeacher& teacher, Tape& tape,
                                        const Tensor& x, bool normalize);

}  // namespace moma
