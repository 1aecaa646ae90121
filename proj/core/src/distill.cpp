#include "moma/distill.hpp"

#include <cmath>

#include "moma/ops.hpp"

namespace moma {

TaskKind parse_task_kind(const std::string& text) {
  if (text == "same") return TaskKind::same;
  if (text == "relevant") return TaskKind::relevant;
  if (text == "irrelevant") return TaskKind::irrelevant;
  throw ConfigError("regime must be one of same|relevant|irrelevant, got '" +
                    text + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::same: return "same";
    case TaskKind::relevant: return "relevant";
    case TaskKind::irrelevant: return "irrelevant";
  }
  return "?";
}

int gamma_for_task(TaskKind kind) {
  return kind == TaskKind::same ? 1 : 0;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim,
                             bool require_unit_norm)
    : capacity_(capacity),
      dim_(dim),
      require_unit_norm_(require_unit_norm),
      storage_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) {
    throw ConfigError("queue: capacity and dim must be positive");
  }
}

void NegativeQueue::enqueue_dequeue(const Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != dim_) {
    throw DimensionError("queue: batch shape " +
                         shape_to_string(batch.shape()) +
                         " does not match row width " + std::to_string(dim_));
  }
  const std::size_t n = batch.rows();
  if (n > capacity_) {
    throw ConfigError("queue: batch of " + std::to_string(n) +
                      " rows exceeds capacity " + std::to_string(capacity_));
  }
  auto bv = batch.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = bv.subspan(i * dim_, dim_);
    if (require_unit_norm_) {
      const double norm = l2_norm(row);
      if (std::abs(norm - 1.0) > 1e-10) {
        throw InputError("queue: row " + std::to_string(i) +
                         " is not unit-norm (|row| = " + std::to_string(norm) +
                         ")");
      }
    }
    std::copy(row.begin(), row.end(), storage_.begin() + cursor_ * dim_);
    cursor_ = (cursor_ + 1) % capacity_;
  }
  fill_ = std::min(capacity_, fill_ + n);
}

Tensor NegativeQueue::matrix() const {
  std::vector<double> out(fill_ * dim_);
  for (std::size_t i = 0; i < fill_; ++i) {
    const auto src = row(i);
    std::copy(src.begin(), src.end(), out.begin() + i * dim_);
  }
  return Tensor::from_values({fill_, dim_}, std::move(out));
}

std::vector<double> NegativeQueue::row(std::size_t i) const {
  if (i >= fill_) {
    throw InputError("queue: row " + std::to_string(i) + " beyond fill " +
                     std::to_string(fill_));
  }
  // Oldest row sits at the cursor once the ring has wrapped.
  const std::size_t start = fill_ < capacity_ ? 0 : cursor_;
  const std::size_t idx = (start + i) % capacity_;
  return {storage_.begin() + idx * dim_, storage_.begin() + (idx + 1) * dim_};
}

void NegativeQueue::restore(std::vector<double> storage, std::size_t cursor,
                            std::size_t fill) {
  if (storage.size() != capacity_ * dim_ || cursor >= capacity_ ||
      fill > capacity_) {
    throw SchemaError("queue: restore state does not match capacity " +
                      std::to_string(capacity_) + " x " + std::to_string(dim_));
  }
  storage_ = std::move(storage);
  cursor_ = cursor;
  fill_ = fill;
}

MomentumPair MomentumPair::for_stacks(const ModelStack& student,
                                      const ModelStack& teacher,
                                      double alpha) {
  MomentumPair pair;
  pair.alpha = alpha;
  for (const auto& [name, tensor] : student.params()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("proj.", 0) == 0) {
      pair.names.push_back(name);
    }
  }
  // Validate against the teacher now so a misconfigured pairing fails at
  // construction, not mid-run.
  for (const auto& name : pair.names) {
    const Tensor& s = student.param(name);
    auto it = teacher.params().find(name);
    if (it == teacher.params().end()) {
      throw ConfigError("momentum: teacher is missing parameter '" + name +
                        "'");
    }
    if (it->second.shape() != s.shape()) {
      throw ConfigError("momentum: shape mismatch for '" + name + "'");
    }
  }
  return pair;
}

void momentum_update(const MomentumPair& pair, const ParamMap& student_params,
                     ParamMap& teacher_params) {
  for (const auto& name : pair.names) {
    auto s_it = student_params.find(name);
    auto t_it = teacher_params.find(name);
    if (s_it == student_params.end() || t_it == teacher_params.end()) {
      throw ConfigError("momentum: parameter '" + name +
                        "' missing from the pair map");
    }
    const auto sv = s_it->second.values();
    auto tv = t_it->second.values_mut();
    if (sv.size() != tv.size()) {
      throw DimensionError("momentum: size mismatch for '" + name + "'");
    }
    const double a = pair.alpha;
    for (std::size_t i = 0; i < tv.size(); ++i) {
      tv[i] = a * tv[i] + (1.0 - a) * sv[i];
    }
  }
}

TeacherForward teacher_forward_pipeline(MomentumTeacher& teacher, Tape& tape,
                                        const Tensor& x, bool normalize) {
  if (!teacher.initialized) {
    throw StateError("teacher: forward requested before the stack was "
                     "initialized from a pretrained checkpoint");
  }
  // Encoder and projection parameters never require grad on a teacher
  // stack, so nothing below records onto the tape until the attention head.
  auto [embed, logits] = teacher.stack.encode(tape, x);
  Tensor projected = teacher.stack.project(tape, embed);
  Tensor attended = teacher.stack.attend(tape, projected);
  TeacherForward out;
  out.z = normalize ? l2_normalize_rows(tape, attended) : attended;
  out.logits = logits.detached();
  return out;
}

}  // namespace moma
