#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moma/distill.hpp"
#include "moma/rng.hpp"
#include "moma/tensor.hpp"

namespace moma {

// Parameters of one synthetic distillation task: a Gaussian-mixture source
// domain and a shifted target domain whose class structure depends on the
// regime (same / relevant / irrelevant).
struct TaskSpec {
  TaskKind regime = TaskKind::same;
  std::size_t input_dim = 0;
  std::size_t source_classes = 0;
  std::size_t target_classes = 0;
  double center_scale = 3.0;    // radius of the cluster-center cloud
  double cluster_spread = 1.0;  // per-coordinate sigma within a cluster
  double shift = 1.0;           // distance between source and target centers
  std::size_t target_train = 64;
  std::size_t target_val = 32;
  std::size_t target_test = 128;
  std::size_t source_ratio = 10;  // source split sizes = ratio * target sizes
  double imbalance_ratio = 1.0;   // 1.0 = class-balanced
  std::size_t group_size = 0;     // >0 assigns group ids for vote aggregation
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  Tensor inputs;            // [N, input_dim]
  std::vector<int> labels;  // each < class count
  std::string split;        // train | val | test
  std::vector<int> groups;  // empty when grouping is off

  std::size_t size() const { return labels.size(); }
};

struct SplitSet {
  Dataset train, val, test;
};

struct GeneratedTask {
  SplitSet source;
  SplitSet target;
  std::vector<std::vector<double>> source_centers;
  std::vector<std::vector<double>> target_centers;
  // target class -> source class, -1 for target classes with no counterpart;
  // absent entirely for the irrelevant regime.
  std::optional<std::vector<int>> target_to_source;
};

// Deterministic in the TaskSpec (including its seed): regenerating is
// bit-identical.
GeneratedTask generate(const TaskSpec& spec);

// Additive Gaussian jitter plus per-coordinate scaling. Strength 0 returns
// the input bit-exactly.
Tensor augment(const Tensor& x, double strength, Rng& rng);

struct Batch {
  Tensor x;
  std::vector<int> labels;
};

// Splits a dataset into consecutive batches of exactly `batch_size` rows
// after an optional seeded shuffle; a short final batch is dropped.
std::vector<Batch> batches(const Dataset& data, std::size_t batch_size,
                           std::uint64_t seed, bool shuffle);

// CSV with header x0..xd,label,group,split.
void export_dataset_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace moma
