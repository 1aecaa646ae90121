#include "moma/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace moma {

namespace {

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-9);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> draw_centers(std::size_t count,
                                              std::size_t dim, double radius,
                                              Rng& rng) {
  std::vector<std::vector<double>> centers;
  centers.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    auto v = random_unit_vector(dim, rng);
    for (double& x : v) x *= radius;
    centers.push_back(std::move(v));
  }
  return centers;
}

// Per-class sample counts: geometric taper from imbalance_ratio down to 1,
// scaled to sum to `total` as closely as integer rounding allows.
std::vector<std::size_t> class_counts(std::size_t total, std::size_t classes,
                                      double imbalance_ratio) {
  std::vector<double> weights(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double exponent =
        classes > 1 ? static_cast<double>(c) / (classes - 1) : 0.0;
    weights[c] = std::pow(imbalance_ratio, 1.0 - exponent);
  }
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    counts[c] = static_cast<std::size_t>(
        std::floor(weights[c] / wsum * static_cast<double>(total)));
    assigned += counts[c];
  }
  for (std::size_t c = 0; assigned < total; c = (c + 1) % classes) {
    ++counts[c];
    ++assigned;
  }
  return counts;
}

Dataset sample_split(const std::vector<std::vector<double>>& centers,
                     const TaskSpec& spec, std::size_t total,
                     const std::string& split, Rng& rng) {
  const std::size_t dim = spec.input_dim;
  const auto counts = class_counts(total, centers.size(), spec.imbalance_ratio);

  std::vector<double> values;
  values.reserve(total * dim);
  std::vector<int> labels;
  labels.reserve(total);
  std::vector<int> groups;
  int next_group = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        values.push_back(centers[c][d] + spec.cluster_spread * rng.gaussian());
      }
      labels.push_back(static_cast<int>(c));
      if (spec.group_size > 0) {
        groups.push_back(next_group + static_cast<int>(i / spec.group_size));
      }
    }
    if (spec.group_size > 0 && counts[c] > 0) {
      next_group += static_cast<int>((counts[c] - 1) / spec.group_size) + 1;
    }
  }

  // Interleave classes so unshuffled batches are not single-class.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = total; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  Dataset out;
  out.split = split;
  std::vector<double> shuffled(total * dim);
  out.labels.resize(total);
  if (spec.group_size > 0) out.groups.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::copy_n(values.begin() + order[i] * dim, dim,
                shuffled.begin() + i * dim);
    out.labels[i] = labels[order[i]];
    if (spec.group_size > 0) out.groups[i] = groups[order[i]];
  }
  out.inputs = Tensor::from_values({total, dim}, std::move(shuffled));
  return out;
}

SplitSet sample_splits(const std::vector<std::vector<double>>& centers,
                       const TaskSpec& spec, std::size_t train, std::size_t val,
                       std::size_t test, std::uint64_t seed,
                       std::string_view domain) {
  SplitSet set;
  Rng train_rng(seed, std::string(domain) + ".train");
  Rng val_rng(seed, std::string(domain) + ".val");
  Rng test_rng(seed, std::string(domain) + ".test");
  set.train = sample_split(centers, spec, train, "train", train_rng);
  set.val = sample_split(centers, spec, val, "val", val_rng);
  set.test = sample_split(centers, spec, test, "test", test_rng);
  return set;
}

}  // namespace

void TaskSpec::validate() const {
  if (input_dim == 0) throw ConfigError("task: input_dim must be positive");
  if (source_classes < 2 || target_classes < 2) {
    throw ConfigError("task: source and target need at least 2 classes");
  }
  switch (regime) {
    case TaskKind::same:
      if (source_classes != target_classes) {
        throw ConfigError("task: the same regime requires equal class "
                          "counts, got " + std::to_string(source_classes) +
                          " vs " + std::to_string(target_classes));
      }
      break;
    case TaskKind::relevant:
      if (target_classes < source_classes) {
        throw ConfigError("task: the relevant regime requires the target "
                          "classes to cover the source classes");
      }
      break;
    case TaskKind::irrelevant:
      break;
  }
  if (target_train == 0 || target_test == 0) {
    throw ConfigError("task: target train and test splits must be non-empty");
  }
  if (source_ratio == 0) throw ConfigError("task: source_ratio must be >= 1");
  if (imbalance_ratio < 1.0) {
    throw ConfigError("task: imbalance_ratio must be >= 1");
  }
  if (shift < 0.0 || cluster_spread <= 0.0 || center_scale <= 0.0) {
    throw ConfigError("task: shift must be >= 0 and scales positive");
  }
}

GeneratedTask generate(const TaskSpec& spec) {
  spec.validate();
  GeneratedTask task;

  Rng center_rng(spec.seed, "centers");
  task.source_centers =
      draw_centers(spec.source_classes, spec.input_dim, spec.center_scale,
                   center_rng);

  Rng shift_rng(spec.seed, "shift");
  switch (spec.regime) {
    case TaskKind::same:
    case TaskKind::relevant: {
      // Shared classes keep their identity; each target center is the source
      // center displaced by `shift` in a seeded random direction.
      task.target_to_source.emplace(spec.target_classes, -1);
      for (std::size_t c = 0; c < spec.source_classes; ++c) {
        auto center = task.source_centers[c];
        const auto dir = random_unit_vector(spec.input_dim, shift_rng);
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          center[d] += spec.shift * dir[d];
        }
        task.target_centers.push_back(std::move(center));
        (*task.target_to_source)[c] = static_cast<int>(c);
      }
      // Extra target classes (relevant regime) have no source counterpart.
      Rng extra_rng(spec.seed, "extra-centers");
      auto extra = draw_centers(spec.target_classes - spec.source_classes,
                                spec.input_dim, spec.center_scale, extra_rng);
      for (auto& center : extra) task.target_centers.push_back(std::move(center));
      break;
    }
    case TaskKind::irrelevant: {
      Rng fresh_rng(spec.seed, "irrelevant-centers");
      task.target_centers = draw_centers(spec.target_classes, spec.input_dim,
                                         spec.center_scale, fresh_rng);
      break;
    }
  }

  task.source = sample_splits(task.source_centers, spec,
                              spec.target_train * spec.source_ratio,
                              spec.target_val * spec.source_ratio,
                              spec.target_test * spec.source_ratio, spec.seed,
                              "source");
  task.target = sample_splits(task.target_centers, spec, spec.target_train,
                              spec.target_val, spec.target_test, spec.seed,
                              "target");
  return task;
}

Tensor augment(const Tensor& x, double strength, Rng& rng) {
  if (strength < 0.0) {
    throw InputError("augment: strength must be non-negative, got " +
                     std::to_string(strength));
  }
  if (strength == 0.0) return x;
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  auto xv = x.values();
  for (std::size_t i = 0; i < m * n; ++i) {
    const double scale_factor = 1.0 + strength * rng.uniform(-0.5, 0.5);
    out[i] = xv[i] * scale_factor + strength * rng.gaussian();
  }
  return Tensor::from_values({m, n}, std::move(out));
}

std::vector<Batch> batches(const Dataset& data, std::size_t batch_size,
                           std::uint64_t seed, bool shuffle) {
  const std::size_t n = data.size();
  if (batch_size == 0 || batch_size > n) {
    throw ConfigError("batches: batch size " + std::to_string(batch_size) +
                      " is invalid for a dataset of " + std::to_string(n) +
                      " samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(seed, "batch-shuffle");
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
  }
  const std::size_t dim = data.inputs.cols();
  auto values = data.inputs.values();
  std::vector<Batch> out;
  out.reserve(n / batch_size);
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    Batch batch;
    std::vector<double> bx(batch_size * dim);
    batch.labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t src = order[start + i];
      std::copy_n(values.begin() + src * dim, dim, bx.begin() + i * dim);
      batch.labels[i] = data.labels[src];
    }
    batch.x = Tensor::from_values({batch_size, dim}, std::move(bx));
    out.push_back(std::move(batch));
  }
  return out;
}

void export_dataset_csv(const Dataset& data,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw InputError("csv export: cannot open " + path.string());
  const std::size_t dim = data.inputs.cols();
  for (std::size_t d = 0; d < dim; ++d) out << 'x' << d << ',';
  out << "label,group,split\n";
  auto values = data.inputs.values();
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) out << values[i * dim + d] << ',';
    out << data.labels[i] << ','
        << (data.groups.empty() ? -1 : data.groups[i]) << ',' << data.split
        << '\n';
  }
}

}  // namespace moma
