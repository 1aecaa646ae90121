#include "moma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace moma {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) {
    throw InputError("confusion: class count must be positive");
  }
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> truth,
                                                  std::span<const int> predicted,
                                                  std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw InputError("confusion: truth and prediction lengths differ");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    cm.add(static_cast<std::size_t>(truth[i]),
           static_cast<std::size_t>(predicted[i]));
  }
  return cm;
}

long long ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes_ || predicted >= classes_) {
    throw InputError("confusion: index outside [0, " +
                     std::to_string(classes_) + ")");
  }
  return counts_[truth * classes_ + predicted];
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted,
                          long long count) {
  if (truth >= classes_ || predicted >= classes_) {
    throw InputError("confusion: index outside [0, " +
                     std::to_string(classes_) + ")");
  }
  counts_[truth * classes_ + predicted] += count;
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0LL);
}

double accuracy(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total == 0) throw InputError("accuracy: empty confusion matrix");
  long long trace = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(total);
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  std::vector<double> out(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    long long tp = cm.at(k, k);
    long long truth_count = 0, pred_count = 0;
    for (std::size_t j = 0; j < c; ++j) {
      truth_count += cm.at(k, j);
      pred_count += cm.at(j, k);
    }
    // F1 = 2TP / (truth + predicted); 0 when the class is absent everywhere.
    const long long denom = truth_count + pred_count;
    out[k] = denom == 0 ? 0.0
                        : 2.0 * static_cast<double>(tp) /
                              static_cast<double>(denom);
  }
  return out;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InputError("macro_f1: empty confusion matrix");
  const auto f1 = per_class_f1(cm);
  return std::accumulate(f1.begin(), f1.end(), 0.0) /
         static_cast<double>(f1.size());
}

double weighted_f1_aggc(const std::map<std::string, double>& per_class_f1) {
  const std::vector<std::pair<std::string, double>> roles = {
      {"G3", 0.25}, {"G4", 0.25}, {"G5", 0.25},
      {"Normal", 0.125}, {"Stroma", 0.125}};
  double score = 0.0;
  for (const auto& [role, weight] : roles) {
    auto it = per_class_f1.find(role);
    if (it == per_class_f1.end()) {
      throw InputError("weighted_f1: missing role '" + role + "'");
    }
    score += weight * it->second;
  }
  return score;
}

double kappa_quadratic(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  if (c < 2) throw InputError("kappa: needs at least 2 classes");
  const long long total = cm.total();
  if (total == 0) throw InputError("kappa: empty confusion matrix");

  std::vector<double> row_marginal(c, 0.0), col_marginal(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = static_cast<double>(cm.at(i, j)) /
                       static_cast<double>(total);
      row_marginal[i] += p;
      col_marginal[j] += p;
    }
  }
  const double denom_scale = static_cast<double>((c - 1) * (c - 1));
  double observed = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double diff = static_cast<double>(i) - static_cast<double>(j);
      const double w = diff * diff / denom_scale;
      observed += w * static_cast<double>(cm.at(i, j)) /
                  static_cast<double>(total);
      expected += w * row_marginal[i] * col_marginal[j];
    }
  }
  if (expected == 0.0) return observed == 0.0 ? 1.0 : 0.0;
  return 1.0 - observed / expected;
}

double silhouette(const Tensor& embeddings, std::span<const int> labels) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  if (labels.size() != n) {
    throw InputError("silhouette: label count does not match sample count");
  }
  std::map<int, std::size_t> cluster_sizes;
  for (int label : labels) ++cluster_sizes[label];
  if (cluster_sizes.size() < 2) {
    throw InputError("silhouette: needs at least 2 distinct classes");
  }

  auto values = embeddings.values();
  auto distance = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = values[i * d + k] - values[j * d + k];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  double score_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_sizes[labels[i]] == 1) continue;  // singleton scores 0
    std::map<int, double> dist_sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[labels[j]] += distance(i, j);
    }
    const double a = dist_sum[labels[i]] /
                     static_cast<double>(cluster_sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, sum] : dist_sum) {
      if (label == labels[i]) continue;
      b = std::min(b, sum / static_cast<double>(cluster_sizes[label]));
    }
    const double m = std::max(a, b);
    score_sum += m == 0.0 ? 0.0 : (b - a) / m;
  }
  return score_sum / static_cast<double>(n);
}

CorrelationBlocks class_correlations(const Tensor& emb_a,
                                     std::span<const int> labels_a,
                                     const Tensor& emb_b,
                                     std::span<const int> labels_b) {
  if (emb_a.cols() != emb_b.cols()) {
    throw InputError("correlations: embedding widths differ");
  }
  if (emb_a.rows() != labels_a.size() || emb_b.rows() != labels_b.size()) {
    throw InputError("correlations: label count does not match sample count");
  }
  const std::size_t d = emb_a.cols();

  auto sorted_order = [](std::span<const int> labels) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x,
                                                     std::size_t y) {
      return labels[x] < labels[y];
    });
    return order;
  };
  const auto order_a = sorted_order(labels_a);
  const auto order_b = sorted_order(labels_b);

  struct Standardized {
    std::vector<double> centered;
    double norm;
  };
  auto standardize = [&](const Tensor& emb, std::size_t row) {
    Standardized s;
    auto v = emb.values().subspan(row * d, d);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                        static_cast<double>(d);
    s.centered.resize(d);
    double ss = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      s.centered[k] = v[k] - mean;
      ss += s.centered[k] * s.centered[k];
    }
    s.norm = std::sqrt(ss);
    return s;
  };

  std::vector<Standardized> rows_a, rows_b;
  rows_a.reserve(order_a.size());
  rows_b.reserve(order_b.size());
  for (std::size_t i : order_a) rows_a.push_back(standardize(emb_a, i));
  for (std::size_t i : order_b) rows_b.push_back(standardize(emb_b, i));

  CorrelationBlocks blocks;
  blocks.row_labels.reserve(order_a.size());
  blocks.col_labels.reserve(order_b.size());
  for (std::size_t i : order_a) blocks.row_labels.push_back(labels_a[i]);
  for (std::size_t i : order_b) blocks.col_labels.push_back(labels_b[i]);

  std::vector<double> matrix(order_a.size() * order_b.size());
  for (std::size_t i = 0; i < rows_a.size(); ++i) {
    for (std::size_t j = 0; j < rows_b.size(); ++j) {
      double value = 0.0;
      if (rows_a[i].norm < 1e-15 || rows_b[j].norm < 1e-15) {
        ++blocks.zero_variance_pairs;
      } else {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          dot += rows_a[i].centered[k] * rows_b[j].centered[k];
        }
        value = dot / (rows_a[i].norm * rows_b[j].norm);
      }
      matrix[i * rows_b.size() + j] = value;
    }
  }
  if (blocks.zero_variance_pairs > 0) {
    std::cerr << "warning: " << blocks.zero_variance_pairs
              << " correlation pairs had zero variance; entries set to 0\n";
  }
  blocks.matrix = Tensor::from_values({rows_a.size(), rows_b.size()},
                                      std::move(matrix));
  return blocks;
}

double CorrelationBlocks::mean_intra_class() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (row_labels[i] == col_labels[j]) {
        sum += matrix.at(i, j);
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double CorrelationBlocks::mean_inter_class() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (row_labels[i] != col_labels[j]) {
        sum += matrix.at(i, j);
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::map<int, int> majority_vote(std::span<const int> predictions,
                                 std::span<const int> group_ids) {
  if (predictions.empty() || predictions.size() != group_ids.size()) {
    throw InputError("majority_vote: predictions and groups must be "
                     "non-empty and of equal length");
  }
  std::map<int, std::map<int, int>> tallies;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ++tallies[group_ids[i]][predictions[i]];
  }
  std::map<int, int> out;
  for (const auto& [group, votes] : tallies) {
    int best_class = -1, best_count = -1;
    // std::map iterates classes in ascending order, so ties resolve to the
    // lowest class index.
    for (const auto& [cls, count] : votes) {
      if (count > best_count) {
        best_class = cls;
        best_count = count;
      }
    }
    out[group] = best_class;
  }
  return out;
}

}  // namespace moma
