#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moma/tensor.hpp"

namespace moma {

// C x C counts; rows index the true class, columns the predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  static ConfusionMatrix from_predictions(std::span<const int> truth,
                                          std::span<const int> predicted,
                                          std::size_t num_classes);

  std::size_t num_classes() const { return classes_; }
  long long at(std::size_t truth, std::size_t predicted) const;
  void add(std::size_t truth, std::size_t predicted, long long count = 1);
  long long total() const;

 private:
  std::size_t classes_;
  std::vector<long long> counts_;
};

double accuracy(const ConfusionMatrix& cm);
// Unweighted mean of per-class F1; a class with no support on either side
// contributes 0.
double macro_f1(const ConfusionMatrix& cm);
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

// Weighted F1 over the five grading roles:
// 0.25*(G3 + G4 + G5) + 0.125*(Normal + Stroma).
double weighted_f1_aggc(const std::map<std::string, double>& per_class_f1);

// Quadratic weighted kappa with w_ij = (i-j)^2/(C-1)^2. A degenerate
// expected-disagreement of 0 maps to 1.0 when observed disagreement is also
// 0 and to 0.0 otherwise.
double kappa_quadratic(const ConfusionMatrix& cm);

// Mean silhouette over samples with Euclidean distance; singleton-cluster
// samples score 0. Requires at least two represented classes.
double silhouette(const Tensor& embeddings, std::span<const int> labels);

struct CorrelationBlocks {
  // Pearson correlation between every pair of sample embeddings, rows from
  // set A, columns from set B, both sorted by (label, original index).
  Tensor matrix;
  std::vector<int> row_labels;
  std::vector<int> col_labels;
  std::size_t zero_variance_pairs = 0;

  double mean_intra_class() const;
  double mean_inter_class() const;
};

CorrelationBlocks class_correlations(const Tensor& emb_a,
                                     std::span<const int> labels_a,
                                     const Tensor& emb_b,
                                     std::span<const int> labels_b);

// Per group, the modal predicted class; ties break toward the lowest index.
std::map<int, int> majority_vote(std::span<const int> predictions,
                                 std::span<const int> group_ids);

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> weighted_f1;
  double kappa_quadratic = 0.0;
  std::optional<double> silhouette;
  std::optional<double> group_accuracy;
  std::vector<std::vector<long long>> confusion;
  std::string tag;         // method name, e.g. FT_None / FT_Teacher / MoMA
  std::string pretrained;  // init provenance, e.g. none / teacher
  std::uint64_t seed = 0;
};

}  // namespace moma
