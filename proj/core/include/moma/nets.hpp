#pragma once

#include <map>
#include <string>
#include <vector>

#include "moma/ops.hpp"
#include "moma/rng.hpp"
#include "moma/tensor.hpp"

namespace moma {

using ParamMap = std::map<std::string, Tensor>;

// Dimensions of one model stack.
struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_hidden;
  std::size_t embed_dim = 0;       // D
  std::size_t proj_hidden = 0;     // D_p; 0 means "same as proj_dim"
  std::size_t proj_dim = 0;        // D_z
  std::size_t heads = 4;           // h
  bool output_proj = true;         // apply W^O after concatenating heads
  std::size_t num_classes = 0;     // C

  void validate() const;
};

// Which parameter groups receive gradients. Frozen groups still exist and
// can be loaded/updated off-tape (momentum rule), they just never land on
// a tape.
struct TrainableGroups {
  bool encoder = true;
  bool projection = true;
  bool attention = true;
  bool classifier = true;
};

struct LinearLayer {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
};

// input_dim -> hidden... -> embed_dim with ReLU between layers, linear last.
class MlpEncoder {
 public:
  Tensor forward(Tape& tape, const Tensor& x) const;
  std::vector<LinearLayer> layers;
};

// FC(D -> D_p), ReLU, FC(D_p -> D_z).
class ProjectionHead {
 public:
  Tensor forward(Tape& tape, const Tensor& x) const;
  LinearLayer fc1;
  LinearLayer fc2;
};

// Batch-wise scaled dot-product self-attention over the rows of z.
// Per head: A = softmax(Q K^T / sqrt(d_q)), output = A V; heads are
// concatenated back to width D_z and optionally mixed by W^O.
class MultiHeadAttention {
 public:
  struct Head {
    Tensor wq, wk, wv;  // each [D_z, D_z/h]
  };

  // Per-head row-stochastic attention matrices, captured on demand.
  struct Trace {
    std::vector<Tensor> attention;  // h entries, each [N_B, N_B]
  };

  Tensor forward(Tape& tape, const Tensor& z, Trace* trace = nullptr) const;

  std::vector<Head> heads;
  Tensor wo;  // [D_z, D_z]; undefined when output projection is disabled
  std::size_t head_dim = 0;
};

// Single FC layer over encoder embeddings.
class Classifier {
 public:
  Tensor forward(Tape& tape, const Tensor& embed) const;
  LinearLayer fc;
};

// One complete network: encoder f, projection p, attention h, classifier g,
// with a flat named-parameter map. Student and momentum teacher are two
// instances of this type built from the same config.
class ModelStack {
 public:
  static ModelStack build(const ModelConfig& config, Rng& rng,
                          const TrainableGroups& trainable = {});

  // embed = f(x), logits = g(embed).
  std::pair<Tensor, Tensor> encode(Tape& tape, const Tensor& x) const;
  Tensor project(Tape& tape, const Tensor& embed) const;
  Tensor attend(Tape& tape, const Tensor& z,
                MultiHeadAttention::Trace* trace = nullptr) const;

  const ParamMap& params() const { return params_; }
  ParamMap& params() { return params_; }
  const Tensor& param(const std::string& name) const;
  // Parameters of one group; group is one of "enc", "proj", "att", "cls".
  ParamMap group_params(const std::string& group) const;

  const ModelConfig& config() const { return config_; }
  const MlpEncoder& encoder() const { return encoder_; }
  const ProjectionHead& projection() const { return projection_; }
  const MultiHeadAttention& attention() const { return attention_; }
  MultiHeadAttention& attention() { return attention_; }
  const Classifier& classifier() const { return classifier_; }

 private:
  ModelConfig config_;
  MlpEncoder encoder_;
  ProjectionHead projection_;
  MultiHeadAttention attention_;
  Classifier classifier_;
  ParamMap params_;
};

}  // namespace moma
