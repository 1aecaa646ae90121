#include "moma/nets.hpp"

#include <cmath>

namespace moma {

namespace {

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                   bool requires_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_values({fan_in, fan_out}, std::move(values),
                             requires_grad);
}

Tensor init_bias(std::size_t fan_in, std::size_t n, Rng& rng,
                 bool requires_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_values({n}, std::move(values), requires_grad);
}

Tensor linear(Tape& tape, const Tensor& x, const LinearLayer& layer) {
  return add_row_bias(tape, matmul(tape, x, layer.w), layer.b);
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim == 0 || embed_dim == 0 || proj_dim == 0 || num_classes == 0) {
    throw ConfigError("model: input_dim, embed_dim, proj_dim and num_classes "
                      "must all be positive");
  }
  if (heads == 0 || proj_dim % heads != 0) {
    throw ConfigError("model: proj_dim (" + std::to_string(proj_dim) +
                      ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  for (std::size_t h : encoder_hidden) {
    if (h == 0) throw ConfigError("model: encoder hidden width must be > 0");
  }
}

Tensor MlpEncoder::forward(Tape& tape, const Tensor& x) const {
  Tensor out = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out = linear(tape, out, layers[i]);
    if (i + 1 < layers.size()) out = relu(tape, out);
  }
  return out;
}

Tensor ProjectionHead::forward(Tape& tape, const Tensor& x) const {
  return linear(tape, relu(tape, linear(tape, x, fc1)), fc2);
}

Tensor MultiHeadAttention::forward(Tape& tape, const Tensor& z,
                                   Trace* trace) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outputs;
  outputs.reserve(heads.size());
  for (const Head& head : heads) {
    Tensor q = matmul(tape, z, head.wq);
    Tensor k = matmul(tape, z, head.wk);
    Tensor v = matmul(tape, z, head.wv);
    Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_d);
    Tensor attn = softmax_rows(tape, scores);
    if (trace) trace->attention.push_back(attn);
    outputs.push_back(matmul(tape, attn, v));
  }
  Tensor merged = concat_cols(tape, outputs);
  if (wo.defined()) merged = matmul(tape, merged, wo);
  return merged;
}

Tensor Classifier::forward(Tape& tape, const Tensor& embed) const {
  return linear(tape, embed, fc);
}

ModelStack ModelStack::build(const ModelConfig& config, Rng& rng,
                             const TrainableGroups& trainable) {
  config.validate();
  ModelStack stack;
  stack.config_ = config;

  auto add_linear = [&](const std::string& prefix, std::size_t in,
                        std::size_t out, bool rg) {
    LinearLayer layer{init_weight(in, out, rng, rg),
                      init_bias(in, out, rng, rg)};
    stack.params_[prefix + ".w"] = layer.w;
    stack.params_[prefix + ".b"] = layer.b;
    return layer;
  };

  std::vector<std::size_t> widths;
  widths.push_back(config.input_dim);
  widths.insert(widths.end(), config.encoder_hidden.begin(),
                config.encoder_hidden.end());
  widths.push_back(config.embed_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    stack.encoder_.layers.push_back(
        add_linear("enc." + std::to_string(i), widths[i], widths[i + 1],
                   trainable.encoder));
  }

  const std::size_t proj_hidden =
      config.proj_hidden ? config.proj_hidden : config.proj_dim;
  stack.projection_.fc1 = add_linear("proj.0", config.embed_dim, proj_hidden,
                                     trainable.projection);
  stack.projection_.fc2 =
      add_linear("proj.1", proj_hidden, config.proj_dim, trainable.projection);

  const std::size_t head_dim = config.proj_dim / config.heads;
  stack.attention_.head_dim = head_dim;
  for (std::size_t h = 0; h < config.heads; ++h) {
    MultiHeadAttention::Head head;
    head.wq = init_weight(config.proj_dim, head_dim, rng, trainable.attention);
    head.wk = init_weight(config.proj_dim, head_dim, rng, trainable.attention);
    head.wv = init_weight(config.proj_dim, head_dim, rng, trainable.attention);
    const std::string prefix = "att.h" + std::to_string(h);
    stack.params_[prefix + ".wq"] = head.wq;
    stack.params_[prefix + ".wk"] = head.wk;
    stack.params_[prefix + ".wv"] = head.wv;
    stack.attention_.heads.push_back(std::move(head));
  }
  if (config.output_proj) {
    stack.attention_.wo =
        init_weight(config.proj_dim, config.proj_dim, rng, trainable.attention);
    stack.params_["att.wo"] = stack.attention_.wo;
  }

  stack.classifier_.fc = add_linear("cls", config.embed_dim,
                                    config.num_classes, trainable.classifier);
  return stack;
}

std::pair<Tensor, Tensor> ModelStack::encode(Tape& tape,
                                             const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.input_dim) {
    throw DimensionError("encode: input shape " + shape_to_string(x.shape()) +
                         " does not match input_dim " +
                         std::to_string(config_.input_dim));
  }
  Tensor embed = encoder_.forward(tape, x);
  Tensor logits = classifier_.forward(tape, embed);
  return {embed, logits};
}

Tensor ModelStack::project(Tape& tape, const Tensor& embed) const {
  return projection_.forward(tape, embed);
}

Tensor ModelStack::attend(Tape& tape, const Tensor& z,
                          MultiHeadAttention::Trace* trace) const {
  return attention_.forward(tape, z, trace);
}

const Tensor& ModelStack::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("model: unknown parameter '" + name + "'");
  }
  return it->second;
}

ParamMap ModelStack::group_params(const std::string& group) const {
  ParamMap out;
  const std::string prefix = group + ".";
  for (const auto& [name, tensor] : params_) {
    if (name.rfind(prefix, 0) == 0) out[name] = tensor;
  }
  if (out.empty()) {
    throw ConfigError("model: unknown parameter group '" + group + "'");
  }
  return out;
}

}  // namespace moma
