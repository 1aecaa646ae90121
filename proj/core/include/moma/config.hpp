#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moma/distill.hpp"
#include "moma/losses.hpp"
#include "moma/nets.hpp"
#include "moma/optim.hpp"
#include "moma/synthdata.hpp"

namespace moma {

// Everything a run needs, parsed from a sectioned key=value file. Unknown
// sections or keys are hard errors with the offending line number.
struct RunConfig {
  // [data]
  TaskKind regime = TaskKind::same;
  std::size_t input_dim = 0;  // required
  std::size_t source_classes = 3;
  std::size_t target_classes = 3;
  double center_scale = 3.0;
  double cluster_spread = 1.0;
  double shift = 1.0;
  std::size_t target_train = 64;
  std::size_t target_val = 32;
  std::size_t target_test = 128;
  std::size_t source_ratio = 10;
  double imbalance_ratio = 1.0;
  std::size_t group_size = 0;
  double augment = 0.0;
  std::vector<std::string> aggc_roles;  // optional role name per class

  // [model]
  std::size_t embed_dim = 32;
  std::size_t proj_dim = 512;
  std::size_t proj_hidden = 0;  // 0 -> proj_dim
  std::size_t heads = 4;
  std::vector<std::size_t> encoder_hidden = {32};
  bool output_proj = true;
  std::string student_init = "teacher";  // teacher | none

  // [distill]
  double alpha = 0.9999;
  double tau = 0.07;
  double kd_temperature = 4.0;
  bool gamma_auto = true;
  int gamma = 1;
  std::size_t queue_size = 512;
  bool normalize_embeddings = true;
  double ce_weight = 1.0;
  double nce_weight = 1.0;
  double kl_weight = 1.0;

  // [optim]
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  // [io]
  std::string out_dir = "moma_out";
  bool checkpoint_queue = false;

  // Original file text, kept so artifacts can echo it verbatim. Empty for
  // configs built in code.
  std::string raw_text;
  // "key=value" notes for CLI overrides applied after parsing.
  std::vector<std::string> overrides;

  static RunConfig parse_file(const std::filesystem::path& path);
  static RunConfig parse_text(const std::string& text);

  void validate() const;

  int resolved_gamma() const {
    return gamma_auto ? gamma_for_task(regime) : gamma;
  }

  TaskSpec task_spec() const;
  // Model dimensions; class count chosen per domain.
  ModelConfig model_config(std::size_t num_classes) const;
  AdamConfig adam_config() const;
  LossWeights loss_weights() const;

  // Canonical effective dump (every key, normalized order, full precision).
  std::string canonical() const;
  // raw_text when available (plus override notes), canonical() otherwise.
  std::string echo_text() const;
};

}  // namespace moma
