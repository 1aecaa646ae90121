#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moma/nets.hpp"

namespace moma {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a named parameter map. Moment buffers are keyed
// by parameter name so they survive checkpointing.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  // Applies one update in place. Every parameter in `params` must carry a
  // gradient; a missing one is a contract violation and is named.
  void step(ParamMap& params);

  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }

  const std::map<std::string, std::vector<double>>& m() const { return m_; }
  const std::map<std::string, std::vector<double>>& v() const { return v_; }
  void restore(std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v, std::uint64_t t);

 private:
  AdamConfig config_;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace moma
