#pragma once

#include <string>
#include <vector>

#include "moma/config.hpp"

namespace moma {

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t elements = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;       // trainable blocks, one row each
  std::vector<std::string> frozen_blocks;   // verified gradient-free
  double tolerance = 1e-4;
  bool all_pass = false;
};

struct GradCheckOptions {
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  // Test hook: perturbs one analytic gradient so the table must fail.
  bool corrupt = false;
};

// Compares every trainable parameter's analytic gradient of the full
// composite objective against central finite differences. Dimensions are
// capped at 8 so the sweep stays instant; larger configs are rejected.
GradCheckReport gradcheck(const RunConfig& config, std::uint64_t seed,
                          const GradCheckOptions& options = {});

}  // namespace moma
