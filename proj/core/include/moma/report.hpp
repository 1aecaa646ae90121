#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moma/losses.hpp"
#include "moma/metrics.hpp"
#include "moma/tensor.hpp"

namespace moma {

// Every text artifact starts with '#'-prefixed header lines echoing the
// engine version and the full run config.

void write_header(std::ostream& out, const std::string& config_echo);

// Flat key: value lines (one record per evaluation).
void write_report(const MetricsReport& report, const std::string& config_echo,
                  const std::filesystem::path& path);
std::string render_report(const MetricsReport& report);

// Parsed back form: header-comment lines are skipped, keys kept as strings.
std::map<std::string, std::string> read_report(
    const std::filesystem::path& path);

// step,ce,nce,kl,gamma,total rows at full precision.
void write_loss_csv(const std::vector<LossBreakdown>& log,
                    const std::string& config_echo,
                    const std::filesystem::path& path);

// model,split,label,dim0..dimK rows.
void write_embeddings_csv(const Tensor& embeddings,
                          const std::vector<int>& labels,
                          const std::string& model_tag,
                          const std::string& split,
                          const std::string& config_echo,
                          const std::filesystem::path& path);

// Correlation block matrix with row/column labels.
void write_correlations_csv(const CorrelationBlocks& blocks,
                            const std::string& config_echo,
                            const std::filesystem::path& path);

}  // namespace moma
