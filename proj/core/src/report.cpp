#include "moma/report.hpp"

#include <fstream>
#include <sstream>

#include "moma/errors.hpp"
#include "moma/version.hpp"

namespace moma {

namespace {

std::ofstream open_artifact(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw InputError("artifact: cannot open " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_header(std::ostream& out, const std::string& config_echo) {
  out << "# engine: " << kEngineVersion << '\n';
  std::istringstream lines(config_echo);
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
}

std::string render_report(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "tag: " << report.tag << '\n';
  out << "pretrained: " << report.pretrained << '\n';
  out << "seed: " << report.seed << '\n';
  out << "accuracy: " << report.accuracy << '\n';
  out << "macro_f1: " << report.macro_f1 << '\n';
  out << "kappa_quadratic: " << report.kappa_quadratic << '\n';
  if (report.weighted_f1) out << "weighted_f1: " << *report.weighted_f1 << '\n';
  if (report.silhouette) out << "silhouette: " << *report.silhouette << '\n';
  if (report.group_accuracy) {
    out << "group_accuracy: " << *report.group_accuracy << '\n';
  }
  for (std::size_t i = 0; i < report.confusion.size(); ++i) {
    for (std::size_t j = 0; j < report.confusion[i].size(); ++j) {
      out << "confusion." << i << '.' << j << ": " << report.confusion[i][j]
          << '\n';
    }
  }
  return out.str();
}

void write_report(const MetricsReport& report, const std::string& config_echo,
                  const std::filesystem::path& path) {
  auto out = open_artifact(path);
  write_header(out, config_echo);
  out << render_report(report);
}

std::map<std::string, std::string> read_report(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("report: cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    const auto start = value.find_first_not_of(' ');
    out[key] = start == std::string::npos ? "" : value.substr(start);
  }
  return out;
}

void write_loss_csv(const std::vector<LossBreakdown>& log,
                    const std::string& config_echo,
                    const std::filesystem::path& path) {
  auto out = open_artifact(path);
  write_header(out, config_echo);
  out << "step,ce,nce,kl,gamma,total\n";
  std::size_t step = 0;
  for (const auto& row : log) {
    out << step++ << ',' << row.ce << ',' << row.nce << ',' << row.kl << ','
        << row.gamma << ',' << row.total << '\n';
  }
}

void write_embeddings_csv(const Tensor& embeddings,
                          const std::vector<int>& labels,
                          const std::string& model_tag,
                          const std::string& split,
                          const std::string& config_echo,
                          const std::filesystem::path& path) {
  auto out = open_artifact(path);
  write_header(out, config_echo);
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  out << "model,split,label";
  for (std::size_t k = 0; k < d; ++k) out << ",dim" << k;
  out << '\n';
  auto values = embeddings.values();
  for (std::size_t i = 0; i < n; ++i) {
    out << model_tag << ',' << split << ',' << labels[i];
    for (std::size_t k = 0; k < d; ++k) out << ',' << values[i * d + k];
    out << '\n';
  }
}

void write_correlations_csv(const CorrelationBlocks& blocks,
                            const std::string& config_echo,
                            const std::filesystem::path& path) {
  auto out = open_artifact(path);
  write_header(out, config_echo);
  out << "row_label";
  for (std::size_t j = 0; j < blocks.matrix.cols(); ++j) {
    out << ",c" << j << "_l" << blocks.col_labels[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < blocks.matrix.rows(); ++i) {
    out << blocks.row_labels[i];
    for (std::size_t j = 0; j < blocks.matrix.cols(); ++j) {
      out << ',' << blocks.matrix.at(i, j);
    }
    out << '\n';
  }
}

}  // namespace moma
