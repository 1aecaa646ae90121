#include "moma/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace moma {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& message) {
  throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

bool parse_bool(const std::string& value, std::size_t line) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(line, "expected a boolean (true/false), got '" + value + "'");
}

double parse_double(const std::string& value, std::size_t line) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    fail(line, "expected a number, got '" + value + "'");
  }
}

std::size_t parse_size(const std::string& value, std::size_t line) {
  std::size_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(line, "expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& value, std::size_t line) {
  std::uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(line, "expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string& value,
                                  std::size_t line)>;

const std::map<std::string, std::map<std::string, Setter>>& key_table() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"data",
       {
           {"regime", [](RunConfig& c, const std::string& v, std::size_t) {
              c.regime = parse_task_kind(v);
            }},
           {"input_dim", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.input_dim = parse_size(v, l);
            }},
           {"source_classes",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.source_classes = parse_size(v, l);
            }},
           {"target_classes",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.target_classes = parse_size(v, l);
            }},
           {"center_scale",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.center_scale = parse_double(v, l);
            }},
           {"cluster_spread",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.cluster_spread = parse_double(v, l);
            }},
           {"shift", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.shift = parse_double(v, l);
            }},
           {"target_train",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.target_train = parse_size(v, l);
            }},
           {"target_val", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.target_val = parse_size(v, l);
            }},
           {"target_test", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.target_test = parse_size(v, l);
            }},
           {"source_ratio",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.source_ratio = parse_size(v, l);
            }},
           {"imbalance_ratio",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.imbalance_ratio = parse_double(v, l);
            }},
           {"group_size", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.group_size = parse_size(v, l);
            }},
           {"augment", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.augment = parse_double(v, l);
            }},
           {"aggc_roles", [](RunConfig& c, const std::string& v, std::size_t) {
              c.aggc_roles = split_csv(v);
            }},
       }},
      {"model",
       {
           {"embed_dim", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.embed_dim = parse_size(v, l);
            }},
           {"proj_dim", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.proj_dim = parse_size(v, l);
            }},
           {"proj_hidden", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.proj_hidden = parse_size(v, l);
            }},
           {"heads", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.heads = parse_size(v, l);
            }},
           {"encoder_hidden",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.encoder_hidden.clear();
              for (const auto& item : split_csv(v)) {
                c.encoder_hidden.push_back(parse_size(item, l));
              }
            }},
           {"output_proj", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.output_proj = parse_bool(v, l);
            }},
           {"student_init",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              if (v != "teacher" && v != "none") {
                fail(l, "student_init must be teacher or none, got '" + v + "'");
              }
              c.student_init = v;
            }},
       }},
      {"distill",
       {
           {"alpha", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.alpha = parse_double(v, l);
            }},
           {"tau", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.tau = parse_double(v, l);
            }},
           {"kd_temperature",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.kd_temperature = parse_double(v, l);
            }},
           {"gamma_auto", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.gamma_auto = parse_bool(v, l);
            }},
           {"gamma", [](RunConfig& c, const std::string& v, std::size_t l) {
              const std::size_t g = parse_size(v, l);
              if (g > 1) fail(l, "gamma must be 0 or 1");
              c.gamma = static_cast<int>(g);
            }},
           {"queue_size", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.queue_size = parse_size(v, l);
            }},
           {"normalize_embeddings",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.normalize_embeddings = parse_bool(v, l);
            }},
           {"ce_weight", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.ce_weight = parse_double(v, l);
            }},
           {"nce_weight", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.nce_weight = parse_double(v, l);
            }},
           {"kl_weight", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.kl_weight = parse_double(v, l);
            }},
       }},
      {"optim",
       {
           {"lr", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.lr = parse_double(v, l);
            }},
           {"beta1", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.beta1 = parse_double(v, l);
            }},
           {"beta2", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.beta2 = parse_double(v, l);
            }},
           {"eps", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.eps = parse_double(v, l);
            }},
           {"epochs", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.epochs = parse_size(v, l);
            }},
           {"batch_size", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.batch_size = parse_size(v, l);
            }},
           {"seed", [](RunConfig& c, const std::string& v, std::size_t l) {
              c.seed = parse_u64(v, l);
            }},
       }},
      {"io",
       {
           {"out_dir", [](RunConfig& c, const std::string& v, std::size_t) {
              c.out_dir = v;
            }},
           {"checkpoint_queue",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.checkpoint_queue = parse_bool(v, l);
            }},
       }},
  };
  return table;
}

}  // namespace

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str());
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig config;
  config.raw_text = text;

  std::istringstream stream(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty() || content[0] == '#' || content[0] == ';') continue;
    if (content.front() == '[') {
      if (content.back() != ']') fail(line_no, "unterminated section header");
      section = trim(content.substr(1, content.size() - 2));
      if (!key_table().count(section)) {
        fail(line_no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      fail(line_no, "expected key=value, got '" + content + "'");
    }
    if (section.empty()) {
      fail(line_no, "key outside of any [section]");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const auto& keys = key_table().at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) {
      fail(line_no, "unknown key '" + key + "' in section [" + section + "]");
    }
    it->second(config, value, line_no);
  }
  config.validate();
  return config;
}

void RunConfig::validate() const {
  if (input_dim == 0) {
    throw ConfigError("config: [data] input_dim is required and must be > 0");
  }
  task_spec().validate();
  model_config(target_classes).validate();
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("config: alpha must lie in [0, 1]");
  }
  if (tau <= 0.0) throw ConfigError("config: tau must be positive");
  if (kd_temperature <= 0.0) {
    throw ConfigError("config: kd_temperature must be positive");
  }
  if (queue_size == 0) throw ConfigError("config: queue_size must be > 0");
  if (batch_size == 0) throw ConfigError("config: batch_size must be > 0");
  if (batch_size > queue_size) {
    throw ConfigError("config: batch_size (" + std::to_string(batch_size) +
                      ") must not exceed queue_size (" +
                      std::to_string(queue_size) + ")");
  }
  if (batch_size > target_train) {
    throw ConfigError("config: batch_size exceeds the target training split");
  }
  if (lr < 0.0 || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
      eps <= 0.0) {
    throw ConfigError("config: optimizer hyperparameters out of range");
  }
  if (augment < 0.0) throw ConfigError("config: augment must be >= 0");
  if (!aggc_roles.empty() && aggc_roles.size() != target_classes) {
    throw ConfigError("config: aggc_roles must name every target class");
  }
}

TaskSpec RunConfig::task_spec() const {
  TaskSpec spec;
  spec.regime = regime;
  spec.input_dim = input_dim;
  spec.source_classes = source_classes;
  spec.target_classes = target_classes;
  spec.center_scale = center_scale;
  spec.cluster_spread = cluster_spread;
  spec.shift = shift;
  spec.target_train = target_train;
  spec.target_val = target_val;
  spec.target_test = target_test;
  spec.source_ratio = source_ratio;
  spec.imbalance_ratio = imbalance_ratio;
  spec.group_size = group_size;
  spec.seed = seed;
  return spec;
}

ModelConfig RunConfig::model_config(std::size_t num_classes) const {
  ModelConfig model;
  model.input_dim = input_dim;
  model.encoder_hidden = encoder_hidden;
  model.embed_dim = embed_dim;
  model.proj_hidden = proj_hidden;
  model.proj_dim = proj_dim;
  model.heads = heads;
  model.output_proj = output_proj;
  model.num_classes = num_classes;
  return model;
}

AdamConfig RunConfig::adam_config() const {
  return AdamConfig{lr, beta1, beta2, eps};
}

LossWeights RunConfig::loss_weights() const {
  return LossWeights{ce_weight, nce_weight, kl_weight};
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  out << "[data]\n";
  out << "regime=" << to_string(regime) << '\n';
  out << "input_dim=" << input_dim << '\n';
  out << "source_classes=" << source_classes << '\n';
  out << "target_classes=" << target_classes << '\n';
  out << "center_scale=" << format_double(center_scale) << '\n';
  out << "cluster_spread=" << format_double(cluster_spread) << '\n';
  out << "shift=" << format_double(shift) << '\n';
  out << "target_train=" << target_train << '\n';
  out << "target_val=" << target_val << '\n';
  out << "target_test=" << target_test << '\n';
  out << "source_ratio=" << source_ratio << '\n';
  out << "imbalance_ratio=" << format_double(imbalance_ratio) << '\n';
  out << "group_size=" << group_size << '\n';
  out << "augment=" << format_double(augment) << '\n';
  if (!aggc_roles.empty()) {
    out << "aggc_roles=";
    for (std::size_t i = 0; i < aggc_roles.size(); ++i) {
      if (i) out << ',';
      out << aggc_roles[i];
    }
    out << '\n';
  }
  out << "[model]\n";
  out << "embed_dim=" << embed_dim << '\n';
  out << "proj_dim=" << proj_dim << '\n';
  out << "proj_hidden=" << proj_hidden << '\n';
  out << "heads=" << heads << '\n';
  out << "encoder_hidden=";
  for (std::size_t i = 0; i < encoder_hidden.size(); ++i) {
    if (i) out << ',';
    out << encoder_hidden[i];
  }
  out << '\n';
  out << "output_proj=" << (output_proj ? "true" : "false") << '\n';
  out << "student_init=" << student_init << '\n';
  out << "[distill]\n";
  out << "alpha=" << format_double(alpha) << '\n';
  out << "tau=" << format_double(tau) << '\n';
  out << "kd_temperature=" << format_double(kd_temperature) << '\n';
  out << "gamma_auto=" << (gamma_auto ? "true" : "false") << '\n';
  out << "gamma=" << gamma << '\n';
  out << "queue_size=" << queue_size << '\n';
  out << "normalize_embeddings=" << (normalize_embeddings ? "true" : "false")
      << '\n';
  out << "ce_weight=" << format_double(ce_weight) << '\n';
  out << "nce_weight=" << format_double(nce_weight) << '\n';
  out << "kl_weight=" << format_double(kl_weight) << '\n';
  out << "[optim]\n";
  out << "lr=" << format_double(lr) << '\n';
  out << "beta1=" << format_double(beta1) << '\n';
  out << "beta2=" << format_double(beta2) << '\n';
  out << "eps=" << format_double(eps) << '\n';
  out << "epochs=" << epochs << '\n';
  out << "batch_size=" << batch_size << '\n';
  out << "seed=" << seed << '\n';
  out << "[io]\n";
  out << "out_dir=" << out_dir << '\n';
  out << "checkpoint_queue=" << (checkpoint_queue ? "true" : "false") << '\n';
  return out.str();
}

std::string RunConfig::echo_text() const {
  if (raw_text.empty() && overrides.empty()) return canonical();
  std::string text = raw_text.empty() ? canonical() : raw_text;
  if (!text.empty() && text.back() != '\n') text += '\n';
  for (const auto& note : overrides) {
    text += "override: " + note + "\n";
  }
  // Defaulted keys never appear in the raw file, so artifacts also carry
  // the full effective configuration.
  text += "--- effective config ---\n";
  text += canonical();
  return text;
}

}  // namespace moma
