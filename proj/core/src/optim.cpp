#include "moma/optim.hpp"

#include <cmath>

namespace moma {

void AdamOptimizer::step(ParamMap& params) {
  for (const auto& [name, tensor] : params) {
    if (!tensor.has_grad()) {
      throw ContractError("adam: no gradient for trainable parameter '" +
                          name + "'");
    }
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  for (auto& [name, tensor] : params) {
    auto g = tensor.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size()) {
      throw ContractError("adam: moment size mismatch for '" + name + "'");
    }
    auto w = tensor.values_mut();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamOptimizer::restore(std::map<std::string, std::vector<double>> m,
                            std::map<std::string, std::vector<double>> v,
                            std::uint64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace moma
