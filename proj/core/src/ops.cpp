#include "moma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moma {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

void softmax_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

double l2_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " +
                         shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::zeros({m, n}, any_grad({&a, &b}));
  {
    auto av = a.values();
    auto bv = b.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          cv[i * n + j] += aip * bv[p * n + j];
        }
      }
    }
  }
  if (c.requires_grad()) {
    tape.record(c, [a, b, c, m, k, n]() {
      auto gc = c.grad();
      if (a.requires_grad()) {
        std::vector<double> ga(m * k, 0.0);
        auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double g = gc[i * n + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) {
              ga[i * k + p] += g * bv[p * n + j];
            }
          }
        }
        Tensor(a).accumulate_grad(ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(k * n, 0.0);
        auto av = a.values();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
              gb[p * n + j] += aip * gc[i * n + j];
            }
          }
        }
        Tensor(b).accumulate_grad(gb);
      }
    });
  }
  return c;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor c = Tensor::zeros({n, m}, a.requires_grad());
  {
    auto av = a.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) cv[j * m + i] = av[i * n + j];
    }
  }
  if (c.requires_grad()) {
    tape.record(c, [a, c, m, n]() {
      auto gc = c.grad();
      std::vector<double> ga(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = gc[j * m + i];
      }
      Tensor(a).accumulate_grad(ga);
    });
  }
  return c;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = Tensor::zeros(a.shape(), any_grad({&a, &b}));
  {
    auto av = a.values();
    auto bv = b.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] + bv[i];
  }
  if (c.requires_grad()) {
    tape.record(c, [a, b, c]() {
      auto gc = c.grad();
      if (a.requires_grad()) Tensor(a).accumulate_grad(gc);
      if (b.requires_grad()) Tensor(b).accumulate_grad(gc);
    });
  }
  return c;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = Tensor::zeros(a.shape(), any_grad({&a, &b}));
  {
    auto av = a.values();
    auto bv = b.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] - bv[i];
  }
  if (c.requires_grad()) {
    tape.record(c, [a, b, c]() {
      auto gc = c.grad();
      if (a.requires_grad()) Tensor(a).accumulate_grad(gc);
      if (b.requires_grad()) {
        std::vector<double> gb(gc.size());
        for (std::size_t i = 0; i < gc.size(); ++i) gb[i] = -gc[i];
        Tensor(b).accumulate_grad(gb);
      }
    });
  }
  return c;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c = Tensor::zeros(a.shape(), any_grad({&a, &b}));
  {
    auto av = a.values();
    auto bv = b.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] * bv[i];
  }
  if (c.requires_grad()) {
    tape.record(c, [a, b, c]() {
      auto gc = c.grad();
      if (a.requires_grad()) {
        std::vector<double> ga(gc.size());
        auto bv = b.values();
        for (std::size_t i = 0; i < gc.size(); ++i) ga[i] = gc[i] * bv[i];
        Tensor(a).accumulate_grad(ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(gc.size());
        auto av = a.values();
        for (std::size_t i = 0; i < gc.size(); ++i) gb[i] = gc[i] * av[i];
        Tensor(b).accumulate_grad(gb);
      }
    });
  }
  return c;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor c = Tensor::zeros(a.shape(), a.requires_grad());
  {
    auto av = a.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] * factor;
  }
  if (c.requires_grad()) {
    tape.record(c, [a, c, factor]() {
      auto gc = c.grad();
      std::vector<double> ga(gc.size());
      for (std::size_t i = 0; i < gc.size(); ++i) ga[i] = gc[i] * factor;
      Tensor(a).accumulate_grad(ga);
    });
  }
  return c;
}

Tensor add_row_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row_bias");
  const std::size_t n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias length " +
                         std::to_string(bias.numel()) +
                         " does not match row width " + std::to_string(n));
  }
  const std::size_t m = x.rows();
  Tensor c = Tensor::zeros(x.shape(), any_grad({&x, &bias}));
  {
    auto xv = x.values();
    auto bv = bias.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) cv[i * n + j] = xv[i * n + j] + bv[j];
    }
  }
  if (c.requires_grad()) {
    tape.record(c, [x, bias, c, m, n]() {
      auto gc = c.grad();
      if (x.requires_grad()) Tensor(x).accumulate_grad(gc);
      if (bias.requires_grad()) {
        std::vector<double> gb(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += gc[i * n + j];
        }
        Tensor(bias).accumulate_grad(gb);
      }
    });
  }
  return c;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor c = Tensor::zeros(x.shape(), x.requires_grad());
  {
    auto xv = x.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  }
  if (c.requires_grad()) {
    // Subgradient at exactly 0 is 0.
    tape.record(c, [x, c]() {
      auto gc = c.grad();
      auto xv = x.values();
      std::vector<double> gx(gc.size());
      for (std::size_t i = 0; i < gc.size(); ++i) {
        gx[i] = xv[i] > 0.0 ? gc[i] : 0.0;
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return c;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y = Tensor::zeros(x.shape(), x.requires_grad());
  {
    auto xv = x.values();
    auto yv = y.values_mut();
    std::copy(xv.begin(), xv.end(), yv.begin());
    for (std::size_t i = 0; i < m; ++i) softmax_inplace(yv.subspan(i * n, n));
  }
  if (y.requires_grad()) {
    tape.record(y, [x, y, m, n]() {
      auto gy = y.grad();
      auto yv = y.values();
      std::vector<double> gx(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * yv[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] = yv[i * n + j] * (gy[i * n + j] - dot);
        }
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return y;
}

Tensor log_softmax_rows(Tape& tape, const Tensor& x) {
  require_rank2(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y = Tensor::zeros(x.shape(), x.requires_grad());
  {
    auto xv = x.values();
    auto yv = y.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = xv.subspan(i * n, n);
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - mx);
      const double lse = mx + std::log(sum);
      for (std::size_t j = 0; j < n; ++j) yv[i * n + j] = row[j] - lse;
    }
  }
  if (y.requires_grad()) {
    tape.record(y, [x, y, m, n]() {
      auto gy = y.grad();
      auto yv = y.values();
      std::vector<double> gx(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) gsum += gy[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] = gy[i * n + j] - std::exp(yv[i * n + j]) * gsum;
        }
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return y;
}

Tensor l2_normalize_rows(Tape& tape, const Tensor& x) {
  require_rank2(x, "l2_normalize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> norms(m);
  Tensor y = Tensor::zeros(x.shape(), x.requires_grad());
  {
    auto xv = x.values();
    auto yv = y.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      const double norm = l2_norm(xv.subspan(i * n, n));
      if (norm < 1e-12) {
        throw InputError("l2_normalize_rows: row " + std::to_string(i) +
                         " has near-zero norm");
      }
      norms[i] = norm;
      for (std::size_t j = 0; j < n; ++j) yv[i * n + j] = xv[i * n + j] / norm;
    }
  }
  if (y.requires_grad()) {
    tape.record(y, [x, y, norms, m, n]() {
      auto gy = y.grad();
      auto yv = y.values();
      std::vector<double> gx(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * yv[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] = (gy[i * n + j] - yv[i * n + j] * dot) / norms[i];
        }
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row count mismatch, " +
                           shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    total += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor c = Tensor::zeros({m, total}, needs_grad);
  {
    auto cv = c.values_mut();
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const std::size_t w = p.cols();
      auto pv = p.values();
      for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(pv.begin() + i * w, w, cv.begin() + i * total + offset);
      }
      offset += w;
    }
  }
  if (needs_grad) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape.record(c, [held, c, m, total]() {
      auto gc = c.grad();
      std::size_t offset = 0;
      for (const Tensor& p : held) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          std::vector<double> gp(m * w);
          for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(gc.begin() + i * total + offset, w, gp.begin() + i * w);
          }
          Tensor(p).accumulate_grad(gp);
        }
        offset += w;
      }
    });
  }
  return c;
}

Tensor row_sum(Tape& tape, const Tensor& x) {
  require_rank2(x, "row_sum");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor c = Tensor::zeros({m, 1}, x.requires_grad());
  {
    auto xv = x.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j];
      cv[i] = s;
    }
  }
  if (c.requires_grad()) {
    tape.record(c, [x, c, m, n]() {
      auto gc = c.grad();
      std::vector<double> gx(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] = gc[i];
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return c;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  Tensor c = Tensor::zeros({1}, x.requires_grad());
  {
    auto xv = x.values();
    double s = 0.0;
    for (double v : xv) s += v;
    c.values_mut()[0] = s;
  }
  if (c.requires_grad()) {
    tape.record(c, [x, c]() {
      const double g = c.grad()[0];
      std::vector<double> gx(x.numel(), g);
      Tensor(x).accumulate_grad(gx);
    });
  }
  return c;
}

Tensor gather_labels(Tape& tape, const Tensor& x, std::span<const int> labels) {
  require_rank2(x, "gather_labels");
  const std::size_t m = x.rows(), n = x.cols();
  if (labels.size() != m) {
    throw DimensionError("gather_labels: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n) {
      throw InputError("gather_labels: label " + std::to_string(labels[i]) +
                       " at index " + std::to_string(i) +
                       " is outside [0, " + std::to_string(n) + ")");
    }
  }
  Tensor c = Tensor::zeros({m, 1}, x.requires_grad());
  {
    auto xv = x.values();
    auto cv = c.values_mut();
    for (std::size_t i = 0; i < m; ++i) {
      cv[i] = xv[i * n + static_cast<std::size_t>(labels[i])];
    }
  }
  if (c.requires_grad()) {
    std::vector<int> held(labels.begin(), labels.end());
    tape.record(c, [x, c, held, m, n]() {
      auto gc = c.grad();
      std::vector<double> gx(m * n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        gx[i * n + static_cast<std::size_t>(held[i])] = gc[i];
      }
      Tensor(x).accumulate_grad(gx);
    });
  }
  return c;
}

}  // namespace moma
