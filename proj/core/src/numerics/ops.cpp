#include "sliceroute/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sliceroute/errors.hpp"

namespace sliceroute::num {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Node& operand(Node& self, std::size_t i) { return *self.operands[i]; }

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a 2-D tensor, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename F>
std::vector<double> map_values(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return out;
}

double clamp_probability(double p) { return std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != p) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * q);
  MapMat(out.data(), m, q).noalias() = ConstMapMat(a.values().data(), m, p) * ConstMapMat(b.values().data(), p, q);
  return make_result("matmul", {m, q}, std::move(out), {a, b}, [m, p, q](Node& self) {
    Node& na = operand(self, 0);
    Node& nb = operand(self, 1);
    ConstMapMat g(self.grad.data(), m, q);
    if (na.requires_grad) {
      MapMat(na.grad.data(), m, p).noalias() += g * ConstMapMat(nb.values.data(), p, q).transpose();
    }
    if (nb.requires_grad) {
      MapMat(nb.grad.data(), p, q).noalias() += ConstMapMat(na.values.data(), m, p).transpose() * g;
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_bias");
  const std::size_t m = a.dim(0), q = a.dim(1);
  if (bias.size() != q) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " + shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < q; ++c) out[r * q + c] += bv[c];
  return make_result("add_bias", {m, q}, std::move(out), {a, bias}, [m, q](Node& self) {
    Node& na = operand(self, 0);
    Node& nb = operand(self, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    if (nb.requires_grad)
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < q; ++c) nb.grad[c] += self.grad[r * q + c];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t m = x.dim(0), p = x.dim(1), q = w.dim(1);
  if (w.dim(0) != p) {
    throw DimensionError("linear: inner dimensions differ, " + shape_string(x.shape()) + " x " +
                         shape_string(w.shape()));
  }
  if (bias.size() != q) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match " + shape_string(w.shape()));
  }
  std::vector<double> out(m * q);
  MapMat o(out.data(), m, q);
  o.noalias() = ConstMapMat(x.values().data(), m, p) * ConstMapMat(w.values().data(), p, q);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), q);
  return make_result("linear", {m, q}, std::move(out), {x, w, bias}, [m, p, q](Node& self) {
    Node& nx = operand(self, 0);
    Node& nw = operand(self, 1);
    Node& nb = operand(self, 2);
    ConstMapMat g(self.grad.data(), m, q);
    if (nx.requires_grad) MapMat(nx.grad.data(), m, p).noalias() += g * ConstMapMat(nw.values.data(), p, q).transpose();
    if (nw.requires_grad) MapMat(nw.grad.data(), p, q).noalias() += ConstMapMat(nx.values.data(), m, p).transpose() * g;
    if (nb.requires_grad)
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < q; ++c) nb.grad[c] += self.grad[r * q + c];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& n = operand(self, k);
      if (!n.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = operand(self, 0);
    Node& nb = operand(self, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = operand(self, 0);
    Node& nb = operand(self, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.values[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.values[i];
  });
}

Tensor abs(const Tensor& a) {
  return make_result("abs", a.shape(), map_values(a, [](double x) { return std::fabs(x); }), {a}, [](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double x = na.values[i];
      if (x > 0) na.grad[i] += self.grad[i];
      else if (x < 0) na.grad[i] -= self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result("scale", a.shape(), map_values(a, [factor](double x) { return x * factor; }), {a},
                     [factor](Node& self) {
                       Node& na = operand(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * factor;
                     });
}

Tensor sigmoid(const Tensor& a) {
  auto out = map_values(a, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_result("sigmoid", a.shape(), std::move(out), {a}, [](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double y = self.values[i];
      na.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& a) {
  return make_result("tanh", a.shape(), map_values(a, [](double x) { return std::tanh(x); }), {a}, [](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double y = self.values[i];
      na.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
  require_rank2(a, "scale_rows");
  const std::size_t m = a.dim(0), q = a.dim(1);
  if (factors.size() != m) throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                                                shape_string(a.shape()));
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < q; ++c) out[r * q + c] = a.values()[r * q + c] * f[r];
  return make_result("scale_rows", a.shape(), std::move(out), {a}, [f = std::move(f), q](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t r = 0; r < f.size(); ++r)
      for (std::size_t c = 0; c < q; ++c) na.grad[r * q + c] += self.grad[r * q + c] * f[r];
  });
}

Tensor softmax_temp(const Tensor& logits, double tau, std::span<const std::size_t> lengths) {
  if (!(tau > 0.0)) throw ParameterError("softmax temperature must be > 0, got " + std::to_string(tau));
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw DimensionError("softmax_temp expects rank 1 or 2, got " + shape_string(logits.shape()));
  }
  const std::size_t rows = logits.rank() == 1 ? 1 : logits.dim(0);
  const std::size_t cols = logits.rank() == 1 ? logits.dim(0) : logits.dim(1);
  if (cols == 0) throw ParameterError("softmax over an empty vector");
  std::vector<std::size_t> lens(rows, cols);
  if (!lengths.empty()) {
    if (lengths.size() != rows) throw DimensionError("softmax_temp: lengths do not match rows");
    for (std::size_t r = 0; r < rows; ++r) {
      if (lengths[r] == 0 || lengths[r] > cols) throw ParameterError("softmax_temp: row length out of range");
      lens[r] = lengths[r];
    }
  }
  auto x = logits.values();
  std::vector<double> out(logits.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = out.data() + r * cols;
    double mx = *std::max_element(xr, xr + lens[r]);
    double total = 0.0;
    for (std::size_t j = 0; j < lens[r]; ++j) total += (yr[j] = std::exp((xr[j] - mx) / tau));
    for (std::size_t j = 0; j < lens[r]; ++j) yr[j] /= total;
  }
  return make_result("softmax_temp", logits.shape(), std::move(out), {logits},
                     [lens = std::move(lens), cols, tau](Node& self) {
                       Node& na = operand(self, 0);
                       for (std::size_t r = 0; r < lens.size(); ++r) {
                         const double* y = self.values.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < lens[r]; ++j) dot += g[j] * y[j];
                         for (std::size_t j = 0; j < lens[r]; ++j) na.grad[r * cols + j] += y[j] * (g[j] - dot) / tau;
                       }
                     });
}

Tensor weighted_bce(const Tensor& pred, std::span<const double> target, std::span<const double> weights) {
  if (target.size() != pred.size() || weights.size() != pred.size()) {
    throw DimensionError("bce: prediction " + shape_string(pred.shape()) + " has " + std::to_string(pred.size()) +
                         " entries but " + std::to_string(target.size()) + " targets and " +
                         std::to_string(weights.size()) + " weights");
  }
  for (double t : target) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bce target outside [0, 1]: " + std::to_string(t));
  }
  auto p = pred.values();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (weights[i] == 0.0) continue;
    double pc = clamp_probability(p[i]);
    total += weights[i] * -(target[i] * std::log(pc) + (1.0 - target[i]) * std::log(1.0 - pc));
  }
  std::vector<double> t(target.begin(), target.end());
  std::vector<double> w(weights.begin(), weights.end());
  // The gradient is evaluated at the clamped point so saturated predictions
  // can still recover.
  return make_result("bce", {}, {total}, {pred}, [t = std::move(t), w = std::move(w)](Node& self) {
    Node& np = operand(self, 0);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (w[i] == 0.0) continue;
      double pc = clamp_probability(np.values[i]);
      np.grad[i] += g * w[i] * (pc - t[i]) / (pc * (1.0 - pc));
    }
  });
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss");
  if (pred.size() == 0) throw DimensionError("bce_loss on empty tensors");
  std::vector<double> w(pred.size(), 1.0 / static_cast<double>(pred.size()));
  return weighted_bce(pred, target.values(), w);
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result("sum", {}, {total}, {a}, [](Node& self) {
    Node& na = operand(self, 0);
    for (auto& g : na.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row counts differ, " + shape_string(parts.front().shape()) +
                                            " vs " + shape_string(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return make_result("concat_cols", {m, total}, std::move(out), parts, [widths, m, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& n = operand(self, k);
      if (n.requires_grad) {
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) n.grad[r * widths[k] + c] += self.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t q = parts.front().dim(1);
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != q) throw DimensionError("concat_rows: column counts differ, " +
                                            shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result("concat_rows", {rows, q}, std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& op : self.operands) {
      if (op->requires_grad)
        for (std::size_t i = 0; i < op->grad.size(); ++i) op->grad[i] += self.grad[off + i];
      off += op->values.size();
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.dim(0), q = a.dim(1);
  if (start + count > q) throw DimensionError("slice_cols out of range for " + shape_string(a.shape()));
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(a.values().data() + r * q + start, count, out.data() + r * count);
  return make_result("slice_cols", {m, count}, std::move(out), {a}, [m, q, start, count](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) na.grad[r * q + start + c] += self.grad[r * count + c];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank2(a, "slice_rows");
  const std::size_t q = a.dim(1);
  if (start + count > a.dim(0)) throw DimensionError("slice_rows out of range for " + shape_string(a.shape()));
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(start * q),
                          a.values().begin() + static_cast<std::ptrdiff_t>((start + count) * q));
  return make_result("slice_rows", {count, q}, std::move(out), {a}, [start, q](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[start * q + i] += self.grad[i];
  });
}

Tensor repeat_rows(const Tensor& a, std::size_t n) {
  require_rank2(a, "repeat_rows");
  const std::size_t b = a.dim(0), q = a.dim(1);
  std::vector<double> out(b * n * q);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < n; ++j) std::copy_n(a.values().data() + r * q, q, out.data() + (r * n + j) * q);
  return make_result("repeat_rows", {b * n, q}, std::move(out), {a}, [b, n, q](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < q; ++c) na.grad[r * q + c] += self.grad[(r * n + j) * q + c];
  });
}

Tensor segment_mean(const Tensor& a, std::size_t n) {
  require_rank2(a, "segment_mean");
  if (n == 0 || a.dim(0) % n != 0) {
    throw DimensionError("segment_mean: " + shape_string(a.shape()) + " is not a multiple of " + std::to_string(n));
  }
  const std::size_t b = a.dim(0) / n, q = a.dim(1);
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> out(b * q, 0.0);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < q; ++c) out[r * q + c] += a.values()[(r * n + j) * q + c];
  for (auto& v : out) v *= inv;
  return make_result("segment_mean", {b, q}, std::move(out), {a}, [b, n, q, inv](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < q; ++c) na.grad[(r * n + j) * q + c] += self.grad[r * q + c] * inv;
  });
}

Tensor transpose_blocks(const Tensor& a, std::size_t block_rows) {
  require_rank2(a, "transpose_blocks");
  if (block_rows == 0 || a.dim(0) % block_rows != 0) {
    throw DimensionError("transpose_blocks: " + shape_string(a.shape()) + " is not a stack of " +
                         std::to_string(block_rows) + "-row blocks");
  }
  const std::size_t r = block_rows, c = a.dim(1), b = a.dim(0) / r;
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[(k * c + j) * r + i] = a.values()[(k * r + i) * c + j];
  return make_result("transpose_blocks", {b * c, r}, std::move(out), {a}, [b, r, c](Node& self) {
    Node& na = operand(self, 0);
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) na.grad[(k * r + i) * c + j] += self.grad[(k * c + j) * r + i];
  });
}

Tensor mix_blocks(const Tensor& blocks, const Tensor& weights, std::size_t n) {
  require_rank2(blocks, "mix_blocks");
  require_rank2(weights, "mix_blocks");
  const std::size_t b = weights.dim(0), k = weights.dim(1);
  if (n == 0 || blocks.dim(0) != b * n || k == 0 || blocks.dim(1) % k != 0) {
    throw DimensionError("mix_blocks: blocks " + shape_string(blocks.shape()) + " incompatible with weights " +
                         shape_string(weights.shape()) + " and n=" + std::to_string(n));
  }
  const std::size_t d = blocks.dim(1) / k, width = k * d;
  auto x = blocks.values();
  auto w = weights.values();
  std::vector<double> out(b * n * d, 0.0);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t j = 0; j < n; ++j) {
      const double* row = x.data() + (s * n + j) * width;
      double* o = out.data() + (s * n + j) * d;
      for (std::size_t i = 0; i < k; ++i) {
        const double wi = w[s * k + i];
        for (std::size_t c = 0; c < d; ++c) o[c] += wi * row[i * d + c];
      }
    }
  return make_result("mix_blocks", {b * n, d}, std::move(out), {blocks, weights}, [b, n, k, d, width](Node& self) {
    Node& nx = operand(self, 0);
    Node& nw = operand(self, 1);
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t j = 0; j < n; ++j) {
        const double* g = self.grad.data() + (s * n + j) * d;
        const std::size_t row = (s * n + j) * width;
        for (std::size_t i = 0; i < k; ++i) {
          if (nx.requires_grad) {
            const double wi = nw.values[s * k + i];
            for (std::size_t c = 0; c < d; ++c) nx.grad[row + i * d + c] += wi * g[c];
          }
          if (nw.requires_grad) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += g[c] * nx.values[row + i * d + c];
            nw.grad[s * k + i] += dot;
          }
        }
      }
  });
}

Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<std::size_t>>& ids) {
  require_rank2(table, "embedding_bag");
  const std::size_t vocab = table.dim(0), e = table.dim(1), m = ids.size();
  std::vector<double> out(m * e, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (ids[r].empty()) continue;
    const double inv = 1.0 / static_cast<double>(ids[r].size());
    for (auto id : ids[r]) {
      if (id >= vocab) {
        throw IndexError("embedding id " + std::to_string(id) + " out of range for table of " + std::to_string(vocab) +
                         " rows");
      }
      for (std::size_t c = 0; c < e; ++c) out[r * e + c] += inv * table.values()[id * e + c];
    }
  }
  return make_result("embedding_bag", {m, e}, std::move(out), {table}, [ids, e](Node& self) {
    Node& nt = operand(self, 0);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r].empty()) continue;
      const double inv = 1.0 / static_cast<double>(ids[r].size());
      for (auto id : ids[r])
        for (std::size_t c = 0; c < e; ++c) nt.grad[id * e + c] += inv * self.grad[r * e + c];
    }
  });
}

}  // namespace sliceroute::num
