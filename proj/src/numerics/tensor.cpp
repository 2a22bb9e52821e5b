#include "vulmtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "vulmtl/kernels.hpp"

namespace vulmtl {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

NodePtr new_node(Shape shape, std::vector<double> data) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop) {
  auto n = new_node(std::move(shape), std::move(data));
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(op) + ": expected 2-D, got " +
                         shape_str(t.shape()));
}

// Accumulate src into parent's grad if it participates in the sweep.
bool wants_grad(const NodePtr& p) { return p->requires_grad; }

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return n_->data[0];
}

Tensor zeros(Shape shape, bool requires_grad) {
  auto n = new_node(shape, std::vector<double>(shape_size(shape), 0.0));
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor full(Shape shape, double value, bool requires_grad) {
  auto n = new_node(shape, std::vector<double>(shape_size(shape), value));
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size())
    throw DimensionError("from_data: shape " + shape_str(shape) +
                         " does not match " + std::to_string(data.size()) +
                         " values");
  auto n = new_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor scalar_tensor(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto &da = a.data(), &db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = self.parents[side];
      if (!wants_grad(p)) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto &da = a.data(), &db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto &da = a.data(), &db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->data[i];
    }
    if (wants_grad(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto& da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * c;
  return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i] * c;
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  check_2d(m, "add_rowvec");
  if (v.shape().size() != 1 || v.dim(0) != m.dim(1))
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) +
                         " does not match matrix " + shape_str(m.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<double> out(m.size());
  const auto &dm = m.data(), &dv = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = dm[i * c + j] + dv[j];
  return make_op(m.shape(), std::move(out), {m, v}, [r, c](TensorNode& self) {
    auto& pm = self.parents[0];
    auto& pv = self.parents[1];
    if (wants_grad(pm)) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pm->grad[i] += self.grad[i];
    }
    if (wants_grad(pv)) {
      pv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          pv->grad[j] += self.grad[i * c + j];
    }
  });
}

Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  check_2d(m, "mul_rowvec");
  if (v.shape().size() != 1 || v.dim(0) != m.dim(1))
    throw DimensionError("mul_rowvec: vector " + shape_str(v.shape()) +
                         " does not match matrix " + shape_str(m.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<double> out(m.size());
  const auto &dm = m.data(), &dv = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = dm[i * c + j] * dv[j];
  return make_op(m.shape(), std::move(out), {m, v}, [r, c](TensorNode& self) {
    auto& pm = self.parents[0];
    auto& pv = self.parents[1];
    if (wants_grad(pm)) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          pm->grad[i * c + j] += self.grad[i * c + j] * pv->data[j];
    }
    if (wants_grad(pv)) {
      pv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          pv->grad[j] += self.grad[i * c + j] * pm->data[i * c + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op({m, n}, std::move(out), {a, b},
                 [m, k, n](TensorNode& self) {
                   auto& pa = self.parents[0];
                   auto& pb = self.parents[1];
                   if (wants_grad(pa)) {
                     pa->ensure_grad();
                     // dA += dC * B^T
                     kernels::matmul_nt(self.grad.data(), pb->data.data(),
                                        pa->grad.data(), m, n, k, true);
                   }
                   if (wants_grad(pb)) {
                     pb->ensure_grad();
                     // dB += A^T * dC
                     kernels::matmul_tn(pa->data.data(), self.grad.data(),
                                        pb->grad.data(), k, m, n, true);
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  const auto& da = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = da[i * c + j];
  return make_op({c, r}, std::move(out), {a}, [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        p->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  return make_op(std::move(shape), a.data(), {a}, [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  check_2d(a, "slice_cols");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (start + len > c)
    throw IndexError("slice_cols: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " +
                     std::to_string(c) + " columns");
  std::vector<double> out(r * len);
  const auto& da = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j)
      out[i * len + j] = da[i * c + start + j];
  return make_op({r, len}, std::move(out), {a},
                 [r, c, start, len](TensorNode& self) {
                   auto& p = self.parents[0];
                   if (!wants_grad(p)) return;
                   p->ensure_grad();
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < len; ++j)
                       p->grad[i * c + start + j] += self.grad[i * len + j];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_cols");
    if (p.dim(0) != r) throw DimensionError("concat_cols: row count mismatch");
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.dim(1);
    widths.push_back(c);
    const auto& src = p.data();
    for (std::size_t i = 0; i < r; ++i)
      std::memcpy(out.data() + i * total + off, src.data() + i * c,
                  c * sizeof(double));
    off += c;
  }
  return make_op({r, total}, std::move(out), parts,
                 [r, total, widths](TensorNode& self) {
                   std::size_t off2 = 0;
                   for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                     auto& p = self.parents[pi];
                     const std::size_t c = widths[pi];
                     if (wants_grad(p)) {
                       p->ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           p->grad[i * c + j] +=
                               self.grad[i * total + off2 + j];
                     }
                     off2 += c;
                   }
                 });
}

Tensor select_row(const Tensor& a, std::size_t row) {
  check_2d(a, "select_row");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (row >= r) throw IndexError("select_row: row " + std::to_string(row));
  std::vector<double> out(a.data().begin() + row * c,
                          a.data().begin() + (row + 1) * c);
  return make_op({c}, std::move(out), {a}, [row, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    for (std::size_t j = 0; j < c; ++j)
      p->grad[row * c + j] += self.grad[j];
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& rows) {
  check_2d(table, "gather_rows");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(rows.size() * d);
  const auto& src = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || static_cast<std::size_t>(r) >= v)
      throw IndexError("gather_rows: index " + std::to_string(r) +
                       " out of " + std::to_string(v));
    std::memcpy(out.data() + i * d, src.data() + static_cast<std::size_t>(r) * d,
                d * sizeof(double));
  }
  auto idx = rows;
  return make_op({rows.size(), d}, std::move(out), {table},
                 [idx, d](TensorNode& self) {
                   auto& p = self.parents[0];
                   if (!wants_grad(p)) return;
                   p->ensure_grad();
                   for (std::size_t i = 0; i < idx.size(); ++i) {
                     double* dst = p->grad.data() +
                                   static_cast<std::size_t>(idx[i]) * d;
                     const double* g = self.grad.data() + i * d;
                     for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                   }
                 });
}

Tensor scatter_add_rows(const Tensor& base, const Tensor& rows,
                        const std::vector<int>& positions) {
  check_2d(base, "scatter_add_rows");
  check_2d(rows, "scatter_add_rows");
  const std::size_t t = base.dim(0), d = base.dim(1);
  if (rows.dim(1) != d)
    throw DimensionError("scatter_add_rows: row width " +
                         shape_str(rows.shape()) + " vs base " +
                         shape_str(base.shape()));
  if (rows.dim(0) != positions.size())
    throw DimensionError("scatter_add_rows: " + std::to_string(positions.size()) +
                         " positions for " + std::to_string(rows.dim(0)) +
                         " rows");
  std::vector<double> out = base.data();
  const auto& src = rows.data();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || static_cast<std::size_t>(p) >= t)
      throw IndexError("scatter_add_rows: position " + std::to_string(p));
    double* dst = out.data() + static_cast<std::size_t>(p) * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[i * d + j];
  }
  auto pos = positions;
  return make_op(base.shape(), std::move(out), {base, rows},
                 [pos, d](TensorNode& self) {
                   auto& pb = self.parents[0];
                   auto& pr = self.parents[1];
                   if (wants_grad(pb)) {
                     pb->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       pb->grad[i] += self.grad[i];
                   }
                   if (wants_grad(pr)) {
                     pr->ensure_grad();
                     for (std::size_t i = 0; i < pos.size(); ++i) {
                       const double* g = self.grad.data() +
                                         static_cast<std::size_t>(pos[i]) * d;
                       for (std::size_t j = 0; j < d; ++j)
                         pr->grad[i * d + j] += g[j];
                     }
                   }
                 });
}

namespace {

// In-place stable softmax of one stride-1 slice.
void softmax_slice(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
}

void softmax_backward_slice(const double* y, const double* gy, double* gx,
                            std::size_t n, std::size_t stride) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += gy[i * stride] * y[i * stride];
  for (std::size_t i = 0; i < n; ++i)
    gx[i * stride] += y[i * stride] * (gy[i * stride] - dot);
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  const auto& sh = a.shape();
  if (sh.size() == 1) {
    if (axis != 0) throw DimensionError("softmax: 1-D tensor needs axis 0");
    std::vector<double> out(a.size());
    softmax_slice(a.data().data(), out.data(), a.size());
    return make_op(sh, std::move(out), {a}, [](TensorNode& self) {
      auto& p = self.parents[0];
      if (!wants_grad(p)) return;
      p->ensure_grad();
      softmax_backward_slice(self.data.data(), self.grad.data(),
                             p->grad.data(), self.data.size(), 1);
    });
  }
  if (sh.size() != 2 || (axis != 0 && axis != 1))
    throw DimensionError("softmax: unsupported shape " + shape_str(sh) +
                         " axis " + std::to_string(axis));
  const std::size_t r = sh[0], c = sh[1];
  std::vector<double> out(a.size());
  const auto& src = a.data();
  if (axis == 1) {
    for (std::size_t i = 0; i < r; ++i)
      softmax_slice(src.data() + i * c, out.data() + i * c, c);
  } else {
    std::vector<double> col(r), oc(r);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < r; ++i) col[i] = src[i * c + j];
      softmax_slice(col.data(), oc.data(), r);
      for (std::size_t i = 0; i < r; ++i) out[i * c + j] = oc[i];
    }
  }
  return make_op(sh, std::move(out), {a}, [r, c, axis](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    if (axis == 1) {
      for (std::size_t i = 0; i < r; ++i)
        softmax_backward_slice(self.data.data() + i * c,
                               self.grad.data() + i * c, p->grad.data() + i * c,
                               c, 1);
    } else {
      for (std::size_t j = 0; j < c; ++j)
        softmax_backward_slice(self.data.data() + j, self.grad.data() + j,
                               p->grad.data() + j, r, c);
    }
  });
}

Tensor gelu(const Tensor& a) {
  static const double kInvSqrt2 = 0.70710678118654752440;
  static const double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(a.size());
  const auto& x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = p->data[i];
      const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      p->grad[i] += self.grad[i] * (phi + x * pdf);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  check_2d(x, "layer_norm");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c})
    throw DimensionError("layer_norm: gain/bias must be [" +
                         std::to_string(c) + "]");
  std::vector<double> out(x.size());
  const auto &xd = x.data(), &gd = gain.data(), &bd = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = row[j] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = gd[j] * (row[j] - mean) * inv + bd[j];
  }
  return make_op(x.shape(), std::move(out), {x, gain, bias},
                 [r, c, eps](TensorNode& self) {
                   auto& px = self.parents[0];
                   auto& pg = self.parents[1];
                   auto& pb = self.parents[2];
                   const bool wx = wants_grad(px), wg = wants_grad(pg),
                              wb = wants_grad(pb);
                   if (wx) px->ensure_grad();
                   if (wg) pg->ensure_grad();
                   if (wb) pb->ensure_grad();
                   std::vector<double> xh(c), gdy(c);
                   for (std::size_t i = 0; i < r; ++i) {
                     const double* row = px->data.data() + i * c;
                     const double* gy = self.grad.data() + i * c;
                     double mean = 0.0;
                     for (std::size_t j = 0; j < c; ++j) mean += row[j];
                     mean /= static_cast<double>(c);
                     double var = 0.0;
                     for (std::size_t j = 0; j < c; ++j) {
                       const double dv = row[j] - mean;
                       var += dv * dv;
                     }
                     var /= static_cast<double>(c);
                     const double inv = 1.0 / std::sqrt(var + eps);
                     double m1 = 0.0, m2 = 0.0;
                     for (std::size_t j = 0; j < c; ++j) {
                       xh[j] = (row[j] - mean) * inv;
                       gdy[j] = pg->data[j] * gy[j];
                       m1 += gdy[j];
                       m2 += gdy[j] * xh[j];
                     }
                     m1 /= static_cast<double>(c);
                     m2 /= static_cast<double>(c);
                     if (wx) {
                       double* gx = px->grad.data() + i * c;
                       for (std::size_t j = 0; j < c; ++j)
                         gx[j] += (gdy[j] - m1 - xh[j] * m2) * inv;
                     }
                     if (wg)
                       for (std::size_t j = 0; j < c; ++j)
                         pg->grad[j] += gy[j] * xh[j];
                     if (wb)
                       for (std::size_t j = 0; j < c; ++j) pb->grad[j] += gy[j];
                   }
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op({1}, {s}, {a}, [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

namespace {

// log-softmax of a 1-D slice; returns log(sum(exp)) shifted form.
void log_softmax_slice(const double* x, double* lp, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < n; ++i) lp[i] = x[i] - lse;
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.shape().size() != 1)
    throw DimensionError("cross_entropy: logits must be 1-D, got " +
                         shape_str(logits.shape()));
  const std::size_t n = logits.size();
  if (target < 0 || static_cast<std::size_t>(target) >= n)
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " out of " + std::to_string(n) + " classes");
  std::vector<double> lp(n);
  log_softmax_slice(logits.data().data(), lp.data(), n);
  const double loss = -lp[static_cast<std::size_t>(target)];
  return make_op({1}, {loss}, {logits}, [target, n](TensorNode& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    p->ensure_grad();
    std::vector<double> lp2(n);
    log_softmax_slice(p->data.data(), lp2.data(), n);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::exp(lp2[i]);
      if (i == static_cast<std::size_t>(target)) d -= 1.0;
      p->grad[i] += g * d;
    }
  });
}

Tensor focal_loss(const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<std::uint8_t>& mask, double gamma) {
  check_2d(logits, "focal_loss");
  const std::size_t r = logits.dim(0), c = logits.dim(1);
  if (targets.size() != r || mask.size() != r)
    throw DimensionError("focal_loss: " + std::to_string(r) + " rows vs " +
                         std::to_string(targets.size()) + " targets, " +
                         std::to_string(mask.size()) + " mask entries");
  if (gamma < 0.0) throw ContractError("focal_loss: gamma must be >= 0");
  std::size_t kept = 0;
  for (auto m : mask) kept += m ? 1 : 0;
  if (kept == 0)
    throw DegenerateInputError("focal_loss: every position is masked out");
  std::vector<double> lp(c);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw IndexError("focal_loss: target " + std::to_string(t) + " at row " +
                       std::to_string(i));
    log_softmax_slice(logits.data().data() + i * c, lp.data(), c);
    const double lpt = lp[static_cast<std::size_t>(t)];
    const double pt = std::exp(lpt);
    total += -std::pow(1.0 - pt, gamma) * lpt;
  }
  const double loss = total / static_cast<double>(kept);
  auto tg = targets;
  auto mk = mask;
  return make_op(
      {1}, {loss}, {logits}, [tg, mk, gamma, r, c, kept](TensorNode& self) {
        auto& p = self.parents[0];
        if (!wants_grad(p)) return;
        p->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(kept);
        std::vector<double> lp2(c);
        for (std::size_t i = 0; i < r; ++i) {
          if (!mk[i]) continue;
          log_softmax_slice(p->data.data() + i * c, lp2.data(), c);
          const std::size_t t = static_cast<std::size_t>(tg[i]);
          const double lpt = lp2[t];
          const double pt = std::exp(lpt);
          const double q = 1.0 - pt;
          // d/dz_j of -(1-p_t)^g * log p_t  =  coef * (1[j==t] - p_j)
          const double coef =
              (gamma > 0.0 ? gamma * std::pow(q, gamma - 1.0) * pt * lpt : 0.0) -
              std::pow(q, gamma);
          for (std::size_t j = 0; j < c; ++j) {
            const double pj = std::exp(lp2[j]);
            const double ind = (j == t) ? 1.0 : 0.0;
            p->grad[i * c + j] += g * coef * (ind - pj);
          }
        }
      });
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.shape().size() != 1 || p_logits.shape() != q_logits.shape())
    throw DimensionError("kl_divergence: need matching 1-D logits, got " +
                         shape_str(p_logits.shape()) + " vs " +
                         shape_str(q_logits.shape()));
  const std::size_t n = p_logits.size();
  std::vector<double> lp(n), lq(n);
  log_softmax_slice(p_logits.data().data(), lp.data(), n);
  log_softmax_slice(q_logits.data().data(), lq.data(), n);
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return make_op({1}, {kl}, {p_logits, q_logits}, [n](TensorNode& self) {
    auto& pp = self.parents[0];
    auto& pq = self.parents[1];
    std::vector<double> lp2(n), lq2(n);
    log_softmax_slice(pp->data.data(), lp2.data(), n);
    log_softmax_slice(pq->data.data(), lq2.data(), n);
    double kl2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      kl2 += std::exp(lp2[i]) * (lp2[i] - lq2[i]);
    const double g = self.grad[0];
    if (wants_grad(pp)) {
      pp->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        pp->grad[i] += g * std::exp(lp2[i]) * ((lp2[i] - lq2[i]) - kl2);
    }
    if (wants_grad(pq)) {
      pq->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        pq->grad[i] += g * (std::exp(lq2[i]) - std::exp(lp2[i]));
    }
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined tensor");
  if (loss.size() != 1)
    throw ContractError("backward: loss has shape " +
                        shape_str(loss.shape()) + ", expected a scalar");
  TensorNode* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS: parents land before children, so the reversed
  // list runs the sweep root-first.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* par = node->parents[next].get();
      ++next;
      if (par->requires_grad && !visited.count(par)) {
        visited.insert(par);
        stack.emplace_back(par, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch from earlier sweeps; clear them so a
  // repeated backward over one graph accumulates only into the leaves.
  for (TensorNode* node : order)
    if (node->backprop && !node->grad.empty())
      node->grad.assign(node->data.size(), 0.0);

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop && node->grad.size() == node->data.size())
      node->backprop(*node);
  }
}

}  // namespace vulmtl
