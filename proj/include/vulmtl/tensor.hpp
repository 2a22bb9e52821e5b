#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vulmtl/errors.hpp"

namespace vulmtl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One node of the define-by-run tape. Data and gradient are dense row-major
// float64. A graph and its tensors are confined to one thread at a time;
// nothing here is synchronized.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates contributions into parent grads.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->data.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }

  std::vector<double>& data() { return n_->data; }
  const std::vector<double>& data() const { return n_->data; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  const std::vector<double>& grad() const;
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.assign(n_->data.size(), 0.0);
  }

  double item() const;

  detail::TensorNode* node() const { return n_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return n_; }

  static Tensor wrap(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorNode> n_;
};

// Leaf constructors.
Tensor zeros(Shape shape, bool requires_grad = false);
Tensor full(Shape shape, double value, bool requires_grad = false);
Tensor from_data(Shape shape, std::vector<double> data,
                 bool requires_grad = false);
Tensor scalar_tensor(double value, bool requires_grad = false);

// Elementwise and structural ops. All return fresh nodes; inputs are captured
// as parents so the graph stays alive while any result does.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // m[r x c] + v[c] per row
Tensor mul_rowvec(const Tensor& m, const Tensor& v);  // m[r x c] * v[c] per row
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor select_row(const Tensor& a, std::size_t row);
Tensor gather_rows(const Tensor& table, const std::vector<int>& rows);
// base[positions[i], :] += rows[i, :]; other rows pass through bit-exactly.
Tensor scatter_add_rows(const Tensor& base, const Tensor& rows,
                        const std::vector<int>& positions);

// axis: for 2-D tensors 0 = down columns, 1 = along rows; 1-D tensors use 0.
Tensor softmax(const Tensor& a, int axis);
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor sum(const Tensor& a);

// Scalar losses.
Tensor cross_entropy(const Tensor& logits, int target);
// Mean over unmasked rows of -(1-p_t)^gamma * log(p_t); every row of logits is
// a categorical distribution, mask[i] != 0 keeps row i.
Tensor focal_loss(const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<std::uint8_t>& mask, double gamma);
// KL(softmax(p_logits) || softmax(q_logits)) for 1-D logit vectors.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits);

// Reverse-mode sweep from a scalar loss. Gradients accumulate across calls
// until zero_grad is used.
void backward(const Tensor& loss);

}  // namespace vulmtl
