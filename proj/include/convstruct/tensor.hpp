#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "convstruct/mask.hpp"
#include "convstruct/random.hpp"

namespace convstruct::tk {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the computation graph. `backward` pushes this node's grad
// into its parents; leaves (parameters) have no backward function.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
};

// Rank-2 dense tensor with reverse-mode gradient tracking. Vectors are 1 x n
// rows, scalars 1 x 1. Copies share the underlying node.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::span<const double> values,
                    bool requires_grad = false);

  std::size_t rows() const { return static_cast<std::size_t>(node_->value.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(node_->value.cols()); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }
  std::size_t numel() const { return rows() * cols(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value(r, c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.resize(0, 0); }

  // A constant tensor holding a copy of this value.
  Tensor detach() const { return Tensor(node_->value, false); }

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node);

 private:
  NodePtr node_;
};

// Populates grads of every requires_grad leaf reachable from `loss`.
// Gradients accumulate; a graph may be consumed only once (StaleGraph).
void backward(const Tensor& loss);

// --- forward ops ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Elementwise; a 1 x n right operand broadcasts over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Row softmax restricted to cells where mask(i, j) is set; masked cells get
// exactly zero weight. Requires mask rows/cols to match x.
Tensor masked_softmax_rows(const Tensor& x, const AttentionMask& mask);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);
// Inverted dropout; identity when !train or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, Rng* rng);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Adds `row_value` (1 x n) to row `index` only.
Tensor add_to_row(const Tensor& x, std::size_t index, const Tensor& row_value);

// softmax(Q K^T / sqrt(d)) V with the mask applied to the score matrix.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask& mask);

// Loss kernels over a column (L x 1) or row (1 x L) of logits.
// Softmax cross-entropy of `positive` among the first `candidates` logits.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t candidates,
                             std::size_t positive);
// Summed binary cross-entropy with logits over all entries.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);

}  // namespace convstruct::tk
