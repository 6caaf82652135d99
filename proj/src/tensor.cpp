#include "convstruct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "convstruct/error.hpp"

namespace convstruct::tk {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
}

void accumulate(Node& node, const Matrix& g) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

template <typename Fn>
Tensor make_op(Matrix value, std::vector<NodePtr> parents, Fn&& fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::forward<Fn>(fn);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeError, std::string(op) + ": " +
                                            shape_str(a.value()) + " vs " +
                                            shape_str(b.value()));
  }
}

}  // namespace

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(Matrix::Zero(static_cast<long>(rows), static_cast<long>(cols)),
                requires_grad);
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m));
}

Tensor Tensor::row(std::span<const double> values, bool requires_grad) {
  Matrix m(1, static_cast<long>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<long>(i)) = values[i];
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::from_node(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw Error(ErrorKind::kShapeError,
                "item() on tensor of shape " + shape_str(node_->value));
  }
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

void backward(const Tensor& loss) {
  const NodePtr& root = loss.node();
  if (root->value.size() != 1) {
    throw Error(ErrorKind::kShapeError, "backward() needs a scalar loss, got " +
                                            shape_str(root->value));
  }
  if (root->consumed) {
    throw Error(ErrorKind::kStaleGraph,
                "backward() already ran on this graph; rebuild the forward pass");
  }
  if (!root->requires_grad) {
    root->consumed = true;
    return;
  }

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
  // Release the graph: interior grads and closures are no longer needed.
  for (Node* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      if (node != root.get()) node->grad.resize(0, 0);
    }
    node->consumed = node->consumed || node == root.get();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kShapeError,
                "matmul " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeError, "matmul_nt " + shape_str(a.value()) +
                                            " x " + shape_str(b.value()) + "^T");
  }
  Matrix out = a.value() * b.value().transpose();
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value);
    if (pb.requires_grad) accumulate(pb, self.grad.transpose() * pa.value);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.cols() == b.cols() && b.rows() == 1 && a.rows() != 1) {
    Matrix out = a.value().rowwise() + b.value().row(0);
    return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
      accumulate(*self.parents[0], self.grad);
      accumulate(*self.parents[1], self.grad.colwise().sum());
    });
  }
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.value() * s;
  return make_op(std::move(out), {a.node()}, [s](Node& self) {
    accumulate(*self.parents[0], self.grad * s);
  });
}

Tensor gelu(const Tensor& x) {
  const Matrix& xv = x.value();
  Matrix out = xv.unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    Matrix d = xv.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      return cdf + v * pdf;
    });
    accumulate(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Tensor tanh(const Tensor& x) {
  Matrix out = x.value().array().tanh().matrix();
  return make_op(out, {x.node()}, [y = out](Node& self) {
    Matrix d = (1.0 - y.array().square()).matrix();
    accumulate(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    accumulate(*self.parents[0],
               Matrix::Constant(xv.rows(), xv.cols(), self.grad(0, 0)));
  });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rows() == 0) throw Error(ErrorKind::kShapeError, "mean_rows of empty");
  Matrix out = x.value().colwise().mean();
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    const auto n = self.parents[0]->value.rows();
    Matrix g = self.grad.replicate(n, 1) / static_cast<double>(n);
    accumulate(*self.parents[0], g);
  });
}

namespace {

void softmax_backward(Node& self, const Matrix& y) {
  Matrix gy = self.grad.cwiseProduct(y);
  Eigen::VectorXd dot = gy.rowwise().sum();
  Matrix dx = gy - (y.array().colwise() * dot.array()).matrix();
  accumulate(*self.parents[0], dx);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (long i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    y.row(i) = (xv.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return make_op(y, {x.node()},
                 [y](Node& self) { softmax_backward(self, y); });
}

Tensor masked_softmax_rows(const Tensor& x, const AttentionMask& mask) {
  const Matrix& xv = x.value();
  if (static_cast<std::size_t>(xv.rows()) != mask.size() ||
      static_cast<std::size_t>(xv.cols()) != mask.size()) {
    throw Error(ErrorKind::kShapeError, "mask of size " +
                                            std::to_string(mask.size()) +
                                            " vs scores " + shape_str(xv));
  }
  Matrix y = Matrix::Zero(xv.rows(), xv.cols());
  for (long i = 0; i < xv.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (long j = 0; j < xv.cols(); ++j) {
      if (mask.allowed(i, j)) m = std::max(m, xv(i, j));
    }
    if (m == -std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::kMaskError,
                  "mask row " + std::to_string(i) + " has no attendable cell");
    }
    double z = 0.0;
    for (long j = 0; j < xv.cols(); ++j) {
      if (mask.allowed(i, j)) {
        y(i, j) = std::exp(xv(i, j) - m);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  return make_op(y, {x.node()},
                 [y](Node& self) { softmax_backward(self, y); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const Matrix& xv = x.value();
  const long n = xv.cols();
  if (gamma.rows() != 1 || static_cast<long>(gamma.cols()) != n ||
      beta.rows() != 1 || static_cast<long>(beta.cols()) != n) {
    throw Error(ErrorKind::kShapeError, "layer_norm affine shape mismatch");
  }
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_sigma(xv.rows());
  for (long i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const auto centered = (xv.row(i).array() - mu);
    const double var = centered.square().mean();
    inv_sigma(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (centered * inv_sigma(i)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return make_op(std::move(out), {x.node(), gamma.node(), beta.node()},
                 [xhat, inv_sigma](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   if (pg.requires_grad) {
                     accumulate(pg, self.grad.cwiseProduct(xhat).colwise().sum());
                   }
                   if (pb.requires_grad) {
                     accumulate(pb, self.grad.colwise().sum());
                   }
                   if (px.requires_grad) {
                     Matrix dxhat =
                         (self.grad.array().rowwise() * pg.value.row(0).array())
                             .matrix();
                     const double n = static_cast<double>(dxhat.cols());
                     Matrix dx(dxhat.rows(), dxhat.cols());
                     for (long i = 0; i < dxhat.rows(); ++i) {
                       const double m1 = dxhat.row(i).sum() / n;
                       const double m2 =
                           dxhat.row(i).cwiseProduct(xhat.row(i)).sum() / n;
                       dx.row(i) = inv_sigma(i) *
                                   (dxhat.row(i).array() - m1 -
                                    xhat.row(i).array() * m2)
                                       .matrix();
                     }
                     accumulate(px, dx);
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng* rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw Error(ErrorKind::kInvalidConfig, "dropout p must be < 1");
  if (rng == nullptr) {
    throw Error(ErrorKind::kInvalidConfig, "dropout in train mode needs an rng");
  }
  const double keep = 1.0 / (1.0 - p);
  Matrix m(x.value().rows(), x.value().cols());
  for (long i = 0; i < m.size(); ++i) {
    m.data()[i] = bernoulli(*rng, p) ? 0.0 : keep;
  }
  Matrix out = x.value().cwiseProduct(m);
  return make_op(std::move(out), {x.node()}, [m](Node& self) {
    accumulate(*self.parents[0], self.grad.cwiseProduct(m));
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.cols()) {
    throw Error(ErrorKind::kShapeError, "slice_cols out of range");
  }
  Matrix out = x.value().middleCols(static_cast<long>(start),
                                    static_cast<long>(count));
  return make_op(std::move(out), {x.node()}, [start, count](Node& self) {
    Node& px = *self.parents[0];
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    g.middleCols(static_cast<long>(start), static_cast<long>(count)) = self.grad;
    accumulate(px, g);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeError, "concat of nothing");
  const long rows = static_cast<long>(parts[0].rows());
  long cols = 0;
  std::vector<NodePtr> parents;
  std::vector<long> widths;
  for (const auto& p : parts) {
    if (static_cast<long>(p.rows()) != rows) {
      throw Error(ErrorKind::kShapeError, "concat_cols row mismatch");
    }
    cols += static_cast<long>(p.cols());
    widths.push_back(static_cast<long>(p.cols()));
    parents.push_back(p.node());
  }
  Matrix out(rows, cols);
  long at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, static_cast<long>(p.cols())) = p.value();
    at += static_cast<long>(p.cols());
  }
  return make_op(std::move(out), std::move(parents), [widths](Node& self) {
    long at = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& pk = *self.parents[k];
      if (pk.requires_grad) accumulate(pk, self.grad.middleCols(at, widths[k]));
      at += widths[k];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeError, "concat of nothing");
  const long cols = static_cast<long>(parts[0].cols());
  long rows = 0;
  std::vector<NodePtr> parents;
  std::vector<long> heights;
  for (const auto& p : parts) {
    if (static_cast<long>(p.cols()) != cols) {
      throw Error(ErrorKind::kShapeError, "concat_rows column mismatch");
    }
    rows += static_cast<long>(p.rows());
    heights.push_back(static_cast<long>(p.rows()));
    parents.push_back(p.node());
  }
  Matrix out(rows, cols);
  long at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, static_cast<long>(p.rows())) = p.value();
    at += static_cast<long>(p.rows());
  }
  return make_op(std::move(out), std::move(parents), [heights](Node& self) {
    long at = 0;
    for (std::size_t k = 0; k < heights.size(); ++k) {
      Node& pk = *self.parents[k];
      if (pk.requires_grad) accumulate(pk, self.grad.middleRows(at, heights[k]));
      at += heights[k];
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  Matrix out(static_cast<long>(ids.size()), table.value().cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= table.rows()) {
      throw Error(ErrorKind::kShapeError, "gather_rows id " +
                                              std::to_string(ids[r]) +
                                              " out of range");
    }
    out.row(static_cast<long>(r)) = table.value().row(static_cast<long>(ids[r]));
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_op(std::move(out), {table.node()}, [idx](Node& self) {
    Node& pt = *self.parents[0];
    if (pt.grad.size() == 0) {
      pt.grad = Matrix::Zero(pt.value.rows(), pt.value.cols());
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      pt.grad.row(static_cast<long>(idx[r])) += self.grad.row(static_cast<long>(r));
    }
  });
}

Tensor add_to_row(const Tensor& x, std::size_t index, const Tensor& row_value) {
  if (index >= x.rows() || row_value.rows() != 1 ||
      row_value.cols() != x.cols()) {
    throw Error(ErrorKind::kShapeError, "add_to_row shape mismatch");
  }
  Matrix out = x.value();
  out.row(static_cast<long>(index)) += row_value.value().row(0);
  return make_op(std::move(out), {x.node(), row_value.node()},
                 [index](Node& self) {
                   accumulate(*self.parents[0], self.grad);
                   accumulate(*self.parents[1],
                              self.grad.row(static_cast<long>(index)));
                 });
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask& mask) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw Error(ErrorKind::kShapeError, "masked_attention operand mismatch");
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor scores = scale(matmul_nt(q, k), s);
  Tensor weights = masked_softmax_rows(scores, mask);
  return matmul(weights, v);
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t candidates,
                             std::size_t positive) {
  const Matrix& lv = logits.value();
  if (lv.rows() != 1 && lv.cols() != 1) {
    throw Error(ErrorKind::kShapeError, "logits must be a vector");
  }
  if (candidates == 0 || candidates > static_cast<std::size_t>(lv.size()) ||
      positive >= candidates) {
    throw Error(ErrorKind::kInvalidLabel, "positive index outside candidates");
  }
  const double* t = lv.data();
  double m = t[0];
  for (std::size_t i = 1; i < candidates; ++i) m = std::max(m, t[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < candidates; ++i) z += std::exp(t[i] - m);
  const double lse = m + std::log(z);
  Matrix out(1, 1);
  out(0, 0) = lse - t[positive];
  return make_op(std::move(out), {logits.node()},
                 [candidates, positive, lse](Node& self) {
                   Node& pl = *self.parents[0];
                   Matrix g = Matrix::Zero(pl.value.rows(), pl.value.cols());
                   const double up = self.grad(0, 0);
                   for (std::size_t i = 0; i < candidates; ++i) {
                     g.data()[i] = up * std::exp(pl.value.data()[i] - lse);
                   }
                   g.data()[positive] -= up;
                   accumulate(pl, g);
                 });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  const Matrix& lv = logits.value();
  if ((lv.rows() != 1 && lv.cols() != 1) ||
      static_cast<std::size_t>(lv.size()) != labels.size()) {
    throw Error(ErrorKind::kShapeError, "bce logits/labels size mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double t = lv.data()[i];
    loss += std::max(t, 0.0) - t * labels[i] + std::log1p(std::exp(-std::abs(t)));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<double> y(labels.begin(), labels.end());
  return make_op(std::move(out), {logits.node()}, [y](Node& self) {
    Node& pl = *self.parents[0];
    Matrix g(pl.value.rows(), pl.value.cols());
    const double up = self.grad(0, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double t = pl.value.data()[i];
      const double sig = t >= 0 ? 1.0 / (1.0 + std::exp(-t))
                                : std::exp(t) / (1.0 + std::exp(t));
      g.data()[i] = up * (sig - y[i]);
    }
    accumulate(pl, g);
  });
}

}  // namespace convstruct::tk
