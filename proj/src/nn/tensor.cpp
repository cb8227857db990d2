#include "topocl/nn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace topocl::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Node& n) { return MapC(n.value.data(), static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols)); }
Map grad_view(Node& n) {
  n.ensure_grad();
  return Map(n.grad.data(), static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols));
}
MapC grad_cview(const Node& n) {
  return MapC(n.grad.data(), static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols));
}

NodePtr make_node(std::size_t rows, std::size_t cols, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  auto n = make_node(a.rows(), a.cols(), {a.node()});
  const auto& x = a.node()->value;
  for (std::size_t i = 0; i < x.size(); ++i) n->value[i] = f(x[i]);
  if (n->requires_grad) {
    n->backward_fn = [dfdx](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        p.grad[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
      }
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  if (values.size() != rows * cols) throw std::invalid_argument("Tensor::from: size mismatch");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item(): tensor is not a scalar");
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return from(rows(), cols(), node_->value, false); }

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Intermediate nodes start from zero; leaves keep accumulating.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  auto n = make_node(a.rows(), b.cols(), {a.node(), b.node()});
  Map(n->value.data(), static_cast<Eigen::Index>(n->rows), static_cast<Eigen::Index>(n->cols)).noalias() =
      view(*a.node()) * view(*b.node());
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const auto g = grad_cview(self);
      if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb).transpose();
      if (pb.requires_grad) grad_view(pb).noalias() += view(pa).transpose() * g;
    };
  }
  return Tensor(n);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column counts differ");
  auto n = make_node(a.rows(), b.rows(), {a.node(), b.node()});
  Map(n->value.data(), static_cast<Eigen::Index>(n->rows), static_cast<Eigen::Index>(n->cols)).noalias() =
      view(*a.node()) * view(*b.node()).transpose();
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const auto g = grad_cview(self);
      if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb);
      if (pb.requires_grad) grad_view(pb).noalias() += g.transpose() * view(pa);
    };
  }
  return Tensor(n);
}

Tensor transpose(const Tensor& a) {
  auto n = make_node(a.cols(), a.rows(), {a.node()});
  Map(n->value.data(), static_cast<Eigen::Index>(n->rows), static_cast<Eigen::Index>(n->cols)) =
      view(*a.node()).transpose();
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& p = *self.parents[0];
      if (p.requires_grad) grad_view(p) += grad_cview(self).transpose();
    };
  }
  return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto n = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  for (std::size_t i = 0; i < x.size(); ++i) n->value[i] = x[i] + y[i];
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      for (auto& pp : self.parents) {
        if (!pp->requires_grad) continue;
        pp->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pp->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto n = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  for (std::size_t i = 0; i < x.size(); ++i) n->value[i] = x[i] * y[i];
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
      }
    };
  }
  return Tensor(n);
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  auto n = make_node(a.rows(), a.cols(), {a.node(), row.node()});
  const auto& x = a.node()->value;
  const auto& r = row.node()->value;
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < x.size(); ++i) n->value[i] = x[i] + r[i % c];
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pr = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
      }
      if (pr.requires_grad) {
        pr.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pr.grad[i % self.cols] += self.grad[i];
      }
    };
  }
  return Tensor(n);
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  auto n = make_node(a.rows(), a.cols(), {a.node(), row.node()});
  const auto& x = a.node()->value;
  const auto& r = row.node()->value;
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < x.size(); ++i) n->value[i] = x[i] * r[i % c];
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pr = *self.parents[1];
      const std::size_t c = self.cols;
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pr.value[i % c];
      }
      if (pr.requires_grad) {
        pr.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pr.grad[i % c] += self.grad[i] * pa.value[i];
      }
    };
  }
  return Tensor(n);
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor reciprocal(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Tensor sum(const Tensor& a) {
  auto n = make_node(1, 1, {a.node()});
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  n->value[0] = s;
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (double& g : p.grad) g += self.grad[0];
    };
  }
  return Tensor(n);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean_rows(const Tensor& a) {
  return masked_mean_rows(a, std::vector<bool>(a.rows(), true));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    parents.push_back(p.node());
  }
  auto n = make_node(rows, cols, parents);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), n->value.begin() + static_cast<long>(off));
    off += p.size();
  }
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      std::size_t off = 0;
      for (auto& pp : self.parents) {
        if (pp->requires_grad) {
          pp->ensure_grad();
          for (std::size_t i = 0; i < pp->size(); ++i) pp->grad[i] += self.grad[off + i];
        }
        off += pp->size();
      }
    };
  }
  return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    parents.push_back(p.node());
  }
  auto n = make_node(rows, cols, parents);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < p.cols(); ++c) n->value[r * cols + c0 + c] = p.at(r, c);
    }
    c0 += p.cols();
  }
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      std::size_t c0 = 0;
      for (auto& pp : self.parents) {
        if (pp->requires_grad) {
          pp->ensure_grad();
          for (std::size_t r = 0; r < self.rows; ++r) {
            for (std::size_t c = 0; c < pp->cols; ++c) {
              pp->grad[r * pp->cols + c] += self.grad[r * self.cols + c0 + c];
            }
          }
        }
        c0 += pp->cols;
      }
    };
  }
  return Tensor(n);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  auto n = make_node(count, a.cols(), {a.node()});
  const std::size_t c = a.cols();
  std::copy(a.values().begin() + static_cast<long>(begin * c),
            a.values().begin() + static_cast<long>((begin + count) * c), n->value.begin());
  if (n->requires_grad) {
    n->backward_fn = [begin](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const std::size_t off = begin * self.cols;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
    };
  }
  return Tensor(n);
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  auto n = make_node(a.rows(), count, {a.node()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) n->value[r * count + c] = a.at(r, begin + c);
  }
  if (n->requires_grad) {
    n->backward_fn = [begin](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t r = 0; r < self.rows; ++r) {
        for (std::size_t c = 0; c < self.cols; ++c) {
          p.grad[r * p.cols + begin + c] += self.grad[r * self.cols + c];
        }
      }
    };
  }
  return Tensor(n);
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) throw std::invalid_argument("reshape: size mismatch");
  auto n = make_node(rows, cols, {a.node()});
  n->value = a.node()->value;
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
  }
  return Tensor(n);
}

Tensor gather(const Tensor& a, std::size_t rows, std::size_t cols, std::vector<long> index) {
  if (index.size() != rows * cols) throw std::invalid_argument("gather: index size mismatch");
  auto n = make_node(rows, cols, {a.node()});
  const auto& x = a.node()->value;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= static_cast<long>(x.size())) throw std::invalid_argument("gather: index out of range");
    n->value[i] = index[i] >= 0 ? x[static_cast<std::size_t>(index[i])] : 0.0;
  }
  if (n->requires_grad) {
    n->backward_fn = [index = std::move(index)](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) p.grad[static_cast<std::size_t>(index[i])] += self.grad[i];
      }
    };
  }
  return Tensor(n);
}

Tensor softmax_rows(const Tensor& a, const std::vector<bool>& mask) {
  if (!mask.empty() && mask.size() != a.size()) throw std::invalid_argument("softmax_rows: mask size");
  auto n = make_node(a.rows(), a.cols(), {a.node()});
  const std::size_t c = a.cols();
  const auto& x = a.node()->value;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (mask.empty() || mask[r * c + j]) mx = std::max(mx, x[r * c + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask.empty() || mask[r * c + j]) {
        n->value[r * c + j] = std::exp(x[r * c + j] - mx);
        z += n->value[r * c + j];
      }
    }
    for (std::size_t j = 0; j < c; ++j) n->value[r * c + j] /= z;
  }
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const std::size_t c = self.cols;
      for (std::size_t r = 0; r < self.rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.value[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          p.grad[r * c + j] += self.value[r * c + j] * (self.grad[r * c + j] - dot);
        }
      }
    };
  }
  return Tensor(n);
}

Tensor log_softmax_rows(const Tensor& a, const std::vector<bool>& mask) {
  if (!mask.empty() && mask.size() != a.size()) throw std::invalid_argument("log_softmax_rows: mask size");
  auto n = make_node(a.rows(), a.cols(), {a.node()});
  const std::size_t c = a.cols();
  const auto& x = a.node()->value;
  auto on = [&mask, c](std::size_t r, std::size_t j) { return mask.empty() || mask[r * c + j]; };
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (on(r, j)) mx = std::max(mx, x[r * c + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (on(r, j)) z += std::exp(x[r * c + j] - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      if (on(r, j)) n->value[r * c + j] = x[r * c + j] - lse;
    }
  }
  if (n->requires_grad) {
    n->backward_fn = [mask](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const std::size_t c = self.cols;
      for (std::size_t r = 0; r < self.rows; ++r) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          if (mask.empty() || mask[r * c + j]) gsum += self.grad[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          if (!(mask.empty() || mask[r * c + j])) continue;
          p.grad[r * c + j] += self.grad[r * c + j] - std::exp(self.value[r * c + j]) * gsum;
        }
      }
    };
  }
  return Tensor(n);
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  auto n = make_node(a.rows(), a.cols(), {a.node()});
  const std::size_t c = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> norms(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[r * c + j] * x[r * c + j];
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < c; ++j) n->value[r * c + j] = x[r * c + j] / norms[r];
  }
  if (n->requires_grad) {
    n->backward_fn = [norms = std::move(norms)](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const std::size_t c = self.cols;
      for (std::size_t r = 0; r < self.rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.value[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          p.grad[r * c + j] += (self.grad[r * c + j] - self.value[r * c + j] * dot) / norms[r];
        }
      }
    };
  }
  return Tensor(n);
}

Tensor masked_max_rows(const Tensor& a, const std::vector<bool>& row_mask) {
  if (row_mask.size() != a.rows()) throw std::invalid_argument("masked_max_rows: mask size");
  auto n = make_node(1, a.cols(), {a.node()});
  const std::size_t c = a.cols();
  std::vector<long> argmax(c, -1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (!row_mask[r]) continue;
    for (std::size_t j = 0; j < c; ++j) {
      if (argmax[j] < 0 || a.at(r, j) > n->value[j]) {
        argmax[j] = static_cast<long>(r);
        n->value[j] = a.at(r, j);
      }
    }
  }
  if (n->requires_grad) {
    n->backward_fn = [argmax = std::move(argmax)](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t j = 0; j < self.cols; ++j) {
        if (argmax[j] >= 0) p.grad[static_cast<std::size_t>(argmax[j]) * self.cols + j] += self.grad[j];
      }
    };
  }
  return Tensor(n);
}

Tensor masked_mean_rows(const Tensor& a, const std::vector<bool>& row_mask) {
  if (row_mask.size() != a.rows()) throw std::invalid_argument("masked_mean_rows: mask size");
  auto n = make_node(1, a.cols(), {a.node()});
  const std::size_t c = a.cols();
  const auto valid = static_cast<std::size_t>(std::count(row_mask.begin(), row_mask.end(), true));
  if (valid > 0) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (!row_mask[r]) continue;
      for (std::size_t j = 0; j < c; ++j) n->value[j] += a.at(r, j);
    }
    for (double& v : n->value) v /= static_cast<double>(valid);
  }
  if (n->requires_grad) {
    n->backward_fn = [row_mask, valid](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad || valid == 0) return;
      p.ensure_grad();
      const double inv = 1.0 / static_cast<double>(valid);
      for (std::size_t r = 0; r < p.rows; ++r) {
        if (!row_mask[r]) continue;
        for (std::size_t j = 0; j < self.cols; ++j) p.grad[r * self.cols + j] += self.grad[j] * inv;
      }
    };
  }
  return Tensor(n);
}

}  // namespace topocl::nn
