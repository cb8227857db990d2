#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace topocl::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Graph node: a rows x cols row-major f64 matrix, its gradient and the
/// closure that pushes the gradient into its parents.
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Handle to a node. Copies share the node; operations build new nodes and
/// record their parents (define-by-run tape).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v) { return from(1, 1, {v}); }

  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  bool defined() const { return static_cast<bool>(node_); }
  bool requires_grad() const { return node_->requires_grad; }

  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;
  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  /// Gradient; all zeros when backward never reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Reverse-mode sweep from a 1x1 loss. Gradients accumulate into every
/// reachable tensor that requires grad.
void backward(const Tensor& loss);

// ---- elementwise and structural ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Adds a 1 x cols row to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Multiplies every row elementwise by a 1 x cols row.
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// sqrt with a zero subgradient at 0.
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// 1 x cols column means.
Tensor mean_rows(const Tensor& a);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

/// out has shape rows x cols; out[i] = a[index[i]] or 0 when index[i] < 0.
Tensor gather(const Tensor& a, std::size_t rows, std::size_t cols, std::vector<long> index);

/// Row-wise softmax. Entries with mask false get probability 0; a row whose
/// entries are all masked is all zeros. `mask` is empty or rows*cols long.
Tensor softmax_rows(const Tensor& a, const std::vector<bool>& mask = {});
/// Row-wise log-softmax over unmasked entries; masked entries output 0.
Tensor log_softmax_rows(const Tensor& a, const std::vector<bool>& mask = {});

Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

/// Column-wise max / mean over rows with row_mask true; 1 x cols. With no
/// valid row the result is zeros.
Tensor masked_max_rows(const Tensor& a, const std::vector<bool>& row_mask);
Tensor masked_mean_rows(const Tensor& a, const std::vector<bool>& row_mask);

}  // namespace topocl::nn
