#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topocl/nn/tensor.hpp"
#include "topocl/rng.hpp"

namespace topocl::nn {

enum class Init { kZeros, kKaimingUniform, kXavierUniform };

/// Named trainable tensors. Insertion order is kept so checkpoints and
/// optimizer state line up deterministically.
class ParameterSet {
 public:
  /// Creates and registers a parameter; names must be unique.
  Tensor create(const std::string& name, std::size_t rows, std::size_t cols, Init init, CounterRng& rng);
  void add(const std::string& name, Tensor t);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Appends every parameter of `other` under `prefix`.
  void merge(const std::string& prefix, const ParameterSet& other);
  /// Copies values from `other` for every matching name; shapes must agree.
  void copy_values_from(const ParameterSet& other);
  double grad_norm(const std::string& name_prefix = "") const;

  /// Flat binary: "TOPOCLPS", u64 header length, JSON header listing
  /// {name, shape, offset}, then little-endian f64 values.
  void save(const std::filesystem::path& path) const;
  /// Loads into the already-shaped parameters of this set.
  void load(const std::filesystem::path& path);
  static ParameterSet read(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// y = x W + b with W: in x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Init init,
         CounterRng& rng);

  Tensor operator()(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::size_t in() const { return weight_.rows(); }
  std::size_t out() const { return weight_.cols(); }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Affine layers with ReLU between them and none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, const std::vector<std::size_t>& dims, CounterRng& rng);

  Tensor operator()(const Tensor& x) const;
  const std::vector<Linear>& layers() const { return layers_; }
  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
};

/// Multi-head scaled dot-product attention with learned Q, K, V and output
/// projections (Xavier init, zero biases).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                     CounterRng& rng);

  /// q: Lq x d, kv: Lk x d. `key_mask` is empty or Lk long; masked keys get
  /// no attention weight.
  Tensor operator()(const Tensor& q, const Tensor& k, const Tensor& v,
                    const std::vector<bool>& key_mask = {}) const;
  /// Same with an explicit Lq x Lk mask (row-major); empty means no mask.
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<bool>& pair_mask) const;

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  const Linear& q_proj() const { return wq_; }
  const Linear& k_proj() const { return wk_; }
  const Linear& v_proj() const { return wv_; }
  const Linear& o_proj() const { return wo_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear wq_;
  Linear wk_;
  Linear wv_;
  Linear wo_;
};

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay on matrices (biases are not decayed).
class AdamW {
 public:
  AdamW(ParameterSet& params, AdamWConfig config);

  void step(double lr);
  void step() { step(config_.lr); }
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

  /// Moments and step count, in the checkpoint format.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  ParameterSet* params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// lr * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(double base_lr, std::size_t step, std::size_t total);

}  // namespace topocl::nn
