#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "topocl/nn/layers.hpp"

namespace topocl {

inline constexpr std::size_t kExpertCount = 5;

struct FusionConfig {
  std::size_t visual_raw = 128;
  std::size_t topo_raw = 256;
  std::size_t embed = 256;
  /// Hidden width of the two 3-layer embedding heads.
  std::size_t head_hidden = 256;
  std::size_t expert_hidden = 512;
  std::size_t expert_out = 512;
  std::vector<std::size_t> gate_hidden{256, 128};
  std::size_t proj_hidden = 512;
  std::size_t out_dim = 256;
  std::size_t attention_heads = 4;

  nlohmann::json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
};

/// Projected visual and topological features, one row per sample.
struct ViewFeatures {
  nn::Tensor f;  // N x embed
  nn::Tensor t;  // N x embed
};

struct FusedEmbedding {
  nn::Tensor gate;  // N x 5, rows on the simplex
  std::array<nn::Tensor, kExpertCount> experts;  // N x expert_out each
  nn::Tensor blend;  // N x embed, sigmoid weights inside expert 4
  nn::Tensor h;      // N x expert_out
  nn::Tensor z;      // N x out_dim
};

class MoeFusion {
 public:
  MoeFusion() = default;
  MoeFusion(nn::ParameterSet& params, const std::string& prefix, FusionConfig config, CounterRng& rng);

  ViewFeatures project(const nn::Tensor& visual_raw, const nn::Tensor& topo_raw) const;
  /// e1..e5; `blend` receives expert 4's sigmoid weights when non-null.
  std::array<nn::Tensor, kExpertCount> run_experts(const ViewFeatures& v, nn::Tensor* blend = nullptr) const;
  nn::Tensor gate(const ViewFeatures& v) const;
  /// `gate_override` (N x 5) replaces the gating network output when given.
  FusedEmbedding fuse(const ViewFeatures& v, const std::optional<nn::Tensor>& gate_override = {}) const;

  const FusionConfig& config() const { return config_; }
  const nn::Mlp& expert_mlp(std::size_t i) const { return experts_[i]; }
  const nn::Mlp& gating() const { return gating_; }
  const nn::Mlp& blend_mlp() const { return blend_; }
  const nn::MultiHeadAttention& cross_ft() const { return cross_ft_; }
  const nn::MultiHeadAttention& cross_tf() const { return cross_tf_; }
  const nn::Mlp& visual_head() const { return visual_head_; }
  const nn::Mlp& topo_head() const { return topo_head_; }
  const nn::Mlp& projection() const { return projection_; }

 private:
  FusionConfig config_;
  nn::Mlp visual_head_;
  nn::Mlp topo_head_;
  std::array<nn::Mlp, kExpertCount> experts_;
  nn::Mlp blend_;
  nn::MultiHeadAttention cross_ft_;
  nn::MultiHeadAttention cross_tf_;
  nn::Mlp gating_;
  nn::Mlp projection_;
};

/// h = sum_i gate[:, i] * e_i, row by row.
nn::Tensor weighted_sum(const nn::Tensor& gate, const std::array<nn::Tensor, kExpertCount>& experts);

}  // namespace topocl
