#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "topocl/cubical_ph.hpp"
#include "topocl/nn/layers.hpp"

namespace topocl {

/// Top-k persistence pairs per homology dimension, tagged with a one-hot of
/// the dimension. Rows [0, k0) hold H0, rows [k0, k0 + k1) hold H1.
struct SelectedPoints {
  std::size_t k0 = 48;
  std::size_t k1 = 96;
  /// (k0 + k1) x 4 row-major: birth, death, onehot0, onehot1.
  std::vector<double> rows;
  std::vector<bool> mask;

  std::size_t size() const { return k0 + k1; }
  std::size_t valid(int dim) const;
  double at(std::size_t r, std::size_t c) const { return rows[r * 4 + c]; }
};

/// Ties in persistence go to the smaller birth, then the earlier index.
SelectedPoints select_points(const PersistenceDiagram& pd, std::size_t k0 = 48, std::size_t k1 = 96);

struct TopoEncoderConfig {
  std::size_t k0 = 48;
  std::size_t k1 = 96;
  std::vector<std::size_t> ph_dims{4, 64, 128, 256, 384};
  std::size_t heads = 4;
  double lambda0 = 0.5;
  double lambda1 = 0.5;
  /// Hidden widths of the projection head; its input is 6 * width().
  std::vector<std::size_t> proj_hidden{768, 512};
  std::size_t out_dim = 256;
  bool self_attention = true;
  bool cross_attention = true;

  std::size_t width() const { return ph_dims.back(); }
  void validate() const;
  nlohmann::json to_json() const;
  static TopoEncoderConfig from_json(const nlohmann::json& j);
  /// Layer widths read off a checkpoint's parameter shapes; k, heads, lambda
  /// and the ablation flags come from `base`.
  static TopoEncoderConfig from_parameters(const nn::ParameterSet& params, const TopoEncoderConfig& base);
};

struct TopoFeature {
  nn::Tensor t;  // 1 x out_dim
  nn::Tensor h0;
  nn::Tensor h1;
  nn::Tensor h0_self;
  nn::Tensor h1_self;
  nn::Tensor h0_cross;
  nn::Tensor h1_cross;
  nn::Tensor h_cross;
  nn::Tensor h_pool;  // 6 x width
};

class TopoEncoder {
 public:
  TopoEncoder() = default;
  TopoEncoder(nn::ParameterSet& params, const std::string& prefix, TopoEncoderConfig config, CounterRng& rng);

  /// Full mode runs all k0 + k1 rows and checks every intermediate shape.
  /// Compact mode drops padding rows first (they never reach t), which is
  /// much cheaper for sparse diagrams; intermediates then have fewer rows.
  TopoFeature encode(const SelectedPoints& points, bool compact = false) const;
  nn::Tensor encode_pd(const PersistenceDiagram& pd, bool compact = true) const;
  /// Rows of t for a batch of diagrams (compact mode).
  nn::Tensor encode_batch(const std::vector<PersistenceDiagram>& pds) const;

  const TopoEncoderConfig& config() const { return config_; }
  const nn::Mlp& ph_encoder() const { return ph_encoder_; }
  const nn::Mlp& projection() const { return projection_; }

 private:
  TopoEncoderConfig config_;
  nn::Mlp ph_encoder_;
  nn::MultiHeadAttention self0_;
  nn::MultiHeadAttention self1_;
  nn::MultiHeadAttention cross0_;
  nn::MultiHeadAttention cross1_;
  nn::Mlp projection_;
};

}  // namespace topocl
