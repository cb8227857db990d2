#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "topocl/image.hpp"
#include "topocl/nn/layers.hpp"

namespace topocl {

struct VisualEncoderConfig {
  /// Output channels of the 3x3 stride-2 convolutions; the last one is the
  /// raw feature width after global average pooling.
  std::vector<std::size_t> channels{32, 64, 128};

  std::size_t out_dim() const { return channels.back(); }
  nlohmann::json to_json() const;
  static VisualEncoderConfig from_json(const nlohmann::json& j);
};

/// Small convolutional stand-in for the image backbone: conv-ReLU layers
/// (3x3, stride 2, zero padding 1) followed by global average pooling.
class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(nn::ParameterSet& params, const std::string& prefix, VisualEncoderConfig config,
                CounterRng& rng);

  /// 1 x out_dim feature of one image.
  nn::Tensor encode(const GrayImage& img) const;
  nn::Tensor encode_batch(const std::vector<GrayImage>& images) const;

  const VisualEncoderConfig& config() const { return config_; }

 private:
  struct Im2Col {
    std::size_t out_h = 0;
    std::size_t out_w = 0;
    std::vector<long> index;
  };
  const Im2Col& im2col(std::size_t h, std::size_t w, std::size_t c) const;

  VisualEncoderConfig config_;
  std::vector<nn::Linear> convs_;
  // Index tables depend only on the input geometry; filled lazily.
  mutable std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Im2Col> cache_;
};

}  // namespace topocl
