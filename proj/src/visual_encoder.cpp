#include "topocl/visual_encoder.hpp"

#include <stdexcept>
#include <tuple>

namespace topocl {

using nn::Tensor;

nlohmann::json VisualEncoderConfig::to_json() const { return {{"channels", channels}}; }

VisualEncoderConfig VisualEncoderConfig::from_json(const nlohmann::json& j) {
  VisualEncoderConfig c;
  c.channels = j.value("channels", c.channels);
  if (c.channels.empty()) throw std::invalid_argument("visual encoder needs at least one layer");
  return c;
}

VisualEncoder::VisualEncoder(nn::ParameterSet& params, const std::string& prefix, VisualEncoderConfig config,
                             CounterRng& rng)
    : config_(std::move(config)) {
  if (config_.channels.empty()) throw std::invalid_argument("visual encoder needs at least one layer");
  std::size_t in = 1;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    convs_.emplace_back(params, prefix + "conv" + std::to_string(i), 9 * in, config_.channels[i],
                        nn::Init::kKaimingUniform, rng);
    in = config_.channels[i];
  }
}

const VisualEncoder::Im2Col& VisualEncoder::im2col(std::size_t h, std::size_t w, std::size_t c) const {
  const auto key = std::make_tuple(h, w, c);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Im2Col t;
  t.out_h = (h + 1) / 2;
  t.out_w = (w + 1) / 2;
  t.index.reserve(t.out_h * t.out_w * 9 * c);
  for (std::size_t oy = 0; oy < t.out_h; ++oy) {
    for (std::size_t ox = 0; ox < t.out_w; ++ox) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const long y = static_cast<long>(2 * oy) + dy;
          const long x = static_cast<long>(2 * ox) + dx;
          const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w);
          for (std::size_t ch = 0; ch < c; ++ch) {
            t.index.push_back(inside ? (y * static_cast<long>(w) + x) * static_cast<long>(c) +
                                           static_cast<long>(ch)
                                     : -1);
          }
        }
      }
    }
  }
  return cache_.emplace(key, std::move(t)).first->second;
}

Tensor VisualEncoder::encode(const GrayImage& img) const {
  const auto d = img.data();
  // Feature maps are (pixels x channels), row-major over pixels.
  Tensor x = Tensor::from(img.height() * img.width(), 1, std::vector<double>(d.begin(), d.end()));
  std::size_t h = img.height();
  std::size_t w = img.width();
  std::size_t c = 1;
  for (const auto& conv : convs_) {
    const Im2Col& cols = im2col(h, w, c);
    const Tensor patches = gather(x, cols.out_h * cols.out_w, 9 * c, cols.index);
    x = relu(conv(patches));
    h = cols.out_h;
    w = cols.out_w;
    c = conv.out();
  }
  return mean_rows(x);
}

Tensor VisualEncoder::encode_batch(const std::vector<GrayImage>& images) const {
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(encode(img));
  return nn::concat_rows(rows);
}

}  // namespace topocl
