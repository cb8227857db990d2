#include "topocl/topo_encoder.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace topocl {

using nn::Tensor;

namespace {

void expect_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw std::logic_error(std::string("topo encoder: ") + what + " is " + std::to_string(t.rows()) + "x" +
                           std::to_string(t.cols()) + ", expected " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  }
}

bool any_of(const std::vector<bool>& v) { return std::find(v.begin(), v.end(), true) != v.end(); }

}  // namespace

std::size_t SelectedPoints::valid(int dim) const {
  const std::size_t begin = dim == 0 ? 0 : k0;
  const std::size_t end = dim == 0 ? k0 : k0 + k1;
  return static_cast<std::size_t>(std::count(mask.begin() + begin, mask.begin() + end, true));
}

SelectedPoints select_points(const PersistenceDiagram& pd, std::size_t k0, std::size_t k1) {
  SelectedPoints out;
  out.k0 = k0;
  out.k1 = k1;
  out.rows.assign((k0 + k1) * 4, 0.0);
  out.mask.assign(k0 + k1, false);
  for (int q = 0; q < 2; ++q) {
    const DiagramSlice& slice = pd.dim(q);
    std::vector<std::size_t> order(slice.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = slice[a].death - slice[a].birth;
      const double pb = slice[b].death - slice[b].birth;
      if (pa != pb) return pa > pb;
      if (slice[a].birth != slice[b].birth) return slice[a].birth < slice[b].birth;
      return a < b;
    });
    const std::size_t k = q == 0 ? k0 : k1;
    const std::size_t base = q == 0 ? 0 : k0;
    for (std::size_t i = 0; i < k; ++i) {
      double* row = &out.rows[(base + i) * 4];
      row[2] = q == 0 ? 1.0 : 0.0;
      row[3] = q == 0 ? 0.0 : 1.0;
      if (i < order.size()) {
        row[0] = slice[order[i]].birth;
        row[1] = slice[order[i]].death;
        out.mask[base + i] = true;
      }
    }
  }
  return out;
}

void TopoEncoderConfig::validate() const {
  if (ph_dims.size() < 2 || ph_dims.front() != 4) throw std::invalid_argument("ph_dims must start at 4");
  if (heads == 0 || width() % heads != 0) throw std::invalid_argument("width must be divisible by heads");
  if (k0 == 0 || k1 == 0 || out_dim == 0) throw std::invalid_argument("k0, k1 and out_dim must be positive");
}

nlohmann::json TopoEncoderConfig::to_json() const {
  return {{"k0", k0},
          {"k1", k1},
          {"ph_dims", ph_dims},
          {"heads", heads},
          {"lambda0", lambda0},
          {"lambda1", lambda1},
          {"proj_hidden", proj_hidden},
          {"out_dim", out_dim},
          {"self_attention", self_attention},
          {"cross_attention", cross_attention}};
}

TopoEncoderConfig TopoEncoderConfig::from_json(const nlohmann::json& j) {
  TopoEncoderConfig c;
  c.k0 = j.value("k0", c.k0);
  c.k1 = j.value("k1", c.k1);
  c.ph_dims = j.value("ph_dims", c.ph_dims);
  c.heads = j.value("heads", c.heads);
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.self_attention = j.value("self_attention", c.self_attention);
  c.cross_attention = j.value("cross_attention", c.cross_attention);
  c.validate();
  return c;
}

TopoEncoderConfig TopoEncoderConfig::from_parameters(const nn::ParameterSet& params,
                                                     const TopoEncoderConfig& base) {
  auto widths = [&](const std::string& prefix) {
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; params.contains(prefix + std::to_string(i) + ".weight"); ++i) {
      const auto& w = params.get(prefix + std::to_string(i) + ".weight");
      if (dims.empty()) dims.push_back(w.rows());
      dims.push_back(w.cols());
    }
    if (dims.empty()) throw std::invalid_argument("checkpoint has no " + prefix + "* layers");
    return dims;
  };
  TopoEncoderConfig c = base;
  c.ph_dims = widths("ph.");
  const auto proj = widths("proj.");
  c.proj_hidden.assign(proj.begin() + 1, proj.end() - 1);
  c.out_dim = proj.back();
  c.validate();
  return c;
}

TopoEncoder::TopoEncoder(nn::ParameterSet& params, const std::string& prefix, TopoEncoderConfig config,
                         CounterRng& rng)
    : config_(std::move(config)) {
  config_.validate();
  const std::size_t w = config_.width();
  ph_encoder_ = nn::Mlp(params, prefix + "ph", config_.ph_dims, rng);
  self0_ = nn::MultiHeadAttention(params, prefix + "self0", w, config_.heads, rng);
  self1_ = nn::MultiHeadAttention(params, prefix + "self1", w, config_.heads, rng);
  cross0_ = nn::MultiHeadAttention(params, prefix + "cross0", w, config_.heads, rng);
  cross1_ = nn::MultiHeadAttention(params, prefix + "cross1", w, config_.heads, rng);
  std::vector<std::size_t> dims{6 * w};
  dims.insert(dims.end(), config_.proj_hidden.begin(), config_.proj_hidden.end());
  dims.push_back(config_.out_dim);
  projection_ = nn::Mlp(params, prefix + "proj", dims, rng);
}

TopoFeature TopoEncoder::encode(const SelectedPoints& points, bool compact) const {
  if (points.k0 != config_.k0 || points.k1 != config_.k1) {
    throw std::invalid_argument("topo encoder: selected points use different k");
  }
  const std::size_t w = config_.width();

  // Rows fed to the PH encoder. An empty block keeps one padding row so
  // every block stays non-empty; padding rows are masked everywhere.
  std::vector<std::size_t> take0;
  std::vector<std::size_t> take1;
  for (std::size_t r = 0; r < points.k0; ++r) {
    if (!compact || points.mask[r]) take0.push_back(r);
  }
  for (std::size_t r = points.k0; r < points.size(); ++r) {
    if (!compact || points.mask[r]) take1.push_back(r);
  }
  if (take0.empty()) take0.push_back(0);
  if (take1.empty()) take1.push_back(points.k0);
  const std::size_t n0 = take0.size();
  const std::size_t n1 = take1.size();

  std::vector<double> x;
  x.reserve((n0 + n1) * 4);
  std::vector<bool> mask0;
  std::vector<bool> mask1;
  for (std::size_t r : take0) {
    x.insert(x.end(), points.rows.begin() + r * 4, points.rows.begin() + r * 4 + 4);
    mask0.push_back(points.mask[r]);
  }
  for (std::size_t r : take1) {
    x.insert(x.end(), points.rows.begin() + r * 4, points.rows.begin() + r * 4 + 4);
    mask1.push_back(points.mask[r]);
  }

  TopoFeature f;
  const Tensor h = ph_encoder_(Tensor::from(n0 + n1, 4, std::move(x)));
  expect_shape(h, n0 + n1, w, "PH encoder output");
  f.h0 = slice_rows(h, 0, n0);
  f.h1 = slice_rows(h, n0, n1);

  const bool has0 = any_of(mask0);
  const bool has1 = any_of(mask1);
  f.h0_self = f.h0;
  f.h1_self = f.h1;
  if (config_.self_attention) {
    if (has0) f.h0_self = add(f.h0, scale(self0_(f.h0, f.h0, f.h0, mask0), config_.lambda0));
    if (has1) f.h1_self = add(f.h1, scale(self1_(f.h1, f.h1, f.h1, mask1), config_.lambda1));
  }

  f.h0_cross = f.h0_self;
  f.h1_cross = f.h1_self;
  if (config_.cross_attention) {
    if (has1) f.h0_cross = cross0_(f.h0_self, f.h1_self, f.h1_self, mask1);
    if (has0) f.h1_cross = cross1_(f.h1_self, f.h0_self, f.h0_self, mask0);
  }
  f.h_cross = nn::concat_rows({f.h0_cross, f.h1_cross});
  std::vector<bool> mask_cross = mask0;
  mask_cross.insert(mask_cross.end(), mask1.begin(), mask1.end());

  f.h_pool = nn::concat_rows({masked_max_rows(f.h0_self, mask0), masked_mean_rows(f.h0_self, mask0),
                          masked_max_rows(f.h1_self, mask1), masked_mean_rows(f.h1_self, mask1),
                          masked_max_rows(f.h_cross, mask_cross), masked_mean_rows(f.h_cross, mask_cross)});
  f.t = projection_(reshape(f.h_pool, 1, 6 * w));

  if (!compact) {
    expect_shape(f.h0, config_.k0, w, "h0");
    expect_shape(f.h1, config_.k1, w, "h1");
    expect_shape(f.h0_self, config_.k0, w, "h0'");
    expect_shape(f.h1_self, config_.k1, w, "h1'");
    expect_shape(f.h_cross, config_.k0 + config_.k1, w, "h_cross");
  }
  expect_shape(f.h_pool, 6, w, "h_pool");
  expect_shape(f.t, 1, config_.out_dim, "t");
  return f;
}

Tensor TopoEncoder::encode_pd(const PersistenceDiagram& pd, bool compact) const {
  return encode(select_points(pd, config_.k0, config_.k1), compact).t;
}

Tensor TopoEncoder::encode_batch(const std::vector<PersistenceDiagram>& pds) const {
  std::vector<Tensor> rows;
  rows.reserve(pds.size());
  for (const auto& pd : pds) rows.push_back(encode_pd(pd, true));
  return nn::concat_rows(rows);
}

}  // namespace topocl
