#include "topocl/moe_fusion.hpp"

#include <stdexcept>

namespace topocl {

using nn::Tensor;

nlohmann::json FusionConfig::to_json() const {
  return {{"visual_raw", visual_raw},     {"topo_raw", topo_raw},         {"embed", embed},
          {"head_hidden", head_hidden},   {"expert_hidden", expert_hidden}, {"expert_out", expert_out},
          {"gate_hidden", gate_hidden},   {"proj_hidden", proj_hidden},   {"out_dim", out_dim},
          {"attention_heads", attention_heads}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
  FusionConfig c;
  c.visual_raw = j.value("visual_raw", c.visual_raw);
  c.topo_raw = j.value("topo_raw", c.topo_raw);
  c.embed = j.value("embed", c.embed);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.expert_hidden = j.value("expert_hidden", c.expert_hidden);
  c.expert_out = j.value("expert_out", c.expert_out);
  c.gate_hidden = j.value("gate_hidden", c.gate_hidden);
  c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  return c;
}

MoeFusion::MoeFusion(nn::ParameterSet& params, const std::string& prefix, FusionConfig config,
                     CounterRng& rng)
    : config_(std::move(config)) {
  const std::size_t e = config_.embed;
  const std::size_t hid = config_.expert_hidden;
  const std::size_t out = config_.expert_out;
  visual_head_ = nn::Mlp(params, prefix + "head_v", {config_.visual_raw, config_.head_hidden, config_.head_hidden, e}, rng);
  topo_head_ = nn::Mlp(params, prefix + "head_t", {config_.topo_raw, config_.head_hidden, config_.head_hidden, e}, rng);
  experts_[0] = nn::Mlp(params, prefix + "expert1", {e, hid, hid, out}, rng);
  experts_[1] = nn::Mlp(params, prefix + "expert2", {e, hid, hid, out}, rng);
  experts_[2] = nn::Mlp(params, prefix + "expert3", {2 * e, hid, hid, out}, rng);
  blend_ = nn::Mlp(params, prefix + "expert4.blend", {2 * e, hid, hid, e}, rng);
  experts_[3] = nn::Mlp(params, prefix + "expert4", {e, hid, hid, out}, rng);
  cross_ft_ = nn::MultiHeadAttention(params, prefix + "expert5.cross_ft", e, config_.attention_heads, rng);
  cross_tf_ = nn::MultiHeadAttention(params, prefix + "expert5.cross_tf", e, config_.attention_heads, rng);
  experts_[4] = nn::Mlp(params, prefix + "expert5", {2 * e, hid, hid, out}, rng);
  std::vector<std::size_t> gate_dims{2 * e};
  gate_dims.insert(gate_dims.end(), config_.gate_hidden.begin(), config_.gate_hidden.end());
  gate_dims.push_back(kExpertCount);
  gating_ = nn::Mlp(params, prefix + "gating", gate_dims, rng);
  projection_ = nn::Mlp(params, prefix + "proj", {out, config_.proj_hidden, config_.out_dim}, rng);
}

ViewFeatures MoeFusion::project(const Tensor& visual_raw, const Tensor& topo_raw) const {
  if (visual_raw.rows() != topo_raw.rows()) throw std::invalid_argument("project: batch size mismatch");
  return {visual_head_(visual_raw), topo_head_(topo_raw)};
}

std::array<Tensor, kExpertCount> MoeFusion::run_experts(const ViewFeatures& v, Tensor* blend) const {
  const std::size_t n = v.f.rows();
  if (v.f.cols() != config_.embed || v.t.cols() != config_.embed || v.t.rows() != n) {
    throw std::invalid_argument("run_experts: features must be N x " + std::to_string(config_.embed));
  }
  const Tensor ft = nn::concat_cols({v.f, v.t});
  std::array<Tensor, kExpertCount> e;
  e[0] = experts_[0](v.f);
  e[1] = experts_[1](v.t);
  e[2] = experts_[2](ft);
  const Tensor g = sigmoid(blend_(ft));
  // g * f + (1 - g) * t, rearranged so that f = t gives f bit for bit.
  const Tensor mixed = add(v.t, mul(g, sub(v.f, v.t)));
  e[3] = experts_[3](mixed);
  if (blend) *blend = g;
  // Each sample is a single token that only attends to its own partner.
  std::vector<bool> own(n * n, false);
  for (std::size_t i = 0; i < n; ++i) own[i * n + i] = true;
  const Tensor f2 = add(v.f, cross_ft_.attend(v.f, v.t, v.t, own));
  const Tensor t2 = add(v.t, cross_tf_.attend(v.t, v.f, v.f, own));
  e[4] = experts_[4](nn::concat_cols({f2, t2}));
  return e;
}

Tensor MoeFusion::gate(const ViewFeatures& v) const { return nn::softmax_rows(gating_(nn::concat_cols({v.f, v.t}))); }

Tensor weighted_sum(const Tensor& gate, const std::array<Tensor, kExpertCount>& experts) {
  const std::size_t n = gate.rows();
  const std::size_t d = experts[0].cols();
  if (gate.cols() != kExpertCount) throw std::invalid_argument("weighted_sum: gate must have 5 columns");
  Tensor h;
  for (std::size_t i = 0; i < kExpertCount; ++i) {
    std::vector<long> idx(n * d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) idx[r * d + c] = static_cast<long>(r * kExpertCount + i);
    }
    const Tensor term = mul(gather(gate, n, d, std::move(idx)), experts[i]);
    h = i == 0 ? term : add(h, term);
  }
  return h;
}

FusedEmbedding MoeFusion::fuse(const ViewFeatures& v, const std::optional<Tensor>& gate_override) const {
  FusedEmbedding out;
  out.experts = run_experts(v, &out.blend);
  out.gate = gate_override ? *gate_override : gate(v);
  if (out.gate.rows() != v.f.rows() || out.gate.cols() != kExpertCount) {
    throw std::invalid_argument("fuse: gate must be N x 5");
  }
  out.h = weighted_sum(out.gate, out.experts);
  out.z = projection_(out.h);
  return out;
}

}  // namespace topocl
