#include "topocl/nn/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace topocl::nn {

namespace {

constexpr char kMagic[8] = {'T', 'O', 'P', 'O', 'C', 'L', 'P', 'S'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

struct RawEntry {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::vector<double> values;
};

std::vector<RawEntry> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const std::uint64_t header_len = read_u64_le(in);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  const auto j = nlohmann::json::parse(header);
  std::vector<RawEntry> out;
  std::size_t expected_offset = 0;
  for (const auto& e : j.at("params")) {
    RawEntry r;
    r.name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw std::runtime_error("checkpoint: shape must have 2 dims");
    r.rows = shape[0];
    r.cols = shape[1];
    if (e.at("offset").get<std::size_t>() != expected_offset) {
      throw std::runtime_error("checkpoint: unexpected offset for " + r.name);
    }
    r.values.resize(r.rows * r.cols);
    for (double& v : r.values) v = std::bit_cast<double>(read_u64_le(in));
    expected_offset += r.values.size() * sizeof(double);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

Tensor ParameterSet::create(const std::string& name, std::size_t rows, std::size_t cols, Init init,
                            CounterRng& rng) {
  std::vector<double> values(rows * cols, 0.0);
  double bound = 0.0;
  if (init == Init::kKaimingUniform) {
    bound = std::sqrt(6.0 / static_cast<double>(rows));
  } else if (init == Init::kXavierUniform) {
    bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  }
  if (init != Init::kZeros) {
    for (double& v : values) v = rng.uniform(-bound, bound);
  }
  Tensor t = Tensor::from(rows, cols, std::move(values), true);
  add(name, t);
  return t;
}

void ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  t.node()->requires_grad = true;
  index_[name] = names_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return tensors_[it->second];
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return tensors_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

void ParameterSet::merge(const std::string& prefix, const ParameterSet& other) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) add(prefix + other.names_[i], other.tensors_[i]);
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!other.contains(names_[i])) continue;
    const Tensor& src = other.get(names_[i]);
    Tensor& dst = tensors_[i];
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      throw std::invalid_argument("shape mismatch for parameter " + names_[i]);
    }
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
}

double ParameterSet::grad_norm(const std::string& name_prefix) const {
  double s = 0.0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].rfind(name_prefix, 0) != 0) continue;
    for (double g : tensors_[i].grad()) s += g * g;
  }
  return std::sqrt(s);
}

void ParameterSet::save(const std::filesystem::path& path) const {
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    entries.push_back({{"name", names_[i]},
                       {"shape", {tensors_[i].rows(), tensors_[i].cols()}},
                       {"offset", offset}});
    offset += tensors_[i].size() * sizeof(double);
  }
  const std::string header = nlohmann::json{{"params", entries}}.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  write_u64_le(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : tensors_) {
    for (double v : t.values()) write_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

void ParameterSet::load(const std::filesystem::path& path) {
  const auto raw = read_raw(path);
  std::map<std::string, const RawEntry*> by_name;
  for (const auto& r : raw) by_name[r.name] = &r;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto it = by_name.find(names_[i]);
    if (it == by_name.end()) throw std::runtime_error("checkpoint missing parameter " + names_[i]);
    Tensor& t = tensors_[i];
    if (it->second->rows != t.rows() || it->second->cols != t.cols()) {
      throw std::runtime_error("checkpoint shape mismatch for " + names_[i]);
    }
    std::copy(it->second->values.begin(), it->second->values.end(), t.mutable_values().begin());
  }
}

ParameterSet ParameterSet::read(const std::filesystem::path& path) {
  ParameterSet set;
  for (auto& r : read_raw(path)) set.add(r.name, Tensor::from(r.rows, r.cols, std::move(r.values), true));
  return set;
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Init init,
               CounterRng& rng)
    : weight_(params.create(name + ".weight", in, out, init, rng)),
      bias_(params.create(name + ".bias", 1, out, Init::kZeros, rng)) {}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight_), bias_); }

Mlp::Mlp(ParameterSet& params, const std::string& name, const std::vector<std::size_t>& dims,
         CounterRng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(params, name + "." + std::to_string(i), dims[i], dims[i + 1], Init::kKaimingUniform,
                         rng);
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  if (x.cols() != in()) {
    throw std::invalid_argument("Mlp: input width " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(in()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t dim,
                                       std::size_t heads, CounterRng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) throw std::invalid_argument("attention dim must be divisible by heads");
  wq_ = Linear(params, name + ".q", dim, dim, Init::kXavierUniform, rng);
  wk_ = Linear(params, name + ".k", dim, dim, Init::kXavierUniform, rng);
  wv_ = Linear(params, name + ".v", dim, dim, Init::kXavierUniform, rng);
  wo_ = Linear(params, name + ".o", dim, dim, Init::kXavierUniform, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const std::vector<bool>& key_mask) const {
  if (!key_mask.empty() && key_mask.size() != k.rows()) throw std::invalid_argument("attention: mask size");
  std::vector<bool> mask;
  if (!key_mask.empty()) {
    mask.resize(q.rows() * k.rows());
    for (std::size_t r = 0; r < q.rows(); ++r) {
      for (std::size_t c = 0; c < k.rows(); ++c) mask[r * k.rows() + c] = key_mask[c];
    }
  }
  return attend(q, k, v, mask);
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const std::vector<bool>& pair_mask) const {
  if (q.cols() != dim_ || k.cols() != dim_ || v.cols() != dim_ || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  if (!pair_mask.empty() && pair_mask.size() != q.rows() * k.rows()) {
    throw std::invalid_argument("attention: mask size");
  }
  const Tensor qp = wq_(q);
  const Tensor kp = wk_(k);
  const Tensor vp = wv_(v);
  const std::size_t head_dim = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> outs;
  outs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = heads_ == 1 ? qp : slice_cols(qp, h * head_dim, head_dim);
    const Tensor kh = heads_ == 1 ? kp : slice_cols(kp, h * head_dim, head_dim);
    const Tensor vh = heads_ == 1 ? vp : slice_cols(vp, h * head_dim, head_dim);
    const Tensor weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), pair_mask);
    outs.push_back(matmul(weights, vh));
  }
  return wo_(heads_ == 1 ? outs[0] : concat_cols(outs));
}

AdamW::AdamW(ParameterSet& params, AdamWConfig config) : params_(&params), config_(config) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto& tensors = params_->tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto values = tensors[i].mutable_values();
    const auto grad = tensors[i].grad();
    const bool decay = tensors[i].rows() > 1;
    for (std::size_t j = 0; j < values.size(); ++j) {
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * grad[j];
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * grad[j] * grad[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      if (decay) values[j] -= lr * config_.weight_decay * values[j];
      values[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::save_state(const std::filesystem::path& path) const {
  ParameterSet state;
  state.add("step", Tensor::scalar(static_cast<double>(t_)));
  const auto& names = params_->names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    state.add("m." + names[i], Tensor::from(1, m_[i].size(), m_[i]));
    state.add("v." + names[i], Tensor::from(1, v_[i].size(), v_[i]));
  }
  state.save(path);
}

void AdamW::load_state(const std::filesystem::path& path) {
  const ParameterSet state = ParameterSet::read(path);
  t_ = static_cast<std::size_t>(state.get("step").item());
  const auto& names = params_->names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto m = state.get("m." + names[i]).values();
    const auto v = state.get("v." + names[i]).values();
    if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
      throw std::runtime_error("optimizer state shape mismatch for " + names[i]);
    }
    m_[i].assign(m.begin(), m.end());
    v_[i].assign(v.begin(), v.end());
  }
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total) {
  if (total == 0) return base_lr;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace topocl::nn
