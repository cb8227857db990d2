#include "topocl/losses.hpp"

#include <stdexcept>
#include <vector>

namespace topocl {

using nn::Tensor;

namespace {

void check_batch(const Tensor& zw, const Tensor& zs) {
  if (zw.rows() != zs.rows() || zw.cols() != zs.cols()) throw std::invalid_argument("views differ in shape");
  if (zw.rows() < 2) throw std::invalid_argument("contrastive loss needs N >= 2");
}

Tensor standardize(const Tensor& z, double eps) {
  const Tensor centered = add_row(z, scale(nn::mean_rows(z), -1.0));
  const Tensor var = nn::mean_rows(nn::square(centered));
  return mul_row(centered, nn::reciprocal(nn::add_scalar(nn::sqrt(var), eps)));
}

}  // namespace

Tensor nt_xent(const Tensor& zw, const Tensor& zs, double tau) {
  check_batch(zw, zs);
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  const std::size_t n = zw.rows();
  const std::size_t m = 2 * n;
  const Tensor z = nn::l2_normalize_rows(nn::concat_rows({zw, zs}));
  const Tensor logits = scale(nn::matmul_nt(z, z), 1.0 / tau);
  std::vector<bool> mask(m * m, true);
  for (std::size_t i = 0; i < m; ++i) mask[i * m + i] = false;
  const Tensor logp = nn::log_softmax_rows(logits, mask);
  std::vector<long> pos(m);
  for (std::size_t i = 0; i < m; ++i) pos[i] = static_cast<long>(i * m + (i < n ? i + n : i - n));
  return scale(nn::mean(nn::gather(logp, m, 1, std::move(pos))), -1.0);
}

Tensor barlow_loss(const Tensor& zw, const Tensor& zs, double lambda, double eps) {
  check_batch(zw, zs);
  const std::size_t d = zw.cols();
  const Tensor a = standardize(zw, eps);
  const Tensor b = standardize(zs, eps);
  const Tensor c = scale(nn::matmul(nn::transpose(a), b), 1.0 / static_cast<double>(zw.rows()));
  std::vector<double> eye(d * d, 0.0);
  std::vector<double> weight(d * d, lambda);
  for (std::size_t i = 0; i < d; ++i) {
    eye[i * d + i] = 1.0;
    weight[i * d + i] = 1.0;
  }
  const Tensor diff = sub(c, Tensor::from(d, d, std::move(eye)));
  return nn::sum(mul(nn::square(diff), Tensor::from(d, d, std::move(weight))));
}

}  // namespace topocl
