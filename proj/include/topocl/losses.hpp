#pragma once

#include "topocl/nn/tensor.hpp"

namespace topocl {

/// Normalized-temperature cross-entropy over the 2N x 2N cosine matrix of
/// [zw; zs] with self-pairs removed. Row i of zw is the positive of row i of zs.
nn::Tensor nt_xent(const nn::Tensor& zw, const nn::Tensor& zs, double tau = 0.2);

/// Redundancy reduction: each view is standardized per feature over the batch
/// (std + eps), C = zw_n^T zs_n / N and the loss is
/// sum_i (C_ii - 1)^2 + lambda * sum_{i != j} C_ij^2.
nn::Tensor barlow_loss(const nn::Tensor& zw, const nn::Tensor& zs, double lambda = 5e-3, double eps = 1e-8);

}  // namespace topocl
