#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "topocl/cubical_ph.hpp"
#include "topocl/image.hpp"
#include "topocl/nn/tensor.hpp"
#include "topocl/rng.hpp"

namespace testsupport {

inline topocl::GrayImage random_image(std::size_t h, std::size_t w, topocl::CounterRng& rng, int levels = 0) {
  std::vector<double> v(h * w);
  for (auto& x : v) {
    x = rng.uniform();
    // Few distinct levels force ties in the filtration.
    if (levels > 0) x = std::floor(x * levels) / levels;
  }
  return topocl::GrayImage(h, w, std::move(v));
}

inline topocl::DiagramSlice random_slice(std::size_t n, topocl::CounterRng& rng) {
  topocl::DiagramSlice s;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = std::round(rng.uniform() * 64.0) / 64.0;
    const double d = b + std::round(rng.uniform() * 32.0) / 64.0;
    s.push_back({b, d});
  }
  return s;
}

// Bottleneck by trying every assignment of the square cost matrix that adds a
// diagonal copy of each point of the other diagram.
inline double brute_bottleneck(const topocl::DiagramSlice& a, const topocl::DiagramSlice& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t k = n + m;
  if (k == 0) return 0.0;
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  auto diag = [](const topocl::PersistencePair& p) { return (p.death - p.birth) / 2.0; };
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i < n && j < m) {
        cost[i][j] = std::max(std::abs(a[i].birth - b[j].birth), std::abs(a[i].death - b[j].death));
      } else if (i < n) {
        cost[i][j] = diag(a[i]);
      } else if (j < m) {
        cost[i][j] = diag(b[j]);
      }
    }
  }
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (std::size_t i = 0; i < k && worst < best; ++i) worst = std::max(worst, cost[i][perm[i]]);
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline bool same_diagram(topocl::PersistenceDiagram a, topocl::PersistenceDiagram b) {
  a.canonicalize();
  b.canonicalize();
  return a == b;
}

// Central differences of f with respect to every entry of every input, compared
// with the tape gradient. Returns the largest relative error.
inline double gradient_error(const std::function<topocl::nn::Tensor()>& f, std::vector<topocl::nn::Tensor> inputs,
                             double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  topocl::nn::backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(numeric - analytic[k][i]) / std::max({1.0, std::abs(numeric), std::abs(analytic[k][i])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline topocl::nn::Tensor random_tensor(std::size_t r, std::size_t c, topocl::CounterRng& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return topocl::nn::Tensor::from(r, c, std::move(v), true);
}

}  // namespace testsupport
