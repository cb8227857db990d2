#include "topocl/diagram_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace topocl {

namespace {

// Hopcroft-Karp on an explicit bipartite graph with equal side sizes.
class HopcroftKarp {
 public:
  explicit HopcroftKarp(std::size_t n) : adj_(n), match_l_(n, kFree), match_r_(n, kFree), dist_(n) {}

  void add_edge(std::size_t l, std::size_t r) { adj_[l].push_back(r); }

  std::size_t run() {
    std::size_t size = 0;
    while (bfs()) {
      for (std::size_t l = 0; l < adj_.size(); ++l) {
        if (match_l_[l] == kFree && dfs(l)) ++size;
      }
    }
    return size;
  }

  std::size_t partner_of_left(std::size_t l) const { return match_l_[l]; }

  static constexpr std::size_t kFree = std::numeric_limits<std::size_t>::max();

 private:
  bool bfs() {
    std::queue<std::size_t> q;
    bool found = false;
    for (std::size_t l = 0; l < adj_.size(); ++l) {
      if (match_l_[l] == kFree) {
        dist_[l] = 0;
        q.push(l);
      } else {
        dist_[l] = kFree;
      }
    }
    while (!q.empty()) {
      const std::size_t l = q.front();
      q.pop();
      for (std::size_t r : adj_[l]) {
        const std::size_t next = match_r_[r];
        if (next == kFree) {
          found = true;
        } else if (dist_[next] == kFree) {
          dist_[next] = dist_[l] + 1;
          q.push(next);
        }
      }
    }
    return found;
  }

  bool dfs(std::size_t l) {
    for (std::size_t r : adj_[l]) {
      const std::size_t next = match_r_[r];
      if (next == kFree || (dist_[next] == dist_[l] + 1 && dfs(next))) {
        match_l_[l] = r;
        match_r_[r] = l;
        return true;
      }
    }
    dist_[l] = kFree;
    return false;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> match_l_;
  std::vector<std::size_t> match_r_;
  std::vector<std::size_t> dist_;
};

// Left vertices: points of A, then diagonal copies of B.
// Right vertices: points of B, then diagonal copies of A.
HopcroftKarp build_graph(const DiagramSlice& a, const DiagramSlice& b, double r) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  HopcroftKarp hk(n + m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (linf(a[i], b[j]) <= r) hk.add_edge(i, j);
    }
    if (diagonal_cost(a[i]) <= r) hk.add_edge(i, m + i);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (diagonal_cost(b[j]) <= r) hk.add_edge(n + j, j);
    for (std::size_t i = 0; i < n; ++i) hk.add_edge(n + j, m + i);
  }
  return hk;
}

}  // namespace

double linf(const PersistencePair& p, const PersistencePair& q) {
  return std::max(std::abs(p.birth - q.birth), std::abs(p.death - q.death));
}

double diagonal_cost(const PersistencePair& p) { return (p.death - p.birth) / 2.0; }

MatchedDistance bottleneck(const DiagramSlice& a, const DiagramSlice& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  MatchedDistance result;
  if (n == 0 && m == 0) return result;

  std::vector<double> candidates;
  candidates.reserve(n * m + n + m + 1);
  candidates.push_back(0.0);
  for (const auto& p : a) candidates.push_back(diagonal_cost(p));
  for (const auto& q : b) candidates.push_back(diagonal_cost(q));
  for (const auto& p : a) {
    for (const auto& q : b) candidates.push_back(linf(p, q));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // The largest diagonal cost is always feasible (everything to the diagonal),
  // so the search space is bounded by it.
  std::size_t lo = 0;
  std::size_t hi = candidates.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    HopcroftKarp hk = build_graph(a, b, candidates[mid]);
    if (hk.run() == n + m) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  result.value = candidates[lo];

  HopcroftKarp hk = build_graph(a, b, result.value);
  hk.run();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = hk.partner_of_left(i);
    if (r < m) {
      result.matching.push_back({i, r, linf(a[i], b[r])});
    } else {
      result.matching.push_back({i, std::nullopt, diagonal_cost(a[i])});
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (hk.partner_of_left(n + j) == j) {
      result.matching.push_back({std::nullopt, j, diagonal_cost(b[j])});
    }
  }
  return result;
}

double span(const DiagramSlice& pd) {
  double s = 0.0;
  for (const auto& p : pd) s = std::max(s, p.death - p.birth);
  return s;
}

RelativeBottleneck relative_bottleneck_detail(const PersistenceDiagram& original,
                                              const PersistenceDiagram& augmented) {
  RelativeBottleneck out;
  for (int q = 0; q < 2; ++q) {
    out.span[q] = span(original.dim(q));
    out.d_b[q] = bottleneck(original.dim(q), augmented.dim(q)).value;
    if (out.span[q] > kSpanEpsilon) {
      out.included[q] = true;
      out.ratio[q] = out.d_b[q] / out.span[q];
      out.max_ratio = std::max(out.max_ratio, out.ratio[q]);
    }
  }
  return out;
}

RelativeBottleneck relative_bottleneck_detail(const GrayImage& original, const GrayImage& augmented,
                                              const RoiMask& roi) {
  if (!original.same_shape(augmented) || !roi.matches(original)) {
    throw std::invalid_argument("relative_bottleneck: dimension mismatch");
  }
  return relative_bottleneck_detail(restrict_and_compute(original, roi),
                                    restrict_and_compute(augmented, roi));
}

double relative_bottleneck(const GrayImage& original, const GrayImage& augmented, const RoiMask& roi) {
  return relative_bottleneck_detail(original, augmented, roi).max_ratio;
}

double relative_bottleneck(const GrayImage& original, const GrayImage& augmented,
                           const RoiMask& roi_original, const RoiMask& roi_augmented) {
  if (!roi_original.matches(original) || !roi_augmented.matches(augmented)) {
    throw std::invalid_argument("relative_bottleneck: dimension mismatch");
  }
  return relative_bottleneck_detail(restrict_and_compute(original, roi_original),
                                    restrict_and_compute(augmented, roi_augmented))
      .max_ratio;
}

}  // namespace topocl
