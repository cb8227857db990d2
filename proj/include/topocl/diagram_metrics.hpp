#pragma once

#include <optional>
#include <vector>

#include "topocl/cubical_ph.hpp"
#include "topocl/image.hpp"

namespace topocl {

/// One edge of a bottleneck matching. An empty side means the point is
/// matched to its diagonal projection.
struct MatchEdge {
  std::optional<std::size_t> a;
  std::optional<std::size_t> b;
  double cost = 0.0;
};

struct MatchedDistance {
  double value = 0.0;
  std::vector<MatchEdge> matching;
};

/// L-infinity distance between two diagram points.
double linf(const PersistencePair& p, const PersistencePair& q);
/// L-infinity distance from a point to its diagonal projection.
double diagonal_cost(const PersistencePair& p);

/// Exact bottleneck distance. The value is always one of the candidate
/// distances (point-to-point or point-to-diagonal), selected by binary search
/// with a Hopcroft-Karp feasibility test.
MatchedDistance bottleneck(const DiagramSlice& a, const DiagramSlice& b);

/// Maximum persistence; 0 for an empty slice.
double span(const DiagramSlice& pd);

inline constexpr double kSpanEpsilon = 1e-9;

struct RelativeBottleneck {
  double d_b[2] = {0.0, 0.0};
  double span[2] = {0.0, 0.0};
  double ratio[2] = {0.0, 0.0};
  bool included[2] = {false, false};
  double max_ratio = 0.0;
};

/// Per-dimension d_B / span of the original ROI-restricted diagrams. The
/// overall value is the max over dimensions whose span exceeds 1e-9.
RelativeBottleneck relative_bottleneck_detail(const PersistenceDiagram& original,
                                              const PersistenceDiagram& augmented);
RelativeBottleneck relative_bottleneck_detail(const GrayImage& original, const GrayImage& augmented,
                                              const RoiMask& roi);
double relative_bottleneck(const GrayImage& original, const GrayImage& augmented, const RoiMask& roi);
/// Variant for augmentations that move the region (flips, rotations): each
/// image is restricted to its own ROI.
double relative_bottleneck(const GrayImage& original, const GrayImage& augmented,
                           const RoiMask& roi_original, const RoiMask& roi_augmented);

}  // namespace topocl
