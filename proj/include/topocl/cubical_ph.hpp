#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "topocl/image.hpp"

namespace topocl {

struct PersistencePair {
  double birth = 0.0;
  double death = 0.0;

  double persistence() const { return death - birth; }
  friend auto operator<=>(const PersistencePair&, const PersistencePair&) = default;
};

using DiagramSlice = std::vector<PersistencePair>;

/// H0 and H1 diagrams of the sublevel filtration. Essential H0 classes die at
/// `kEssentialDeath`.
struct PersistenceDiagram {
  static constexpr double kEssentialDeath = 1.0;

  DiagramSlice dim0;
  DiagramSlice dim1;

  const DiagramSlice& dim(int q) const { return q == 0 ? dim0 : dim1; }
  /// Sorts both slices so diagrams compare as multisets.
  void canonicalize();
  friend bool operator==(const PersistenceDiagram&, const PersistenceDiagram&) = default;
};

/// Fast path. Pixels are vertices with 4-connectivity (V-construction); H0 via
/// union-find over edges, H1 via union-find on the dual graph of squares under
/// the superlevel order.
PersistenceDiagram compute_pd(const GrayImage& img);

/// Reference implementation: full Z/2 boundary-matrix reduction over every
/// vertex, edge and square. Limited to 32x32.
PersistenceDiagram compute_pd_oracle(const GrayImage& img);

inline constexpr std::size_t kOracleMaxSide = 32;

/// compute_pd(apply_mask(img, roi))
PersistenceDiagram restrict_and_compute(const GrayImage& img, const RoiMask& roi);

/// Betti numbers (b0, b1) of the sublevel complex {value <= t}, counted from
/// the boundary-matrix reduction. Used for consistency checks.
std::pair<int, int> oracle_betti(const GrayImage& img, double t);

/// CSV with header `dim,birth,death`, rows sorted, 9 decimal digits.
void write_pd_csv(const PersistenceDiagram& pd, std::ostream& out);
void write_pd_csv(const PersistenceDiagram& pd, const std::filesystem::path& path);
PersistenceDiagram read_pd_csv(const std::filesystem::path& path);

}  // namespace topocl
