#include "topocl/cubical_ph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

namespace topocl {

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void link(std::size_t child_root, std::size_t parent_root) { parent_[child_root] = parent_root; }

 private:
  std::vector<std::size_t> parent_;
};

struct GridEdge {
  double value;
  std::size_t a;
  std::size_t b;
};

// Edges of the 4-connected pixel grid in (value, row, column, orientation)
// order; horizontal edges precede vertical ones at the same anchor.
std::vector<GridEdge> grid_edges(const GrayImage& img) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  std::vector<GridEdge> edges;
  edges.reserve(2 * h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t p = r * w + c;
      if (c + 1 < w) edges.push_back({std::max(img[p], img[p + 1]), p, p + 1});
      if (r + 1 < h) edges.push_back({std::max(img[p], img[p + w]), p, p + w});
    }
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const GridEdge& x, const GridEdge& y) { return x.value < y.value; });
  return edges;
}

DiagramSlice h0_pairs(const GrayImage& img, const std::vector<GridEdge>& edges) {
  const std::size_t n = img.size();
  // Birth of each root; elder rule keeps the older (lower value, then lower
  // index) component alive.
  std::vector<std::pair<double, std::size_t>> birth(n);
  for (std::size_t i = 0; i < n; ++i) birth[i] = {img[i], i};
  UnionFind uf(n);
  DiagramSlice pairs;
  for (const auto& e : edges) {
    std::size_t ra = uf.find(e.a);
    std::size_t rb = uf.find(e.b);
    if (ra == rb) continue;
    if (birth[rb] < birth[ra]) std::swap(ra, rb);
    // rb is younger and dies here.
    if (birth[rb].first < e.value) pairs.push_back({birth[rb].first, e.value});
    uf.link(rb, ra);
  }
  const double global_min = *std::min_element(img.data().begin(), img.data().end());
  pairs.push_back({global_min, PersistenceDiagram::kEssentialDeath});
  return pairs;
}

// Loops of the sublevel complex are bounded components of its complement.
// Dual vertices: one per unit square (value = max of its 4 corners) plus the
// unbounded outside region. Two dual vertices are adjacent across a grid edge
// with that edge's value. Sweeping values downwards, a bounded component is
// born when its highest square appears and dies when an edge joins it to an
// older component; in sublevel terms that is a loop (edge value, square value).
DiagramSlice h1_pairs(const GrayImage& img, const std::vector<GridEdge>& edges) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const std::size_t sh = h - 1;
  const std::size_t sw = w - 1;
  const std::size_t outside = sh * sw;
  std::vector<std::pair<double, std::size_t>> key(outside + 1);
  for (std::size_t r = 0; r < sh; ++r) {
    for (std::size_t c = 0; c < sw; ++c) {
      const std::size_t p = r * w + c;
      const double v = std::max({img[p], img[p + 1], img[p + w], img[p + w + 1]});
      // Older = higher value; ties broken towards the lower square index.
      key[r * sw + c] = {v, outside - (r * sw + c)};
    }
  }
  key[outside] = {std::numeric_limits<double>::infinity(), outside + 1};

  UnionFind uf(outside + 1);
  DiagramSlice pairs;
  auto square = [&](long r, long c) -> std::size_t {
    if (r < 0 || c < 0 || r >= static_cast<long>(sh) || c >= static_cast<long>(sw)) return outside;
    return static_cast<std::size_t>(r) * sw + static_cast<std::size_t>(c);
  };
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
    const long r = static_cast<long>(it->a / w);
    const long c = static_cast<long>(it->a % w);
    std::size_t s1;
    std::size_t s2;
    if (it->b == it->a + 1) {
      // horizontal edge (r,c)-(r,c+1): squares above and below
      s1 = square(r - 1, c);
      s2 = square(r, c);
    } else {
      // vertical edge (r,c)-(r+1,c): squares left and right
      s1 = square(r, c - 1);
      s2 = square(r, c);
    }
    std::size_t ra = uf.find(s1);
    std::size_t rb = uf.find(s2);
    if (ra == rb) continue;
    if (key[ra] < key[rb]) std::swap(ra, rb);
    // rb is younger in the downward sweep.
    if (it->value < key[rb].first) pairs.push_back({it->value, key[rb].first});
    uf.link(rb, ra);
  }
  return pairs;
}

// ---- boundary matrix oracle ----

struct Cell {
  double value;
  int dim;
  std::size_t index;  // position in the raw enumeration
  std::vector<std::size_t> faces;  // raw indices
};

struct CellComplex {
  std::vector<Cell> cells;  // sorted in filtration order
};

CellComplex build_complex(const GrayImage& img) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  std::vector<Cell> raw;
  // vertices
  for (std::size_t p = 0; p < h * w; ++p) raw.push_back({img[p], 0, raw.size(), {}});
  // edges
  std::vector<std::size_t> hedge((h) * (w - 1));
  std::vector<std::size_t> vedge((h - 1) * (w));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c + 1 < w; ++c) {
      const std::size_t p = r * w + c;
      hedge[r * (w - 1) + c] = raw.size();
      raw.push_back({std::max(img[p], img[p + 1]), 1, raw.size(), {p, p + 1}});
    }
  }
  for (std::size_t r = 0; r + 1 < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t p = r * w + c;
      vedge[r * w + c] = raw.size();
      raw.push_back({std::max(img[p], img[p + w]), 1, raw.size(), {p, p + w}});
    }
  }
  // squares
  for (std::size_t r = 0; r + 1 < h; ++r) {
    for (std::size_t c = 0; c + 1 < w; ++c) {
      const std::size_t p = r * w + c;
      const double v = std::max({img[p], img[p + 1], img[p + w], img[p + w + 1]});
      raw.push_back({v, 2, raw.size(),
                     {hedge[r * (w - 1) + c], hedge[(r + 1) * (w - 1) + c], vedge[r * w + c],
                      vedge[r * w + c + 1]}});
    }
  }
  std::sort(raw.begin(), raw.end(), [](const Cell& a, const Cell& b) {
    return std::tie(a.value, a.dim, a.index) < std::tie(b.value, b.dim, b.index);
  });
  return {std::move(raw)};
}

struct Reduction {
  std::vector<long> low_of_col;   // pivot row of each reduced column, -1 if zero
  std::vector<bool> paired_row;   // cell is the pivot of some column
};

// Standard left-to-right column reduction over Z/2; columns are kept as
// sorted index vectors in filtration order.
Reduction reduce(const CellComplex& cx) {
  const std::size_t n = cx.cells.size();
  std::vector<std::size_t> order_of(n);
  for (std::size_t i = 0; i < n; ++i) order_of[cx.cells[i].index] = i;

  std::vector<std::vector<std::size_t>> cols(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t f : cx.cells[j].faces) cols[j].push_back(order_of[f]);
    std::sort(cols[j].begin(), cols[j].end());
  }
  Reduction red{std::vector<long>(n, -1), std::vector<bool>(n, false)};
  std::vector<long> col_with_low(n, -1);
  std::vector<std::size_t> scratch;
  for (std::size_t j = 0; j < n; ++j) {
    auto& col = cols[j];
    while (!col.empty()) {
      const std::size_t low = col.back();
      const long other = col_with_low[low];
      if (other < 0) break;
      scratch.clear();
      std::set_symmetric_difference(col.begin(), col.end(), cols[other].begin(), cols[other].end(),
                                    std::back_inserter(scratch));
      col.swap(scratch);
    }
    if (!col.empty()) {
      red.low_of_col[j] = static_cast<long>(col.back());
      col_with_low[col.back()] = static_cast<long>(j);
      red.paired_row[col.back()] = true;
    }
  }
  return red;
}

void check_oracle_size(const GrayImage& img) {
  if (img.height() > kOracleMaxSide || img.width() > kOracleMaxSide) {
    throw std::invalid_argument("compute_pd_oracle: image larger than 32x32");
  }
}

}  // namespace

void PersistenceDiagram::canonicalize() {
  std::sort(dim0.begin(), dim0.end());
  std::sort(dim1.begin(), dim1.end());
}

PersistenceDiagram compute_pd(const GrayImage& img) {
  const auto edges = grid_edges(img);
  PersistenceDiagram pd{h0_pairs(img, edges), h1_pairs(img, edges)};
  pd.canonicalize();
  return pd;
}

PersistenceDiagram compute_pd_oracle(const GrayImage& img) {
  check_oracle_size(img);
  const CellComplex cx = build_complex(img);
  const Reduction red = reduce(cx);
  PersistenceDiagram pd;
  const std::size_t n = cx.cells.size();
  for (std::size_t j = 0; j < n; ++j) {
    const long low = red.low_of_col[j];
    if (low >= 0) {
      const Cell& birth_cell = cx.cells[static_cast<std::size_t>(low)];
      const double b = birth_cell.value;
      const double d = cx.cells[j].value;
      if (b == d) continue;
      (birth_cell.dim == 0 ? pd.dim0 : pd.dim1).push_back({b, d});
    } else if (!red.paired_row[j]) {
      // Essential: unpaired and not a killer. Only H0 can occur on a full grid.
      if (cx.cells[j].dim == 0) {
        pd.dim0.push_back({cx.cells[j].value, PersistenceDiagram::kEssentialDeath});
      } else if (cx.cells[j].dim == 1) {
        pd.dim1.push_back({cx.cells[j].value, PersistenceDiagram::kEssentialDeath});
      }
    }
  }
  pd.canonicalize();
  return pd;
}

std::pair<int, int> oracle_betti(const GrayImage& img, double t) {
  check_oracle_size(img);
  const CellComplex cx = build_complex(img);
  const Reduction red = reduce(cx);
  int b0 = 0;
  int b1 = 0;
  const std::size_t n = cx.cells.size();
  for (std::size_t j = 0; j < n; ++j) {
    const Cell& c = cx.cells[j];
    if (c.value > t || red.low_of_col[j] >= 0) continue;  // absent, or a killer column
    // j creates a class; it is alive at t unless its killer entered by t.
    bool alive = true;
    for (std::size_t k = j + 1; k < n; ++k) {
      if (red.low_of_col[k] == static_cast<long>(j)) {
        alive = cx.cells[k].value > t;
        break;
      }
    }
    if (!alive) continue;
    if (c.dim == 0) ++b0;
    if (c.dim == 1) ++b1;
  }
  return {b0, b1};
}

PersistenceDiagram restrict_and_compute(const GrayImage& img, const RoiMask& roi) {
  return compute_pd(apply_mask(img, roi));
}

void write_pd_csv(const PersistenceDiagram& pd, std::ostream& out) {
  PersistenceDiagram sorted = pd;
  sorted.canonicalize();
  out << "dim,birth,death\n";
  char buf[96];
  for (int q = 0; q < 2; ++q) {
    for (const auto& p : sorted.dim(q)) {
      std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f\n", q, p.birth, p.death);
      out << buf;
    }
  }
}

void write_pd_csv(const PersistenceDiagram& pd, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_pd_csv(pd, out);
}

PersistenceDiagram read_pd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim,birth,death", 0) != 0) {
    throw std::runtime_error("PD CSV: missing header in " + path.string());
  }
  PersistenceDiagram pd;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int dim = -1;
    double b = 0.0;
    double d = 0.0;
    char c1 = 0;
    char c2 = 0;
    if (!(row >> dim >> c1 >> b >> c2 >> d) || c1 != ',' || c2 != ',' || (dim != 0 && dim != 1)) {
      throw std::runtime_error("PD CSV: bad row '" + line + "'");
    }
    if (d < b) throw std::runtime_error("PD CSV: death < birth in '" + line + "'");
    (dim == 0 ? pd.dim0 : pd.dim1).push_back({b, d});
  }
  pd.canonicalize();
  return pd;
}

}  // namespace topocl
