#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "topocl/cubical_ph.hpp"

using namespace topocl;

namespace {

GrayImage from_rows(std::size_t h, std::size_t w, std::vector<double> v) { return GrayImage(h, w, std::move(v)); }

}  // namespace

TEST_CASE("single dark pixel gives one essential component") {
  std::vector<double> v(9, 0.8);
  v[4] = 0.1;
  const PersistenceDiagram pd = compute_pd(from_rows(3, 3, v));
  REQUIRE(pd.dim0.size() == 1);
  CHECK(pd.dim0[0].birth == 0.1);
  CHECK(pd.dim0[0].death == PersistenceDiagram::kEssentialDeath);
  CHECK(pd.dim1.empty());
}

TEST_CASE("two basins merge at the saddle") {
  // 0.1 and 0.2 minima separated by a 0.7 ridge
  const PersistenceDiagram pd = compute_pd(from_rows(2, 3, {0.1, 0.7, 0.2, 0.1, 0.7, 0.2}));
  PersistenceDiagram want;
  want.dim0 = {{0.1, 1.0}, {0.2, 0.7}};
  CHECK(testsupport::same_diagram(pd, want));
}

TEST_CASE("ring encloses a loop born at the ring level") {
  std::vector<double> v(25, 0.9);
  for (int r = 1; r <= 3; ++r)
    for (int c = 1; c <= 3; ++c) v[r * 5 + c] = 0.2;
  v[2 * 5 + 2] = 0.6;
  const PersistenceDiagram pd = compute_pd(from_rows(5, 5, v));
  REQUIRE(pd.dim1.size() == 1);
  CHECK(pd.dim1[0].birth == 0.2);
  CHECK(pd.dim1[0].death == 0.6);
  CHECK(testsupport::same_diagram(pd, compute_pd_oracle(from_rows(5, 5, v))));
}

TEST_CASE("fast path matches boundary reduction on random images") {
  CounterRng rng(11);
  for (int i = 0; i < 60; ++i) {
    const std::size_t h = 2 + rng.below(11);
    const std::size_t w = 2 + rng.below(11);
    const GrayImage img = testsupport::random_image(h, w, rng, i % 2 ? 4 : 0);
    CHECK(testsupport::same_diagram(compute_pd(img), compute_pd_oracle(img)));
  }
}

TEST_CASE("constant image has only the essential class") {
  const PersistenceDiagram pd = compute_pd(GrayImage(6, 6, 0.3));
  REQUIRE(pd.dim0.size() == 1);
  CHECK(pd.dim0[0] == PersistencePair{0.3, 1.0});
  CHECK(pd.dim1.empty());
}

TEST_CASE("no zero-persistence pairs survive") {
  CounterRng rng(12);
  const PersistenceDiagram pd = compute_pd(testsupport::random_image(12, 12, rng, 3));
  for (int q = 0; q < 2; ++q)
    for (const auto& p : pd.dim(q)) CHECK(p.death > p.birth);
}

TEST_CASE("betti counts agree with the diagram") {
  CounterRng rng(13);
  const GrayImage img = testsupport::random_image(9, 9, rng);
  const PersistenceDiagram pd = compute_pd(img);
  for (double t : {0.2, 0.45, 0.7, 0.95}) {
    auto alive = [&](const DiagramSlice& s) {
      int n = 0;
      for (const auto& p : s) n += p.birth <= t && t < p.death;
      return n;
    };
    const auto [b0, b1] = oracle_betti(img, t);
    CHECK(b0 == alive(pd.dim0));
    CHECK(b1 == alive(pd.dim1));
  }
}

TEST_CASE("roi restriction pushes outside pixels to the end") {
  std::vector<double> v(16, 0.5);
  v[0] = 0.05;
  v[15] = 0.1;
  std::vector<bool> m(16, true);
  m[0] = false;
  const PersistenceDiagram pd = restrict_and_compute(GrayImage(4, 4, v), RoiMask(4, 4, m));
  REQUIRE(pd.dim0.size() == 1);
  CHECK(pd.dim0[0].birth == 0.1);
}

TEST_CASE("csv round trip and format") {
  PersistenceDiagram pd;
  pd.dim0 = {{0.25, 1.0}, {0.125, 0.5}};
  pd.dim1 = {{0.3, 0.7}};
  std::ostringstream out;
  write_pd_csv(pd, out);
  CHECK(out.str() == "dim,birth,death\n0,0.125000000,0.500000000\n0,0.250000000,1.000000000\n1,0.300000000,0.700000000\n");
  const auto p = std::filesystem::temp_directory_path() / "topocl_pd_rt.csv";
  write_pd_csv(pd, p);
  PersistenceDiagram back = read_pd_csv(p);
  CHECK(testsupport::same_diagram(back, pd));
}

TEST_CASE("oracle refuses large images") {
  CHECK_THROWS(compute_pd_oracle(GrayImage(33, 4, 0.5)));
}

TEST_CASE("repeated calls agree") {
  CounterRng rng(14);
  const GrayImage img = testsupport::random_image(16, 16, rng);
  CHECK(compute_pd(img) == compute_pd(img));
}
