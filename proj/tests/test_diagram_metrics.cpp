#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "topocl/diagram_metrics.hpp"

using namespace topocl;

TEST_CASE("hand computed bottleneck values") {
  const DiagramSlice a{{0.0, 1.0}};
  const DiagramSlice b{{0.125, 0.75}};
  CHECK(bottleneck(a, b).value == 0.25);
  // a short point is cheaper to send to the diagonal than to a far point
  const DiagramSlice c{{0.0, 0.125}};
  const DiagramSlice d{{0.5, 0.875}};
  CHECK(bottleneck(c, d).value == 0.1875);
  CHECK(bottleneck({}, d).value == 0.1875);
  CHECK(bottleneck({}, {}).value == 0.0);
}

TEST_CASE("bottleneck equals exhaustive matching") {
  CounterRng rng(21);
  for (int i = 0; i < 150; ++i) {
    const auto a = testsupport::random_slice(rng.below(5), rng);
    const auto b = testsupport::random_slice(rng.below(5), rng);
    CHECK(bottleneck(a, b).value == testsupport::brute_bottleneck(a, b));
  }
}

TEST_CASE("returned matching achieves the value") {
  CounterRng rng(22);
  for (int i = 0; i < 40; ++i) {
    const auto a = testsupport::random_slice(1 + rng.below(8), rng);
    const auto b = testsupport::random_slice(1 + rng.below(8), rng);
    const MatchedDistance m = bottleneck(a, b);
    std::vector<int> used_a(a.size()), used_b(b.size());
    double worst = 0.0;
    for (const auto& e : m.matching) {
      double c = 0.0;
      if (e.a && e.b) {
        c = linf(a[*e.a], b[*e.b]);
      } else if (e.a) {
        c = diagonal_cost(a[*e.a]);
      } else if (e.b) {
        c = diagonal_cost(b[*e.b]);
      }
      if (e.a) ++used_a[*e.a];
      if (e.b) ++used_b[*e.b];
      CHECK(c == e.cost);
      worst = std::max(worst, c);
    }
    for (int u : used_a) CHECK(u == 1);
    for (int u : used_b) CHECK(u == 1);
    CHECK(worst == m.value);
  }
}

TEST_CASE("symmetry and triangle inequality") {
  CounterRng rng(23);
  for (int i = 0; i < 40; ++i) {
    const auto a = testsupport::random_slice(rng.below(6), rng);
    const auto b = testsupport::random_slice(rng.below(6), rng);
    const auto c = testsupport::random_slice(rng.below(6), rng);
    const double ab = bottleneck(a, b).value;
    CHECK(ab == bottleneck(b, a).value);
    CHECK(bottleneck(a, c).value <= ab + bottleneck(b, c).value);
    CHECK(bottleneck(a, a).value == 0.0);
  }
}

TEST_CASE("span and relative ratio") {
  PersistenceDiagram o;
  o.dim0 = {{0.1, 1.0}, {0.2, 0.4}};
  o.dim1 = {{0.3, 0.5}};
  PersistenceDiagram g = o;
  g.dim1 = {{0.3, 0.55}};
  const RelativeBottleneck r = relative_bottleneck_detail(o, g);
  CHECK(r.span[0] == doctest::Approx(0.9));
  CHECK(r.included[0]);
  CHECK(r.ratio[0] == 0.0);
  CHECK(r.ratio[1] == doctest::Approx(0.05 / 0.2));
  CHECK(r.max_ratio == r.ratio[1]);
}

TEST_CASE("dimension with empty span is left out") {
  PersistenceDiagram o;
  o.dim0 = {{0.1, 1.0}};
  PersistenceDiagram g = o;
  g.dim1 = {{0.2, 0.6}};
  const RelativeBottleneck r = relative_bottleneck_detail(o, g);
  CHECK_FALSE(r.included[1]);
  CHECK(r.d_b[1] == doctest::Approx(0.2));
  CHECK(r.max_ratio == 0.0);
}

TEST_CASE("stability under bounded intensity change") {
  // values on a 1/1024 grid keep every difference exact
  CounterRng rng(24);
  auto q = [](double x) { return std::round(x * 1024.0) / 1024.0; };
  for (int i = 0; i < 25; ++i) {
    std::vector<double> v(100);
    for (auto& x : v) x = q(rng.uniform());
    const double eps = q(rng.uniform(0.0, 0.1));
    std::vector<double> w(v);
    for (auto& x : w) x = std::clamp(x + q(rng.uniform(-eps, eps)), 0.0, 1.0);
    const PersistenceDiagram a = compute_pd(GrayImage(10, 10, v));
    const PersistenceDiagram b = compute_pd(GrayImage(10, 10, w));
    CHECK(bottleneck(a.dim0, b.dim0).value <= eps);
    CHECK(bottleneck(a.dim1, b.dim1).value <= eps);
  }
}
