#include <cmath>

#include "doctest.h"
#include "topocl/eval.hpp"
#include "topocl/rng.hpp"

using namespace topocl;

namespace {

LabeledFeatures blobs(std::size_t per_class, int classes, double spread, std::uint64_t seed) {
  CounterRng rng(seed);
  LabeledFeatures f;
  f.dim = 3;
  for (std::size_t i = 0; i < per_class * classes; ++i) {
    const int y = static_cast<int>(i % classes);
    for (std::size_t d = 0; d < 3; ++d) f.x.push_back((d == static_cast<std::size_t>(y) ? 4.0 : 0.0) + spread * rng.normal());
    f.y.push_back(y);
  }
  return f;
}

}  // namespace

TEST_CASE("separable classes are probed perfectly") {
  LabeledFeatures train, test;
  stratified_split(blobs(40, 2, 0.3, 1), 0.7, 3, train, test);
  const ProbeResult r = linear_probe(train, test);
  CHECK(r.accuracy == 1.0);
  REQUIRE(r.per_class.size() == 2);
  CHECK(r.per_class[0] == 1.0);
}

TEST_CASE("shuffled labels give chance accuracy") {
  LabeledFeatures all = blobs(200, 3, 1.0, 2);
  CounterRng rng(5);
  for (std::size_t i = all.y.size(); i > 1; --i) std::swap(all.y[i - 1], all.y[rng.below(i)]);
  LabeledFeatures train, test;
  stratified_split(all, 0.7, 4, train, test);
  const double acc = linear_probe(train, test).accuracy;
  CHECK(acc > 1.0 / 3.0 - 0.1);
  CHECK(acc < 1.0 / 3.0 + 0.1);
}

TEST_CASE("single class is rejected") {
  LabeledFeatures f;
  f.dim = 1;
  f.x = {1, 2, 3};
  f.y = {0, 0, 0};
  CHECK_THROWS_AS(linear_probe(f, f), std::invalid_argument);
}

TEST_CASE("stratified split keeps class proportions") {
  LabeledFeatures train, test;
  stratified_split(blobs(10, 3, 1.0, 6), 0.7, 7, train, test);
  CHECK(train.size() == 21);
  CHECK(test.size() == 9);
  for (int c = 0; c < 3; ++c) CHECK(std::count(test.y.begin(), test.y.end(), c) == 3);
  CHECK(train.x.size() == 21 * 3);
}

TEST_CASE("paired t-test on the Cushny-Peebles sleep data") {
  const std::vector<double> g1{0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0};
  const std::vector<double> g2{1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4};
  const TTestResult r = paired_ttest(g1, g2);
  CHECK(r.dof == 9);
  CHECK(r.t == doctest::Approx(-4.062128).epsilon(1e-6));
  CHECK(r.p == doctest::Approx(0.002832890).epsilon(1e-5));
  CHECK(r.mean_difference == doctest::Approx(-1.58));
}

TEST_CASE("t-table critical values map to their tail probabilities") {
  // differences c + (-2,-1,0,1,2) have sd sqrt(2.5), so t = c * sqrt(2)
  auto p_at = [](double t) {
    const double c = t / std::sqrt(2.0);
    std::vector<double> a, b;
    for (int k = -2; k <= 2; ++k) {
      a.push_back(c + k);
      b.push_back(0.0);
    }
    return paired_ttest(a, b).p;
  };
  CHECK(p_at(2.776) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(p_at(4.604) == doctest::Approx(0.01).epsilon(2e-3));
  CHECK(p_at(2.132) == doctest::Approx(0.10).epsilon(2e-3));
}

TEST_CASE("constant differences with jitter are significant") {
  const std::vector<double> a{1.001, 0.999, 1.0005, 0.9995, 1.0};
  const std::vector<double> b(5, 0.0);
  const TTestResult r = paired_ttest(a, b);
  CHECK(r.p < 0.01);
  CHECK(r.t > 0.0);
}

TEST_CASE("identical samples are degenerate") {
  const std::vector<double> a{0.8, 0.9, 0.7};
  const TTestResult r = paired_ttest(a, a);
  CHECK(r.degenerate);
  CHECK(std::isnan(r.t));
  CHECK(r.p == 1.0);
  CHECK_THROWS(paired_ttest({1.0}, {2.0}));
  CHECK_THROWS(paired_ttest({1.0, 2.0}, {2.0}));
}
