#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "topocl/losses.hpp"

using namespace topocl;
using nn::Tensor;

TEST_CASE("nt-xent closed form for two orthogonal instances") {
  const Tensor z = Tensor::from(2, 2, {1, 0, 0, 1});
  CHECK(nt_xent(z, z, 1.0).item() == doctest::Approx(std::log(1.0 + 2.0 * std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("nt-xent is invariant to rescaling and to instance order") {
  CounterRng rng(71);
  const Tensor a = testsupport::random_tensor(5, 3, rng);
  const Tensor b = testsupport::random_tensor(5, 3, rng);
  const double base = nt_xent(a, b).item();
  CHECK(nt_xent(nn::scale(a, 10.0), b).item() == doctest::Approx(base).epsilon(1e-12));
  // per-row positive scale factors
  std::vector<double> s{0.5, 2.0, 7.0, 0.1, 3.0};
  std::vector<double> av(a.values().begin(), a.values().end());
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) av[r * 3 + c] *= s[r];
  CHECK(nt_xent(Tensor::from(5, 3, av), b).item() == doctest::Approx(base).epsilon(1e-12));
  const std::vector<long> perm{3, 0, 4, 1, 2};
  std::vector<long> ia, ib;
  for (long p : perm)
    for (long c = 0; c < 3; ++c) ia.push_back(p * 3 + c);
  ib = ia;
  CHECK(nt_xent(nn::gather(a, 5, 3, ia), nn::gather(b, 5, 3, ib)).item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("nt-xent gradient") {
  CounterRng rng(72);
  Tensor a = testsupport::random_tensor(4, 3, rng);
  Tensor b = testsupport::random_tensor(4, 3, rng);
  CHECK(testsupport::gradient_error([&] { return nt_xent(a, b, 0.2); }, {a, b}) < 1e-6);
}

TEST_CASE("loss preconditions") {
  const Tensor one = Tensor::from(1, 2, {1, 0});
  CHECK_THROWS(nt_xent(one, one));
  CHECK_THROWS(barlow_loss(one, one));
  CHECK_THROWS(nt_xent(Tensor::zeros(2, 2), Tensor::zeros(3, 2)));
}

TEST_CASE("barlow loss vanishes when the cross-correlation is the identity") {
  // orthogonal sign patterns: zero mean, unit variance, uncorrelated
  const Tensor z = Tensor::from(4, 3, {1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1});
  CHECK(barlow_loss(z, z).item() < 1e-12);
}

TEST_CASE("barlow loss is positive when the cross-correlation is not the identity") {
  // second column duplicates the first: off-diagonal term equals one
  const Tensor z = Tensor::from(4, 2, {1, 1, 1, 1, -1, -1, -1, -1});
  const double l = barlow_loss(z, z, 0.5).item();
  CHECK(l == doctest::Approx(2 * 0.5).epsilon(1e-6));
  // anti-correlated views: diagonal is -1
  const Tensor w = Tensor::from(4, 1, {1, 1, -1, -1});
  CHECK(barlow_loss(w, nn::scale(w, -1.0)).item() == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("barlow loss stays finite on constant features") {
  const Tensor c = Tensor::from(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  const double l = barlow_loss(c, c).item();
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(2.0));
}

TEST_CASE("barlow gradient") {
  CounterRng rng(73);
  Tensor a = testsupport::random_tensor(5, 3, rng);
  Tensor b = testsupport::random_tensor(5, 3, rng);
  CHECK(testsupport::gradient_error([&] { return barlow_loss(a, b); }, {a, b}) < 1e-6);
}
