#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "support.hpp"
#include "topocl/nn/layers.hpp"

using namespace topocl;
using namespace topocl::nn;
using testsupport::gradient_error;
using testsupport::random_tensor;

namespace {

constexpr double kPrimitiveTol = 1e-6;

// Scalar read-out <out, R> with a fixed random R.
Tensor readout(const Tensor& out, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> r(out.size());
  for (auto& x : r) x = rng.uniform(-1.0, 1.0);
  return sum(mul(out, Tensor::from(out.rows(), out.cols(), r)));
}

// Entries pushed away from zero so kinks stay outside the difference stencil.
Tensor away_from_zero(std::size_t r, std::size_t c, CounterRng& rng) {
  Tensor t = random_tensor(r, c, rng);
  for (auto& x : t.mutable_values()) x += x < 0 ? -0.1 : 0.1;
  return t;
}

double check_unary(Tensor (*op)(const Tensor&), Tensor x) {
  return gradient_error([&] { return readout(op(x), 7); }, {x});
}

}  // namespace

TEST_CASE("forward values of basic ops") {
  const Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::from(2, 2, {5, 6, 7, 8});
  const Tensor m = matmul(a, b);
  CHECK(m.at(0, 0) == 19);
  CHECK(m.at(1, 1) == 50);
  CHECK(matmul_nt(a, b).at(0, 1) == 1 * 7 + 2 * 8);
  CHECK(transpose(a).at(0, 1) == 3);
  CHECK(mean_rows(a).at(0, 1) == 3);
  CHECK(sum(a).item() == 10);
  const Tensor s = softmax_rows(Tensor::from(1, 3, {0, 0, 5}), {true, true, false});
  CHECK(s.at(0, 0) == 0.5);
  CHECK(s.at(0, 2) == 0.0);
  const Tensor g = gather(a, 1, 3, {3, -1, 0});
  CHECK(g.at(0, 0) == 4);
  CHECK(g.at(0, 1) == 0);
  const Tensor mx = masked_max_rows(Tensor::from(3, 1, {9, 2, 4}), {false, true, true});
  CHECK(mx.item() == 4);
  const Tensor none = masked_mean_rows(Tensor::from(2, 1, {9, 2}), {false, false});
  CHECK(none.item() == 0);
}

TEST_CASE("shape errors throw") {
  const Tensor a = Tensor::zeros(2, 3);
  CHECK_THROWS(matmul(a, a));
  CHECK_THROWS(add(a, Tensor::zeros(3, 2)));
  CHECK_THROWS(Tensor::from(2, 2, {1, 2, 3}));
  CHECK_THROWS(a.item());
}

TEST_CASE("gradients of binary primitives") {
  CounterRng rng(41);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  Tensor c = random_tensor(3, 4, rng);
  Tensor d = random_tensor(5, 4, rng);
  Tensor row = random_tensor(1, 4, rng);
  CHECK(gradient_error([&] { return readout(matmul(a, b), 1); }, {a, b}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(matmul_nt(a, d), 1); }, {a, d}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(add(a, c), 1); }, {a, c}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(sub(a, c), 1); }, {a, c}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(mul(a, c), 1); }, {a, c}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(add_row(a, row), 1); }, {a, row}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(mul_row(a, row), 1); }, {a, row}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(scale(a, -2.5), 1); }, {a}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(add_scalar(a, 0.3), 1); }, {a}) < kPrimitiveTol);
}

TEST_CASE("gradients of unary primitives") {
  CounterRng rng(42);
  CHECK(check_unary(relu, away_from_zero(3, 3, rng)) < kPrimitiveTol);
  CHECK(check_unary(sigmoid, random_tensor(3, 3, rng)) < kPrimitiveTol);
  CHECK(check_unary(exp, random_tensor(3, 3, rng)) < kPrimitiveTol);
  CHECK(check_unary(log, random_tensor(3, 3, rng, 0.2, 2.0)) < kPrimitiveTol);
  CHECK(check_unary(square, random_tensor(3, 3, rng)) < kPrimitiveTol);
  CHECK(check_unary(sqrt, random_tensor(3, 3, rng, 0.2, 2.0)) < kPrimitiveTol);
  CHECK(check_unary(reciprocal, random_tensor(3, 3, rng, 0.5, 2.0)) < kPrimitiveTol);
  CHECK(check_unary(transpose, random_tensor(2, 5, rng)) < kPrimitiveTol);
  CHECK(check_unary(mean_rows, random_tensor(4, 3, rng)) < kPrimitiveTol);
  Tensor x = random_tensor(3, 4, rng);
  CHECK(gradient_error([&] { return sum(x); }, {x}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return mean(square(x)); }, {x}) < kPrimitiveTol);
}

TEST_CASE("gradients of structural primitives") {
  CounterRng rng(43);
  Tensor a = random_tensor(2, 3, rng);
  Tensor b = random_tensor(4, 3, rng);
  Tensor c = random_tensor(2, 2, rng);
  CHECK(gradient_error([&] { return readout(concat_rows({a, b}), 2); }, {a, b}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(concat_cols({a, c}), 2); }, {a, c}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(slice_rows(b, 1, 2), 2); }, {b}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(slice_cols(b, 1, 2), 2); }, {b}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(reshape(b, 3, 4), 2); }, {b}) < kPrimitiveTol);
  // repeated indices accumulate
  CHECK(gradient_error([&] { return readout(gather(a, 2, 4, {0, 5, -1, 0, 2, 2, 1, -1}), 2); }, {a}) <
        kPrimitiveTol);
}

TEST_CASE("gradients of softmax, normalization and masked pooling") {
  CounterRng rng(44);
  Tensor a = random_tensor(3, 4, rng, -2.0, 2.0);
  const std::vector<bool> mask{true, false, true, true, false, true, true, true, false, false, false, false};
  CHECK(gradient_error([&] { return readout(softmax_rows(a), 3); }, {a}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(softmax_rows(a, mask), 3); }, {a}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(log_softmax_rows(a), 3); }, {a}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(log_softmax_rows(a, mask), 3); }, {a}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(l2_normalize_rows(a), 3); }, {a}) < kPrimitiveTol);
  // distinct values so the max is unique
  Tensor p = Tensor::from(4, 2, {0.1, 0.9, 0.5, -0.3, 0.8, 0.2, -0.6, 0.4}, true);
  const std::vector<bool> rows{true, true, false, true};
  CHECK(gradient_error([&] { return readout(masked_max_rows(p, rows), 3); }, {p}) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(masked_mean_rows(p, rows), 3); }, {p}) < kPrimitiveTol);
}

TEST_CASE("fully masked softmax row is zero with zero gradient") {
  Tensor a = Tensor::from(2, 2, {1, 2, 3, 4}, true);
  const Tensor s = softmax_rows(a, {false, false, true, true});
  CHECK(s.at(0, 0) == 0.0);
  CHECK(s.at(0, 1) == 0.0);
  backward(readout(s, 5));
  CHECK(a.grad()[0] == 0.0);
  CHECK(a.grad()[1] == 0.0);
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
  Tensor x = Tensor::from(1, 1, {3.0}, true);
  backward(add(mul(x, x), x));
  CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("layer gradients") {
  CounterRng rng(45);
  ParameterSet ps;
  const Linear lin(ps, "lin", 3, 2, Init::kXavierUniform, rng);
  const Mlp mlp(ps, "mlp", {3, 5, 4, 2}, rng);
  const MultiHeadAttention mha(ps, "mha", 4, 2, rng);
  // nonzero biases so their gradients are exercised too
  for (auto& t : ps.tensors())
    for (auto& v : t.mutable_values()) v += rng.uniform(-0.1, 0.1);
  Tensor x = random_tensor(5, 3, rng);
  Tensor q = random_tensor(3, 4, rng);
  Tensor kv = random_tensor(6, 4, rng);
  const std::vector<bool> key_mask{true, true, false, true, false, true};
  std::vector<Tensor> all = ps.tensors();
  all.push_back(x);
  CHECK(gradient_error([&] { return readout(lin(x), 6); }, all) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(mlp(x), 6); }, all) < kPrimitiveTol);
  std::vector<Tensor> att = ps.tensors();
  att.push_back(q);
  att.push_back(kv);
  CHECK(gradient_error([&] { return readout(mha(q, kv, kv, key_mask), 6); }, att) < kPrimitiveTol);
  CHECK(gradient_error([&] { return readout(mha(kv, kv, kv), 6); }, att) < kPrimitiveTol);
}

TEST_CASE("attention ignores masked keys") {
  CounterRng rng(46);
  ParameterSet ps;
  const MultiHeadAttention mha(ps, "mha", 4, 2, rng);
  const Tensor q = random_tensor(2, 4, rng);
  const Tensor kv = random_tensor(3, 4, rng);
  std::vector<double> changed(kv.values().begin(), kv.values().end());
  for (std::size_t c = 0; c < 4; ++c) changed[4 + c] = 100.0;
  const Tensor kv2 = Tensor::from(3, 4, changed);
  const std::vector<bool> mask{true, false, true};
  const Tensor a = mha(q, kv, kv, mask);
  const Tensor b = mha(q, kv2, kv2, mask);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("checkpoint round trip is bit exact") {
  CounterRng rng(47);
  ParameterSet ps;
  ps.create("a.weight", 3, 2, Init::kKaimingUniform, rng);
  ps.create("a.bias", 1, 2, Init::kZeros, rng);
  const auto path = std::filesystem::temp_directory_path() / "topocl_ps.bin";
  ps.save(path);
  const ParameterSet back = ParameterSet::read(path);
  REQUIRE(back.names() == ps.names());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(back.tensors()[i].rows() == ps.tensors()[i].rows());
    for (std::size_t k = 0; k < ps.tensors()[i].size(); ++k)
      CHECK(back.tensors()[i].values()[k] == ps.tensors()[i].values()[k]);
  }
  ParameterSet wrong;
  wrong.create("a.weight", 2, 2, Init::kZeros, rng);
  CHECK_THROWS(wrong.load(path));
}

TEST_CASE("adamw first step matches the closed form") {
  CounterRng rng(48);
  ParameterSet ps;
  Tensor w = ps.create("w", 2, 1, Init::kZeros, rng);
  Tensor b = ps.create("b", 1, 1, Init::kZeros, rng);
  w.mutable_values()[0] = 1.0;
  w.mutable_values()[1] = -2.0;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(ps, cfg);
  backward(add(sum(mul(w, Tensor::from(2, 1, {3.0, -4.0}))), scale(b, 2.0)));
  opt.step();
  // bias-corrected first step moves each entry by lr * g / (|g| + eps)
  const double eps_term = 3.0 / (3.0 + 1e-8);
  CHECK(w.values()[0] == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0 - 0.1 * eps_term).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(-2.0 + 0.1 * 0.5 * 2.0 + 0.1 * (4.0 / (4.0 + 1e-8))).epsilon(1e-12));
  // single-row parameters are biases: no decay
  CHECK(b.values()[0] == doctest::Approx(-0.1 * (2.0 / (2.0 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(1.0, 0, 10) == 1.0);
  CHECK(cosine_lr(1.0, 5, 10) == doctest::Approx(0.5));
  CHECK(cosine_lr(1.0, 10, 10) == doctest::Approx(0.0));
}
